#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "avc/core/keyvalue.hpp"
#include "avc/model/encoder.hpp"

namespace avc {

KeyValues model_config_to_kv(const ModelConfig& config);
/// Reads the keys written by model_config_to_kv; missing keys keep defaults.
ModelConfig model_config_from_kv(const KeyValues& kv);

struct CheckpointTensor {
  std::string name;
  bool buffer = false;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<std::uint8_t> raw;  // little-endian values, bit-exact
};

/// Layout (little-endian): "AVCK", u32 version, config text and metadata
/// text (both u32 length-prefixed `key = value` lines), u32 tensor count, then
/// per tensor: name (u32 length + bytes), kind u8 (0 parameter, 1 buffer),
/// dtype u8, rank u8, rank x u32 extents, raw values.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  ModelConfig config;
  KeyValues meta;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <class T>
Checkpoint capture_checkpoint(const AvModel<T>& model, KeyValues meta = {});

/// Copies every checkpoint tensor whose name starts with one of `prefixes`
/// (all tensors when empty) into `model`. Every model tensor under those
/// prefixes must be present with an identical shape, otherwise Error.
template <class T>
void restore_checkpoint(AvModel<T>& model, const Checkpoint& ckpt, const std::vector<std::string>& prefixes = {});

template <class T>
std::unique_ptr<AvModel<T>> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace avc
