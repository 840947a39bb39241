#include "avc/model/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <type_traits>

#include "avc/core/binio.hpp"
#include "avc/core/error.hpp"

namespace avc {

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

bool selected(const std::string& name, const std::vector<std::string>& prefixes) {
  if (prefixes.empty()) return true;
  return std::any_of(prefixes.begin(), prefixes.end(),
                     [&](const std::string& p) { return name.rfind(p, 0) == 0; });
}

template <class T>
CheckpointTensor to_entry(const std::string& name, bool buffer, const Tensor<T>& t) {
  CheckpointTensor e;
  e.name = name;
  e.buffer = buffer;
  e.dtype = dtype_of<T>();
  e.shape = t.shape();
  e.raw.resize(t.numel() * sizeof(T));
  std::memcpy(e.raw.data(), t.data().data(), e.raw.size());
  return e;
}

template <class T>
void copy_into(Tensor<T>& t, const CheckpointTensor& e) {
  if (e.shape != t.shape()) {
    throw Error("checkpoint tensor " + e.name + " has shape " + shape_str(e.shape) + ", model expects " +
                shape_str(t.shape()));
  }
  auto dst = t.mutable_data();
  if (e.dtype == dtype_of<T>()) {
    std::memcpy(dst.data(), e.raw.data(), e.raw.size());
  } else if (e.dtype == DType::f32) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      float v;
      std::memcpy(&v, e.raw.data() + i * 4, 4);
      dst[i] = T(v);
    }
  } else {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      double v;
      std::memcpy(&v, e.raw.data() + i * 8, 8);
      dst[i] = T(v);
    }
  }
}

}  // namespace

KeyValues model_config_to_kv(const ModelConfig& config) {
  const EncoderConfig& e = config.encoder;
  KeyValues kv;
  kv.set("architecture", to_string(e.architecture));
  kv.set("visual_channels", join_sizes(e.visual_channels));
  kv.set("audio_channels", join_sizes(e.audio_channels));
  kv.set("n_attention_taps", std::to_string(e.n_attention_taps));
  kv.set("embed_dim", std::to_string(e.embed_dim));
  kv.set("hidden_dim", std::to_string(e.hidden_dim));
  kv.set("width_scale", format_double(e.width_scale));
  kv.set("compatibility", to_string(e.compatibility));
  kv.set("visual_size", std::to_string(e.visual_size));
  kv.set("audio_mels", std::to_string(e.audio_mels));
  kv.set("audio_frames", std::to_string(e.audio_frames));
  kv.set("with_head", config.with_head ? "true" : "false");
  kv.set("projector", to_string(config.projector));
  kv.set("seed", std::to_string(config.seed));
  return kv;
}

ModelConfig model_config_from_kv(const KeyValues& kv) {
  ModelConfig c;
  EncoderConfig& e = c.encoder;
  e.architecture = parse_architecture(kv.get_or("architecture", to_string(e.architecture)));
  e.visual_channels = kv.get_sizes("visual_channels", e.visual_channels);
  e.audio_channels = kv.get_sizes("audio_channels", e.audio_channels);
  e.n_attention_taps = std::size_t(kv.get_int("n_attention_taps", std::int64_t(e.n_attention_taps)));
  e.embed_dim = std::size_t(kv.get_int("embed_dim", std::int64_t(e.embed_dim)));
  e.hidden_dim = std::size_t(kv.get_int("hidden_dim", std::int64_t(e.hidden_dim)));
  e.width_scale = kv.get_double("width_scale", e.width_scale);
  e.compatibility = parse_compatibility(kv.get_or("compatibility", to_string(e.compatibility)));
  e.visual_size = std::size_t(kv.get_int("visual_size", std::int64_t(e.visual_size)));
  e.audio_mels = std::size_t(kv.get_int("audio_mels", std::int64_t(e.audio_mels)));
  e.audio_frames = std::size_t(kv.get_int("audio_frames", std::int64_t(e.audio_frames)));
  c.with_head = kv.get_bool("with_head", c.with_head);
  c.projector = parse_projector(kv.get_or("projector", to_string(c.projector)));
  c.seed = std::uint64_t(kv.get_int("seed", 0));
  return c;
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  binio::Writer w;
  w.bytes("AVCK", 4);
  w.u32(Checkpoint::kVersion);
  w.str(model_config_to_kv(ckpt.config).to_text());
  w.str(ckpt.meta.to_text());
  w.u32(std::uint32_t(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.str(t.name);
    w.u8(t.buffer ? 1 : 0);
    w.u8(std::uint8_t(t.dtype));
    w.u8(std::uint8_t(t.shape.size()));
    for (std::size_t e : t.shape) w.u32(std::uint32_t(e));
    w.bytes(t.raw.data(), t.raw.size());
  }
  w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  binio::Reader r = binio::Reader::load(path);
  char magic[4];
  if (r.remaining() < 4) throw DataError("not a checkpoint file: " + path.string());
  r.bytes(magic, 4);
  if (std::memcmp(magic, "AVCK", 4) != 0) throw DataError("not a checkpoint file: " + path.string());
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  }
  Checkpoint ckpt;
  try {
    ckpt.config = model_config_from_kv(KeyValues::parse(r.str(), path.string()));
    ckpt.meta = KeyValues::parse(r.str(), path.string());
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.str();
    t.buffer = r.u8() != 0;
    const std::uint8_t dt = r.u8();
    if (dt != std::uint8_t(DType::f32) && dt != std::uint8_t(DType::f64)) {
      throw DataError("bad dtype for tensor " + t.name + " in " + path.string());
    }
    t.dtype = DType(dt);
    const std::size_t rank = r.u8();
    for (std::size_t k = 0; k < rank; ++k) t.shape.push_back(r.u32());
    t.raw.resize(numel_of(t.shape) * (t.dtype == DType::f32 ? 4 : 8));
    r.bytes(t.raw.data(), t.raw.size());
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw DataError("trailing bytes in checkpoint " + path.string());
  return ckpt;
}

template <class T>
Checkpoint capture_checkpoint(const AvModel<T>& model, KeyValues meta) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.meta = std::move(meta);
  for (const auto& p : model.params().parameters()) ckpt.tensors.push_back(to_entry(p.name, false, p.tensor));
  for (const auto& b : model.params().buffers()) ckpt.tensors.push_back(to_entry(b.name, true, b.tensor));
  return ckpt;
}

template <class T>
void restore_checkpoint(AvModel<T>& model, const Checkpoint& ckpt, const std::vector<std::string>& prefixes) {
  auto load = [&](const std::string& name, Tensor<T>& t) {
    if (!selected(name, prefixes)) return;
    const CheckpointTensor* e = ckpt.find(name);
    if (!e) throw Error("checkpoint lacks tensor " + name + " required by the model");
    copy_into(t, *e);
  };
  for (auto& p : model.params().parameters()) load(p.name, p.tensor);
  for (auto& b : model.params().buffers()) load(b.name, b.tensor);
}

template <class T>
std::unique_ptr<AvModel<T>> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<AvModel<T>>(ckpt.config);
  restore_checkpoint(*model, ckpt);
  return model;
}

template Checkpoint capture_checkpoint(const AvModel<float>&, KeyValues);
template Checkpoint capture_checkpoint(const AvModel<double>&, KeyValues);
template void restore_checkpoint(AvModel<float>&, const Checkpoint&, const std::vector<std::string>&);
template void restore_checkpoint(AvModel<double>&, const Checkpoint&, const std::vector<std::string>&);
template std::unique_ptr<AvModel<float>> model_from_checkpoint(const Checkpoint&);
template std::unique_ptr<AvModel<double>> model_from_checkpoint(const Checkpoint&);

}  // namespace avc
