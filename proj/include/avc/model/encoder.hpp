#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "avc/core/ops.hpp"
#include "avc/core/rng.hpp"
#include "avc/core/tensor.hpp"

namespace avc {

enum class Stream { visual, audio };
enum class Architecture { baseline, attention };
/// How a local feature is scored against the global feature.
enum class Compatibility { additive, dot };

const char* to_string(Stream s);
const char* to_string(Architecture a);
const char* to_string(Compatibility c);
Architecture parse_architecture(const std::string& text);
Compatibility parse_compatibility(const std::string& text);

struct EncoderConfig {
  Architecture architecture = Architecture::attention;
  std::vector<std::size_t> visual_channels{64, 128, 256, 512};
  std::vector<std::size_t> audio_channels{32, 64, 128, 256};
  std::size_t n_attention_taps = 3;
  std::size_t embed_dim = 128;
  std::size_t hidden_dim = 512;  // baseline FC width
  double width_scale = 1.0;
  Compatibility compatibility = Compatibility::additive;
  // Input geometry. The visual stream takes [N,3,S,S], audio [N,1,mels,frames].
  std::size_t visual_size = 224;
  std::size_t audio_mels = 64;
  std::size_t audio_frames = 100;

  /// Block widths after width_scale: max(1, round(c * width_scale)).
  std::vector<std::size_t> channels(Stream stream) const;
  Shape input_shape(Stream stream, std::size_t batch) const;
  /// Spatial extents (H, W) of the input and after each block's pool; odd
  /// extents are zero-padded to even before pooling.
  std::vector<std::pair<std::size_t, std::size_t>> spatial_trace(Stream stream) const;
  /// Throws Error on inconsistent settings.
  void validate() const;
};

/// Per-tap attention outputs: raw scores w_i [N,HW], softmax maps A_i [N,HW]
/// and attended vectors g_i [N,C_g]; `fused` is their concatenation.
template <class T>
struct AttentionMaps {
  std::vector<Tensor<T>> scores;
  std::vector<Tensor<T>> weights;
  std::vector<Tensor<T>> attended;
  Tensor<T> fused;
};

/// Compatibility score per spatial position between projected local features
/// [N,C,H,W] and the global vector [N,C] -> [N,H*W]. Additive scoring applies
/// the 1x1 conv `u` [1,C,1,1] to (local + global); dot scoring ignores `u`.
template <class T>
Tensor<T> compatibility_scores(const Tensor<T>& local, const Tensor<T>& global, const Tensor<T>& u,
                               Compatibility kind);

/// Softmax over positions and the attention-weighted spatial sum. Appends to
/// `maps` (weights and attended; scores are recorded by the caller).
template <class T>
Tensor<T> attend(const Tensor<T>& local, const Tensor<T>& scores, AttentionMaps<T>* maps = nullptr);

/// Steps 1-3 over all taps given already projected locals.
template <class T>
AttentionMaps<T> attention_fuse(const std::vector<Tensor<T>>& projected_locals, const Tensor<T>& global,
                                const std::vector<Tensor<T>>& u, Compatibility kind);

/// Intermediate results of one forward pass.
template <class T>
struct EncoderTrace {
  std::vector<Shape> block_shapes;    // pre-pool output of each block
  std::vector<Tensor<T>> locals;      // l_i (attention only)
  std::vector<Tensor<T>> projected;   // l~_i (attention only)
  Tensor<T> global;                   // g
  AttentionMaps<T> maps;              // attention only
  Tensor<T> embedding;
};

/// One convolutional stream (visual or audio). Parameters live in the
/// ParameterSet passed at construction, under `prefix`.
template <class T>
class StreamEncoder {
 public:
  StreamEncoder(const EncoderConfig& config, Stream stream, ParameterSet<T>& params,
                const std::string& prefix, RngStream rng);

  Tensor<T> forward(const Tensor<T>& input, Mode mode);
  EncoderTrace<T> forward_trace(const Tensor<T>& input, Mode mode);

  Stream stream() const { return stream_; }
  const EncoderConfig& config() const { return config_; }

 private:
  struct Block {
    Tensor<T> w1, g1, b1, w2, g2, b2;
    BatchNormState<T> bn1, bn2;
  };
  struct Tap {
    std::size_t block = 0;
    Tensor<T> proj_w, proj_b;  // undefined when channels already match
    Tensor<T> u;
  };

  EncoderConfig config_;
  Stream stream_;
  std::vector<Block> blocks_;
  std::vector<Tap> taps_;
  Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;  // baseline: fc1 hidden, fc2 embed; attention: fc2 only
};

enum class ProjectorKind { none, linear, nonlinear };
const char* to_string(ProjectorKind p);
ProjectorKind parse_projector(const std::string& text);

/// Outputs of the scalar-distance correlation head.
template <class T>
struct CorrelationOutput {
  Tensor<T> distance;  // [N]
  Tensor<T> logits;    // [N,2] = [w*d + b, 0]
  Tensor<T> prob;      // [N] = softmax(logits)[:,0]
};

template <class T>
CorrelationOutput<T> correlation_score(const Tensor<T>& e_v, const Tensor<T>& e_a, const Tensor<T>& w,
                                       const Tensor<T>& b);

/// Contrastive projection head P: linear, or linear-ReLU-linear. Output is
/// not re-normalized.
template <class T>
Tensor<T> project_contrastive(const Tensor<T>& e, ProjectorKind kind, const Tensor<T>& w1,
                              const Tensor<T>& b1, const Tensor<T>& w2, const Tensor<T>& b2);

struct ModelConfig {
  EncoderConfig encoder;
  bool with_head = true;
  ProjectorKind projector = ProjectorKind::none;
  std::uint64_t seed = 0;
};

/// Deterministic initial values of the correlation head (boundary at d = 1).
inline constexpr double kHeadInitW = -2.0;
inline constexpr double kHeadInitB = 2.0;

/// Two-stream model: visual and audio encoders with disjoint parameter name
/// spaces ("visual.", "audio."), optional correlation head ("head.") and
/// optional contrastive projector ("projector.").
template <class T>
class AvModel {
 public:
  explicit AvModel(const ModelConfig& config);
  AvModel(const AvModel&) = delete;
  AvModel& operator=(const AvModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  StreamEncoder<T>& visual() { return visual_; }
  StreamEncoder<T>& audio() { return audio_; }

  Tensor<T> embed_visual(const Tensor<T>& frames, Mode mode) { return visual_.forward(frames, mode); }
  Tensor<T> embed_audio(const Tensor<T>& mels, Mode mode) { return audio_.forward(mels, mode); }

  CorrelationOutput<T> correlate(const Tensor<T>& e_v, const Tensor<T>& e_a) const;
  Tensor<T> project(const Tensor<T>& e) const;

  bool has_head() const { return head_w_.defined(); }
  const Tensor<T>& head_w() const { return head_w_; }
  const Tensor<T>& head_b() const { return head_b_; }

 private:
  ModelConfig config_;
  ParameterSet<T> params_;
  StreamEncoder<T> visual_;
  StreamEncoder<T> audio_;
  Tensor<T> head_w_, head_b_;
  Tensor<T> proj_w1_, proj_b1_, proj_w2_, proj_b2_;
};

extern template class StreamEncoder<float>;
extern template class StreamEncoder<double>;
extern template class AvModel<float>;
extern template class AvModel<double>;

}  // namespace avc
