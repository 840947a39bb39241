#include "avc/model/encoder.hpp"

#include <cmath>
#include <string>

#include "avc/core/error.hpp"
#include "avc/core/init.hpp"

namespace avc {

const char* to_string(Stream s) { return s == Stream::visual ? "visual" : "audio"; }
const char* to_string(Architecture a) { return a == Architecture::baseline ? "baseline" : "attention"; }
const char* to_string(Compatibility c) { return c == Compatibility::additive ? "additive" : "dot"; }

const char* to_string(ProjectorKind p) {
  switch (p) {
    case ProjectorKind::none: return "none";
    case ProjectorKind::linear: return "linear";
    case ProjectorKind::nonlinear: return "nonlinear";
  }
  return "none";
}

Architecture parse_architecture(const std::string& text) {
  if (text == "baseline") return Architecture::baseline;
  if (text == "attention") return Architecture::attention;
  throw Error("unknown architecture '" + text + "' (expected baseline or attention)");
}

Compatibility parse_compatibility(const std::string& text) {
  if (text == "additive") return Compatibility::additive;
  if (text == "dot") return Compatibility::dot;
  throw Error("unknown compatibility '" + text + "' (expected additive or dot)");
}

ProjectorKind parse_projector(const std::string& text) {
  if (text == "none") return ProjectorKind::none;
  if (text == "linear") return ProjectorKind::linear;
  if (text == "nonlinear") return ProjectorKind::nonlinear;
  throw Error("unknown projector '" + text + "' (expected none, linear or nonlinear)");
}

std::vector<std::size_t> EncoderConfig::channels(Stream stream) const {
  const auto& base = stream == Stream::visual ? visual_channels : audio_channels;
  std::vector<std::size_t> out;
  for (std::size_t c : base) {
    out.push_back(std::max<std::size_t>(1, std::size_t(std::llround(double(c) * width_scale))));
  }
  return out;
}

Shape EncoderConfig::input_shape(Stream stream, std::size_t batch) const {
  if (stream == Stream::visual) return {batch, 3, visual_size, visual_size};
  return {batch, 1, audio_mels, audio_frames};
}

std::vector<std::pair<std::size_t, std::size_t>> EncoderConfig::spatial_trace(Stream stream) const {
  const Shape in = input_shape(stream, 1);
  std::vector<std::pair<std::size_t, std::size_t>> out{{in[2], in[3]}};
  for (std::size_t b = 0; b < visual_channels.size(); ++b) {
    const auto [h, w] = out.back();
    out.emplace_back((h + 1) / 2, (w + 1) / 2);
  }
  return out;
}

void EncoderConfig::validate() const {
  if (visual_channels.empty() || audio_channels.empty()) throw Error("encoder needs at least one block");
  if (visual_channels.size() != audio_channels.size()) {
    throw Error("visual and audio trunks must have the same number of blocks");
  }
  if (!(width_scale > 0.0)) throw Error("width_scale must be positive");
  if (embed_dim < 1 || hidden_dim < 1) throw Error("embed_dim and hidden_dim must be at least 1");
  if (architecture == Architecture::attention &&
      (n_attention_taps < 1 || n_attention_taps > visual_channels.size())) {
    throw Error("n_attention_taps must be in [1, " + std::to_string(visual_channels.size()) + "], got " +
                std::to_string(n_attention_taps));
  }
  if (visual_size < 1 || audio_mels < 1 || audio_frames < 1) throw Error("input extents must be positive");
}

// ---------------------------------------------------------------- attention

template <class T>
Tensor<T> compatibility_scores(const Tensor<T>& local, const Tensor<T>& global, const Tensor<T>& u,
                               Compatibility kind) {
  const std::size_t n = local.dim(0), hw = local.dim(2) * local.dim(3);
  if (kind == Compatibility::dot) return spatial_dot(local, global);
  Tensor<T> s = conv2d(add_spatial(local, global), u, Tensor<T>(), 1, 0);
  return reshape(s, {n, hw});
}

template <class T>
Tensor<T> attend(const Tensor<T>& local, const Tensor<T>& scores, AttentionMaps<T>* maps) {
  Tensor<T> a = softmax(scores, 1);
  Tensor<T> g = spatial_weighted_sum(local, a);
  if (maps) {
    maps->weights.push_back(a);
    maps->attended.push_back(g);
  }
  return g;
}

template <class T>
AttentionMaps<T> attention_fuse(const std::vector<Tensor<T>>& projected_locals, const Tensor<T>& global,
                                const std::vector<Tensor<T>>& u, Compatibility kind) {
  if (projected_locals.empty()) throw Error("attention_fuse: need at least one local feature");
  if (u.size() != projected_locals.size()) throw Error("attention_fuse: one scorer per tap required");
  AttentionMaps<T> maps;
  for (std::size_t i = 0; i < projected_locals.size(); ++i) {
    const Tensor<T>& l = projected_locals[i];
    if (l.rank() != 4 || l.dim(1) != global.dim(1)) {
      throw ShapeError("attention_fuse: local " + std::to_string(i) + " has shape " + shape_str(l.shape()) +
                       ", global has " + shape_str(global.shape()));
    }
    Tensor<T> s = compatibility_scores(l, global, u[i], kind);
    maps.scores.push_back(s);
    attend(l, s, &maps);
  }
  maps.fused = concat_columns(maps.attended);
  return maps;
}

// ---------------------------------------------------------------- encoder

template <class T>
StreamEncoder<T>::StreamEncoder(const EncoderConfig& config, Stream stream, ParameterSet<T>& params,
                                const std::string& prefix, RngStream rng)
    : config_(config), stream_(stream) {
  config_.validate();
  const auto widths = config_.channels(stream);
  std::size_t in_c = stream == Stream::visual ? 3 : 1;
  for (std::size_t b = 0; b < widths.size(); ++b) {
    const std::string p = prefix + "block" + std::to_string(b + 1) + ".";
    const std::size_t c = widths[b];
    Block blk;
    blk.w1 = params.add_parameter(p + "conv1.weight", fan_in_uniform<T>({c, in_c, 3, 3}, in_c * 9, rng));
    blk.g1 = params.add_parameter(p + "bn1.gamma", Tensor<T>::full({c}, T(1)));
    blk.b1 = params.add_parameter(p + "bn1.beta", Tensor<T>::zeros({c}));
    blk.w2 = params.add_parameter(p + "conv2.weight", fan_in_uniform<T>({c, c, 3, 3}, c * 9, rng));
    blk.g2 = params.add_parameter(p + "bn2.gamma", Tensor<T>::full({c}, T(1)));
    blk.b2 = params.add_parameter(p + "bn2.beta", Tensor<T>::zeros({c}));
    blk.bn1.running_mean = params.add_buffer(p + "bn1.running_mean", Tensor<T>::zeros({c}));
    blk.bn1.running_var = params.add_buffer(p + "bn1.running_var", Tensor<T>::full({c}, T(1)));
    blk.bn2.running_mean = params.add_buffer(p + "bn2.running_mean", Tensor<T>::zeros({c}));
    blk.bn2.running_var = params.add_buffer(p + "bn2.running_var", Tensor<T>::full({c}, T(1)));
    blocks_.push_back(std::move(blk));
    in_c = c;
  }
  const std::size_t cg = widths.back();
  if (config_.architecture == Architecture::baseline) {
    fc1_w = params.add_parameter(prefix + "fc1.weight", fan_in_uniform<T>({config_.hidden_dim, cg}, cg, rng));
    fc1_b = params.add_parameter(prefix + "fc1.bias", Tensor<T>::zeros({config_.hidden_dim}));
    fc2_w = params.add_parameter(prefix + "fc2.weight",
                                 fan_in_uniform<T>({config_.embed_dim, config_.hidden_dim}, config_.hidden_dim, rng));
    fc2_b = params.add_parameter(prefix + "fc2.bias", Tensor<T>::zeros({config_.embed_dim}));
    return;
  }
  const std::size_t first = widths.size() - config_.n_attention_taps;
  for (std::size_t b = first; b < widths.size(); ++b) {
    const std::string p = prefix + "tap" + std::to_string(b + 1) + ".";
    Tap tap;
    tap.block = b;
    if (widths[b] != cg) {
      tap.proj_w = params.add_parameter(p + "proj.weight", fan_in_uniform<T>({cg, widths[b], 1, 1}, widths[b], rng));
      tap.proj_b = params.add_parameter(p + "proj.bias", Tensor<T>::zeros({cg}));
    }
    if (config_.compatibility == Compatibility::additive) {
      tap.u = params.add_parameter(p + "score.weight", fan_in_uniform<T>({1, cg, 1, 1}, cg, rng));
    }
    taps_.push_back(std::move(tap));
  }
  const std::size_t fused = cg * taps_.size();
  fc2_w = params.add_parameter(prefix + "fc.weight", fan_in_uniform<T>({config_.embed_dim, fused}, fused, rng));
  fc2_b = params.add_parameter(prefix + "fc.bias", Tensor<T>::zeros({config_.embed_dim}));
}

template <class T>
Tensor<T> StreamEncoder<T>::forward(const Tensor<T>& input, Mode mode) {
  return forward_trace(input, mode).embedding;
}

template <class T>
EncoderTrace<T> StreamEncoder<T>::forward_trace(const Tensor<T>& input, Mode mode) {
  const Shape expected = config_.input_shape(stream_, input.rank() == 4 ? input.dim(0) : 0);
  if (input.rank() != 4 || input.shape() != expected || input.dim(0) == 0) {
    throw ShapeError(std::string(to_string(stream_)) + " encoder expects input [N," +
                     std::to_string(expected[1]) + "," + std::to_string(expected[2]) + "," +
                     std::to_string(expected[3]) + "], got " + shape_str(input.shape()));
  }
  const bool attention = config_.architecture == Architecture::attention;
  EncoderTrace<T> trace;
  std::vector<Tensor<T>> pre_pool(blocks_.size());
  Tensor<T> x = input;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    Block& blk = blocks_[b];
    x = relu(batchnorm2d(conv2d(x, blk.w1, Tensor<T>(), 1, 1), blk.g1, blk.b1, blk.bn1, mode));
    x = relu(batchnorm2d(conv2d(x, blk.w2, Tensor<T>(), 1, 1), blk.g2, blk.b2, blk.bn2, mode));
    pre_pool[b] = x;
    trace.block_shapes.push_back(x.shape());
    // The attention head reads the last block before pooling, so its pool is skipped.
    if (attention && b + 1 == blocks_.size()) break;
    x = maxpool2d(pad_to_even(x));
  }

  if (!attention) {
    trace.global = global_avg_pool(x);
    Tensor<T> h = relu(linear(trace.global, fc1_w, fc1_b));
    trace.embedding = l2_normalize(linear(h, fc2_w, fc2_b));
    return trace;
  }

  trace.global = global_avg_pool(pre_pool.back());
  std::vector<Tensor<T>> scorers;
  for (const Tap& tap : taps_) {
    Tensor<T> l = pre_pool[tap.block];
    trace.locals.push_back(l);
    trace.projected.push_back(tap.proj_w.defined() ? conv2d(l, tap.proj_w, tap.proj_b, 1, 0) : l);
    scorers.push_back(tap.u);
  }
  trace.maps = attention_fuse(trace.projected, trace.global, scorers, config_.compatibility);
  trace.embedding = l2_normalize(linear(trace.maps.fused, fc2_w, fc2_b));
  return trace;
}

// ---------------------------------------------------------------- heads

template <class T>
CorrelationOutput<T> correlation_score(const Tensor<T>& e_v, const Tensor<T>& e_a, const Tensor<T>& w,
                                       const Tensor<T>& b) {
  CorrelationOutput<T> out;
  out.distance = row_distance(e_v, e_a);
  const std::size_t n = out.distance.dim(0);
  Tensor<T> z = reshape(scalar_affine(out.distance, w, b), {n, 1});
  out.logits = concat_columns(std::vector<Tensor<T>>{z, Tensor<T>::zeros({n, 1})});
  out.prob = column(softmax(out.logits, 1), 0);
  return out;
}

template <class T>
Tensor<T> project_contrastive(const Tensor<T>& e, ProjectorKind kind, const Tensor<T>& w1,
                              const Tensor<T>& b1, const Tensor<T>& w2, const Tensor<T>& b2) {
  switch (kind) {
    case ProjectorKind::linear: return linear(e, w1, b1);
    case ProjectorKind::nonlinear: return linear(relu(linear(e, w1, b1)), w2, b2);
    case ProjectorKind::none: break;
  }
  throw Error("project_contrastive: model has no projector");
}

// ---------------------------------------------------------------- model

template <class T>
AvModel<T>::AvModel(const ModelConfig& config)
    : config_(config),
      visual_(config.encoder, Stream::visual, params_, "visual.", RngStream(config.seed).fork(1)),
      audio_(config.encoder, Stream::audio, params_, "audio.", RngStream(config.seed).fork(2)) {
  if (config_.with_head) {
    head_w_ = params_.add_parameter("head.w", Tensor<T>::full({1}, T(kHeadInitW)));
    head_b_ = params_.add_parameter("head.b", Tensor<T>::full({1}, T(kHeadInitB)));
  }
  if (config_.projector != ProjectorKind::none) {
    RngStream rng = RngStream(config.seed).fork(3);
    const std::size_t d = config_.encoder.embed_dim;
    proj_w1_ = params_.add_parameter("projector.w1", fan_in_uniform<T>({d, d}, d, rng));
    proj_b1_ = params_.add_parameter("projector.b1", Tensor<T>::zeros({d}));
    if (config_.projector == ProjectorKind::nonlinear) {
      proj_w2_ = params_.add_parameter("projector.w2", fan_in_uniform<T>({d, d}, d, rng));
      proj_b2_ = params_.add_parameter("projector.b2", Tensor<T>::zeros({d}));
    }
  }
}

template <class T>
CorrelationOutput<T> AvModel<T>::correlate(const Tensor<T>& e_v, const Tensor<T>& e_a) const {
  if (!has_head()) throw Error("model has no correlation head");
  return correlation_score(e_v, e_a, head_w_, head_b_);
}

template <class T>
Tensor<T> AvModel<T>::project(const Tensor<T>& e) const {
  return project_contrastive(e, config_.projector, proj_w1_, proj_b1_, proj_w2_, proj_b2_);
}

#define AVC_INSTANTIATE_ENCODER(T)                                                                   \
  template Tensor<T> compatibility_scores(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                          Compatibility);                                            \
  template Tensor<T> attend(const Tensor<T>&, const Tensor<T>&, AttentionMaps<T>*);                  \
  template AttentionMaps<T> attention_fuse(const std::vector<Tensor<T>>&, const Tensor<T>&,          \
                                           const std::vector<Tensor<T>>&, Compatibility);            \
  template CorrelationOutput<T> correlation_score(const Tensor<T>&, const Tensor<T>&,                \
                                                  const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> project_contrastive(const Tensor<T>&, ProjectorKind, const Tensor<T>&,          \
                                         const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);      \
  template class StreamEncoder<T>;                                                                   \
  template class AvModel<T>;

AVC_INSTANTIATE_ENCODER(float)
AVC_INSTANTIATE_ENCODER(double)

}  // namespace avc
