#include "avc/loss/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "avc/core/error.hpp"
#include "avc/core/ops.hpp"

namespace avc {

namespace {

template <class T>
void check_labels(const std::vector<T>& labels, std::size_t n, const char* op) {
  if (labels.size() != n) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " predictions");
  }
  for (T y : labels) {
    if (y != T(0) && y != T(1)) throw Error(std::string(op) + ": labels must be 0 or 1");
  }
}

template <class T>
void require_vector(const Tensor<T>& t, const char* op) {
  if (t.rank() != 1) throw ShapeError(std::string(op) + ": expected a rank-1 tensor, got " + shape_str(t.shape()));
}

}  // namespace

template <class T>
Tensor<T> bce_loss(const Tensor<T>& prob, const std::vector<T>& labels) {
  require_vector(prob, "bce_loss");
  const std::size_t n = prob.numel();
  check_labels(labels, n, "bce_loss");
  const T lo = T(kProbClamp), hi = T(1) - T(kProbClamp);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(prob.data()[i], lo, hi);
    total -= labels[i] == T(1) ? std::log(p) : std::log(1.0 - p);
  }
  auto backward = [labels, lo, hi, n](detail::Node<T>& self) {
    detail::Node<T>* in = self.inputs[0].get();
    if (!in->requires_grad) return;
    auto& g = in->ensure_grad();
    const T scale = self.grad[0] / T(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T p = in->value[i];
      if (p < lo || p > hi) continue;
      g[i] += scale * (labels[i] == T(1) ? -T(1) / p : T(1) / (T(1) - p));
    }
  };
  return detail::make_result<T>({1}, {T(total / double(n))}, {prob.node()}, backward);
}

template <class T>
Tensor<T> margin_contrastive(const Tensor<T>& distance, const std::vector<T>& labels, double margin) {
  require_vector(distance, "margin_contrastive");
  if (!(margin > 0)) throw Error("margin_contrastive: margin must be positive");
  const std::size_t n = distance.numel();
  check_labels(labels, n, "margin_contrastive");
  const T m = T(margin);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = distance.data()[i];
    total += labels[i] == T(1) ? double(d) : double(std::max(T(0), m - d));
  }
  auto backward = [labels, m, n](detail::Node<T>& self) {
    detail::Node<T>* in = self.inputs[0].get();
    if (!in->requires_grad) return;
    auto& g = in->ensure_grad();
    const T scale = self.grad[0] / T(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] == T(1)) {
        g[i] += scale;
      } else if (m - in->value[i] > T(0)) {
        g[i] -= scale;
      }
    }
  };
  return detail::make_result<T>({1}, {T(total / double(n))}, {distance.node()}, backward);
}

template <class T>
Tensor<T> margin_contrastive(const Tensor<T>& e_v, const Tensor<T>& e_a, const std::vector<T>& labels, double margin) {
  return margin_contrastive(row_distance(e_v, e_a), labels, margin);
}

template <class T>
Tensor<T> combined_loss(const Tensor<T>& bce, const Tensor<T>& margin) {
  return add(bce, margin);
}

template <class T>
Tensor<T> similarity_matrix(const Tensor<T>& z_v, const Tensor<T>& z_a, double tau) {
  if (!(tau > 0)) throw Error("similarity_matrix: tau must be positive");
  if (z_v.rank() != 2 || z_a.shape() != z_v.shape()) {
    throw ShapeError("similarity_matrix: need equal [N,D] inputs, got " + shape_str(z_v.shape()) + " and " +
                     shape_str(z_a.shape()));
  }
  return scale(linear(l2_normalize(z_v), l2_normalize(z_a), Tensor<T>()), T(1.0 / tau));
}

template <class T>
Tensor<T> contrastive_terms(const Tensor<T>& logits, bool include_positive, bool audio_anchored) {
  if (logits.rank() != 2 || logits.dim(0) != logits.dim(1)) {
    throw ShapeError("contrastive loss: logits must be square, got " + shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0);
  if (n < 2) throw Error("contrastive loss: batch size must be at least 2, got " + std::to_string(n));
  for (T v : logits.data()) {
    if (std::isnan(v)) throw NumericError("contrastive loss: NaN similarity");
  }
  // Element (anchor i, candidate k) of the logit matrix.
  auto idx = [n, audio_anchored](std::size_t i, std::size_t k) { return audio_anchored ? k * n + i : i * n + k; };
  std::vector<T> terms(n);
  std::vector<T> probs(n * n, T(0));  // softmax over the candidate set, anchor-major
  const T* s = logits.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (include_positive || k != i) mx = std::max(mx, s[idx(i, k)]);
    }
    T acc = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (!include_positive && k == i) continue;
      probs[i * n + k] = std::exp(s[idx(i, k)] - mx);
      acc += probs[i * n + k];
    }
    for (std::size_t k = 0; k < n; ++k) probs[i * n + k] /= acc;
    terms[i] = -s[idx(i, i)] + mx + std::log(acc);
  }
  auto backward = [probs = std::move(probs), n, idx](detail::Node<T>& self) {
    detail::Node<T>* in = self.inputs[0].get();
    if (!in->requires_grad) return;
    auto& g = in->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const T gi = self.grad[i];
      for (std::size_t k = 0; k < n; ++k) g[idx(i, k)] += gi * probs[i * n + k];
      g[idx(i, i)] -= gi;
    }
  };
  return detail::make_result<T>({n}, std::move(terms), {logits.node()}, backward);
}

namespace {

template <class T>
Tensor<T> batch_loss(const Tensor<T>& logits, bool include_positive, bool symmetric) {
  Tensor<T> loss = mean(contrastive_terms(logits, include_positive, false));
  if (!symmetric) return loss;
  return scale(add(loss, mean(contrastive_terms(logits, include_positive, true))), T(0.5));
}

}  // namespace

template <class T>
Tensor<T> nt_xent_from_logits(const Tensor<T>& logits, bool symmetric) {
  return batch_loss(logits, false, symmetric);
}

template <class T>
Tensor<T> info_nce_from_logits(const Tensor<T>& logits, bool symmetric) {
  return batch_loss(logits, true, symmetric);
}

template <class T>
Tensor<T> nt_xent_batch(const Tensor<T>& z_v, const Tensor<T>& z_a, double tau, bool symmetric) {
  return nt_xent_from_logits(similarity_matrix(z_v, z_a, tau), symmetric);
}

template <class T>
Tensor<T> info_nce_batch(const Tensor<T>& z_v, const Tensor<T>& z_a, double tau, bool symmetric) {
  return info_nce_from_logits(similarity_matrix(z_v, z_a, tau), symmetric);
}

#define AVC_INSTANTIATE_LOSSES(T)                                                                 \
  template Tensor<T> bce_loss(const Tensor<T>&, const std::vector<T>&);                           \
  template Tensor<T> margin_contrastive(const Tensor<T>&, const std::vector<T>&, double);         \
  template Tensor<T> margin_contrastive(const Tensor<T>&, const Tensor<T>&, const std::vector<T>&, \
                                        double);                                                  \
  template Tensor<T> combined_loss(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> similarity_matrix(const Tensor<T>&, const Tensor<T>&, double);               \
  template Tensor<T> contrastive_terms(const Tensor<T>&, bool, bool);                             \
  template Tensor<T> nt_xent_from_logits(const Tensor<T>&, bool);                                 \
  template Tensor<T> info_nce_from_logits(const Tensor<T>&, bool);                                \
  template Tensor<T> nt_xent_batch(const Tensor<T>&, const Tensor<T>&, double, bool);             \
  template Tensor<T> info_nce_batch(const Tensor<T>&, const Tensor<T>&, double, bool);

AVC_INSTANTIATE_LOSSES(float)
AVC_INSTANTIATE_LOSSES(double)

}  // namespace avc
