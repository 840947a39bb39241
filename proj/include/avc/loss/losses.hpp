#pragma once

#include <cstddef>
#include <vector>

#include "avc/core/tensor.hpp"

namespace avc {

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDefaultMargin = 0.1;
inline constexpr double kDefaultTau = 0.5;

/// Mean binary cross-entropy of correlation probabilities [N] against 0/1
/// labels. Probabilities are clamped to [1e-7, 1 - 1e-7]; the gradient is
/// zero where the clamp is active.
template <class T>
Tensor<T> bce_loss(const Tensor<T>& prob, const std::vector<T>& labels);

/// Mean of y*d + (1-y)*max(0, m - d) over distances [N].
template <class T>
Tensor<T> margin_contrastive(const Tensor<T>& distance, const std::vector<T>& labels, double margin = kDefaultMargin);

/// Same loss computed from unit-norm embedding rows.
template <class T>
Tensor<T> margin_contrastive(const Tensor<T>& e_v, const Tensor<T>& e_a, const std::vector<T>& labels,
                             double margin = kDefaultMargin);

/// L = L_bce + L_m (unweighted).
template <class T>
Tensor<T> combined_loss(const Tensor<T>& bce, const Tensor<T>& margin);

/// S[i,k] = cos(z_v_i, z_a_k) / tau for [N,D] inputs -> [N,N].
template <class T>
Tensor<T> similarity_matrix(const Tensor<T>& z_v, const Tensor<T>& z_a, double tau = kDefaultTau);

/// Per-anchor terms from a logit matrix S [N,N] whose diagonal holds the
/// positives. Row i yields -S_ii + logsumexp over k of S_ik, where the sum
/// runs over k != i when `include_positive` is false (the printed NT-Xent)
/// and over all k otherwise (InfoNCE). `audio_anchored` uses columns instead.
template <class T>
Tensor<T> contrastive_terms(const Tensor<T>& logits, bool include_positive, bool audio_anchored = false);

/// Mean NT-Xent over visual anchors; with `symmetric` the audio-anchored mean
/// is averaged in. Requires N >= 2.
template <class T>
Tensor<T> nt_xent_batch(const Tensor<T>& z_v, const Tensor<T>& z_a, double tau = kDefaultTau, bool symmetric = false);

/// Mean InfoNCE (cross-entropy over all N candidates); options as nt_xent_batch.
template <class T>
Tensor<T> info_nce_batch(const Tensor<T>& z_v, const Tensor<T>& z_a, double tau = kDefaultTau, bool symmetric = false);

/// Batch losses from a precomputed logit matrix.
template <class T>
Tensor<T> nt_xent_from_logits(const Tensor<T>& logits, bool symmetric = false);
template <class T>
Tensor<T> info_nce_from_logits(const Tensor<T>& logits, bool symmetric = false);

}  // namespace avc
