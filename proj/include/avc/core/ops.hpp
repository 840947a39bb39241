#pragma once

#include <cstddef>
#include <vector>

#include "avc/core/tensor.hpp"

namespace avc {

enum class Mode { train, eval };

// Layer primitives. All ops are pure functions of their inputs (batchnorm2d
// additionally updates the running statistics it is handed in train mode).

/// 2-D convolution. `bias` may be undefined for a bias-free layer.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride = 1, std::size_t padding = 0);

/// 2x2 max pooling with stride 2. Ties route gradient to the first maximum
/// in row-major window order.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& input);

/// Zero-pads the bottom row / right column of a [N,C,H,W] tensor when the
/// extent is odd so that maxpool2d can be applied.
template <class T>
Tensor<T> pad_to_even(const Tensor<T>& input);

template <class T>
struct BatchNormState {
  Tensor<T> running_mean;  // [C]
  Tensor<T> running_var;   // [C], unbiased batch variance is accumulated
};

template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, Mode mode, double eps = 1e-5,
                      double momentum = 0.1);

/// y = x W^T + b with x [N,D], W [K,D], b [K] (b may be undefined).
template <class T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <class T>
Tensor<T> relu(const Tensor<T>& input);

/// Softmax along `axis` with max subtraction. Throws NumericError on NaN.
template <class T>
Tensor<T> softmax(const Tensor<T>& input, std::size_t axis);

/// Row-wise x / ||x||; rows with norm below eps map to zero.
template <class T>
Tensor<T> l2_normalize(const Tensor<T>& input, double eps = 1e-12);

// Structural helpers used by the encoders and heads.

/// [N,C,H,W] -> [N,C] spatial mean.
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& input);

/// [N,C,H,W] + [N,C] broadcast over spatial positions.
template <class T>
Tensor<T> add_spatial(const Tensor<T>& features, const Tensor<T>& vec);

/// [N,C,H,W] x [N,C] -> [N,H*W] per-position dot product.
template <class T>
Tensor<T> spatial_dot(const Tensor<T>& features, const Tensor<T>& vec);

/// sum_p weights[n,p] * features[n,:,p] -> [N,C]; weights are [N,H*W].
template <class T>
Tensor<T> spatial_weighted_sum(const Tensor<T>& features, const Tensor<T>& weights);

template <class T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape);

/// Concatenates rank-2 tensors along axis 1.
template <class T>
Tensor<T> concat_columns(const std::vector<Tensor<T>>& parts);

/// Column `index` of a rank-2 tensor, as a rank-1 tensor.
template <class T>
Tensor<T> column(const Tensor<T>& input, std::size_t index);

/// Row-wise Euclidean distance between two [N,D] tensors -> [N].
/// The subgradient at zero distance is taken as zero.
template <class T>
Tensor<T> row_distance(const Tensor<T>& a, const Tensor<T>& b);

/// scale * x + shift with scalar parameters (shape [1]).
template <class T>
Tensor<T> scalar_affine(const Tensor<T>& input, const Tensor<T>& scale, const Tensor<T>& shift);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <class T>
Tensor<T> sum(const Tensor<T>& a);

template <class T>
Tensor<T> mean(const Tensor<T>& a);

/// Stacks equally shaped tensors along a new leading axis (no gradient).
template <class T>
Tensor<T> stack(const std::vector<Tensor<T>>& items);

}  // namespace avc
