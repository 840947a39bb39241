#include "avc/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "blas.hpp"

namespace avc {

namespace {

template <class T>
using NodeT = detail::Node<T>;

template <class T>
std::vector<std::shared_ptr<NodeT<T>>> nodes(std::initializer_list<const Tensor<T>*> ts) {
  std::vector<std::shared_ptr<NodeT<T>>> out;
  for (const Tensor<T>* t : ts) out.push_back(t && t->defined() ? t->node() : nullptr);
  return out;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  require(s.size() == rank, std::string(op) + ": " + what + " must have rank " +
                                std::to_string(rank) + ", got " + shape_str(s));
}

// Lays out receptive fields of one [C,H,W] image as a [C*kh*kw, Ho*Wo] matrix.
// Output columns [lo, hi) whose input column ox * stride + k - pad lies inside [0, w).
inline std::pair<std::size_t, std::size_t> valid_cols(std::size_t w, std::size_t k, std::size_t stride,
                                                      std::size_t pad, std::size_t wo) {
  std::size_t lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  if (w + pad <= k) return {0, 0};
  const std::size_t hi = std::min(wo, (w - 1 + pad - k) / stride + 1);
  return {std::min(lo, hi), hi};
}

template <class T>
void im2col(const T* x, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo,
            T* col) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* row = col + ((ci * kh + ki) * kw + kj) * ho * wo;
        const auto [lo, hi] = valid_cols(w, kj, stride, pad, wo);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) -
                          static_cast<std::ptrdiff_t>(pad);
          T* out = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(out, out + wo, T(0));
            continue;
          }
          const T* src = x + (ci * h + static_cast<std::size_t>(iy)) * w;
          std::fill(out, out + lo, T(0));
          if (stride == 1) {
            std::copy(src + (lo + kj - pad), src + (hi + kj - pad), out + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) out[ox] = src[ox * stride + kj - pad];
          }
          std::fill(out + hi, out + wo, T(0));
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho,
                std::size_t wo, T* x) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* row = col + ((ci * kh + ki) * kw + kj) * ho * wo;
        const auto [lo, hi] = valid_cols(w, kj, stride, pad, wo);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) -
                          static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = x + (ci * h + static_cast<std::size_t>(iy)) * w;
          const T* in = row + oy * wo;
          if (stride == 1) {
            T* d = dst + (lo + kj - pad);
            for (std::size_t ox = lo; ox < hi; ++ox) d[ox - lo] += in[ox];
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * stride + kj - pad] += in[ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- conv2d

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  require_rank(xs, 4, "conv2d", "input");
  require_rank(ws, 4, "conv2d", "weight");
  require(stride >= 1, "conv2d: stride must be positive");
  const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::size_t f = ws[0], kh = ws[2], kw = ws[3];
  require(ws[1] == c, "conv2d: input channels " + std::to_string(c) +
                          " do not match weight channels " + std::to_string(ws[1]));
  require(h + 2 * padding >= kh && w + 2 * padding >= kw,
          "conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
              " larger than padded input " + std::to_string(h + 2 * padding) + "x" +
              std::to_string(w + 2 * padding));
  if (bias.defined()) {
    require(bias.rank() == 1 && bias.dim(0) == f,
            "conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                std::to_string(f) + " filters");
  }
  const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::size_t wo = (w + 2 * padding - kw) / stride + 1;
  const std::size_t ck = c * kh * kw, hw = ho * wo;
  const bool direct = kh == 1 && kw == 1 && stride == 1 && padding == 0;

  std::vector<T> out(n * f * hw);
  std::vector<T> col(direct ? 0 : ck * hw);
  const T* x = input.data().data();
  const T* wt = weight.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    const T* xs_n = x + s * c * h * w;
    const T* cm = xs_n;
    if (!direct) {
      im2col(xs_n, c, h, w, kh, kw, stride, padding, ho, wo, col.data());
      cm = col.data();
    }
    T* y = out.data() + s * f * hw;
    if (bias.defined()) {
      for (std::size_t fi = 0; fi < f; ++fi) std::fill(y + fi * hw, y + (fi + 1) * hw, bias.data()[fi]);
    }
    blas::gemm(false, false, int(f), int(hw), int(ck), T(1), wt, int(ck), cm, int(hw),
               bias.defined() ? T(1) : T(0), y, int(hw));
  }

  auto backward = [=](NodeT<T>& self) {
    NodeT<T>* xin = self.inputs[0].get();
    NodeT<T>* win = self.inputs[1].get();
    NodeT<T>* bin = self.inputs[2].get();
    const T* dy = self.grad.data();
    std::vector<T> colbuf(direct ? 0 : ck * hw);
    std::vector<T> dcol(ck * hw);
    for (std::size_t s = 0; s < n; ++s) {
      const T* dys = dy + s * f * hw;
      const T* xs_n = xin->value.data() + s * c * h * w;
      if (win->requires_grad) {
        const T* cm = xs_n;
        if (!direct) {
          im2col(xs_n, c, h, w, kh, kw, stride, padding, ho, wo, colbuf.data());
          cm = colbuf.data();
        }
        blas::gemm(false, true, int(f), int(ck), int(hw), T(1), dys, int(hw), cm, int(hw), T(1),
                   win->ensure_grad().data(), int(ck));
      }
      if (xin->requires_grad) {
        T* dx = xin->ensure_grad().data() + s * c * h * w;
        if (direct) {
          blas::gemm(true, false, int(ck), int(hw), int(f), T(1), win->value.data(), int(ck), dys,
                     int(hw), T(1), dx, int(hw));
        } else {
          blas::gemm(true, false, int(ck), int(hw), int(f), T(1), win->value.data(), int(ck), dys,
                     int(hw), T(0), dcol.data(), int(hw));
          col2im_add(dcol.data(), c, h, w, kh, kw, stride, padding, ho, wo, dx);
        }
      }
      if (bin && bin->requires_grad) {
        auto& db = bin->ensure_grad();
        for (std::size_t fi = 0; fi < f; ++fi) {
          T acc = 0;
          for (std::size_t p = 0; p < hw; ++p) acc += dys[fi * hw + p];
          db[fi] += acc;
        }
      }
    }
  };
  return detail::make_result<T>({n, f, ho, wo}, std::move(out), nodes<T>({&input, &weight, &bias}),
                                backward);
}

// ---------------------------------------------------------------- pooling

template <class T>
Tensor<T> maxpool2d(const Tensor<T>& input) {
  const Shape& xs = input.shape();
  require_rank(xs, 4, "maxpool2d", "input");
  const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  require(h % 2 == 0 && w % 2 == 0,
          "maxpool2d: spatial extents must be even, got " + std::to_string(h) + "x" +
              std::to_string(w));
  const std::size_t ho = h / 2, wo = w / 2;
  std::vector<T> out(n * c * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  const T* x = input.data().data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* xp = x + plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (2 * oy) * w + 2 * ox;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t k : cand) {
          if (xp[k] > xp[best]) best = k;
        }
        const std::size_t o = (plane * ho + oy) * wo + ox;
        out[o] = xp[best];
        argmax[o] = plane * h * w + best;
      }
    }
  }
  auto backward = [argmax = std::move(argmax)](NodeT<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += self.grad[o];
  };
  return detail::make_result<T>({n, c, ho, wo}, std::move(out), nodes<T>({&input}), backward);
}

template <class T>
Tensor<T> pad_to_even(const Tensor<T>& input) {
  const Shape& xs = input.shape();
  require_rank(xs, 4, "pad_to_even", "input");
  const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::size_t hp = h + h % 2, wp = w + w % 2;
  if (hp == h && wp == w) return input;
  std::vector<T> out(n * c * hp * wp, T(0));
  const T* x = input.data().data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    for (std::size_t y = 0; y < h; ++y) {
      std::copy_n(x + (plane * h + y) * w, w, out.data() + (plane * hp + y) * wp);
    }
  }
  auto backward = [=](NodeT<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          dx[(plane * h + y) * w + xx] += self.grad[(plane * hp + y) * wp + xx];
        }
      }
    }
  };
  return detail::make_result<T>({n, c, hp, wp}, std::move(out), nodes<T>({&input}), backward);
}

// ---------------------------------------------------------------- batchnorm

template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, Mode mode, double eps, double momentum) {
  const Shape& xs = input.shape();
  require_rank(xs, 4, "batchnorm2d", "input");
  const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  require(gamma.numel() == c && beta.numel() == c,
          "batchnorm2d: gamma/beta must have " + std::to_string(c) + " entries");
  require(state.running_mean.numel() == c && state.running_var.numel() == c,
          "batchnorm2d: running statistics must have " + std::to_string(c) + " entries");
  const std::size_t m = n * hw;
  if (mode == Mode::train && m < 2) {
    throw ShapeError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                     std::to_string(m));
  }

  const T* x = input.data().data();
  std::vector<T> out(input.numel());
  std::vector<T> xhat(mode == Mode::train ? input.numel() : 0);
  std::vector<T> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mu, var;
    if (mode == Mode::train) {
      double s = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      mu = s / double(m);
      double ss = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      var = ss / double(m);
      auto rm = state.running_mean.mutable_data();
      auto rv = state.running_var.mutable_data();
      rm[ch] = T((1 - momentum) * rm[ch] + momentum * mu);
      rv[ch] = T((1 - momentum) * rv[ch] + momentum * ss / double(m - 1));
    } else {
      mu = state.running_mean.data()[ch];
      var = state.running_var.data()[ch];
    }
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[ch] = T(istd);
    const double g = gamma.data()[ch], bt = beta.data()[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xh = (x[off + i] - mu) * istd;
        if (mode == Mode::train) xhat[off + i] = T(xh);
        out[off + i] = T(g * xh + bt);
      }
    }
  }

  Tensor<T> running_mean = state.running_mean;
  auto backward = [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](NodeT<T>& self) {
    NodeT<T>* xin = self.inputs[0].get();
    NodeT<T>* gin = self.inputs[1].get();
    NodeT<T>* bin = self.inputs[2].get();
    const T* dy = self.grad.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum_dy = 0, sum_dy_xh = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t off = (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double xh = mode == Mode::train
                                ? double(xhat[off + i])
                                : (xin->value[off + i] - running_mean.data()[ch]) * inv_std[ch];
          sum_dy += dy[off + i];
          sum_dy_xh += dy[off + i] * xh;
        }
      }
      if (gin->requires_grad) gin->ensure_grad()[ch] += T(sum_dy_xh);
      if (bin->requires_grad) bin->ensure_grad()[ch] += T(sum_dy);
      if (!xin->requires_grad) continue;
      auto& dx = xin->ensure_grad();
      const double g = gin->value[ch];
      const double istd = inv_std[ch];
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t off = (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          if (mode == Mode::train) {
            dx[off + i] += T(g * istd *
                             (dy[off + i] - sum_dy / double(m) - xhat[off + i] * sum_dy_xh / double(m)));
          } else {
            dx[off + i] += T(g * istd * dy[off + i]);
          }
        }
      }
    }
  };
  return detail::make_result<T>(xs, std::move(out), nodes<T>({&input, &gamma, &beta}), backward);
}

// ---------------------------------------------------------------- linear & pointwise

template <class T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(input.shape(), 2, "linear", "input");
  require_rank(weight.shape(), 2, "linear", "weight");
  const std::size_t n = input.dim(0), d = input.dim(1), k = weight.dim(0);
  require(weight.dim(1) == d, "linear: input dim " + std::to_string(d) +
                                  " does not match weight dim " + std::to_string(weight.dim(1)));
  if (bias.defined()) {
    require(bias.rank() == 1 && bias.dim(0) == k,
            "linear: bias shape " + shape_str(bias.shape()) + " does not match " +
                std::to_string(k) + " outputs");
  }
  std::vector<T> out(n * k, T(0));
  if (bias.defined()) {
    for (std::size_t r = 0; r < n; ++r) std::copy_n(bias.data().data(), k, out.data() + r * k);
  }
  blas::gemm(false, true, int(n), int(k), int(d), T(1), input.data().data(), int(d),
             weight.data().data(), int(d), T(1), out.data(), int(k));
  auto backward = [=](NodeT<T>& self) {
    NodeT<T>* xin = self.inputs[0].get();
    NodeT<T>* win = self.inputs[1].get();
    NodeT<T>* bin = self.inputs[2].get();
    const T* dy = self.grad.data();
    if (xin->requires_grad) {
      blas::gemm(false, false, int(n), int(d), int(k), T(1), dy, int(k), win->value.data(), int(d),
                 T(1), xin->ensure_grad().data(), int(d));
    }
    if (win->requires_grad) {
      blas::gemm(true, false, int(k), int(d), int(n), T(1), dy, int(k), xin->value.data(), int(d),
                 T(1), win->ensure_grad().data(), int(d));
    }
    if (bin && bin->requires_grad) {
      auto& db = bin->ensure_grad();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < k; ++j) db[j] += dy[r * k + j];
      }
    }
  };
  return detail::make_result<T>({n, k}, std::move(out), nodes<T>({&input, &weight, &bias}),
                                backward);
}

template <class T>
Tensor<T> relu(const Tensor<T>& input) {
  std::vector<T> out(input.data().begin(), input.data().end());
  for (T& v : out) v = v > T(0) ? v : T(0);
  auto backward = [](NodeT<T>& self) {
    NodeT<T>* xin = self.inputs[0].get();
    auto& dx = xin->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xin->value[i] > T(0)) dx[i] += self.grad[i];
    }
  };
  return detail::make_result<T>(input.shape(), std::move(out), nodes<T>({&input}), backward);
}

template <class T>
Tensor<T> softmax(const Tensor<T>& input, std::size_t axis) {
  const Shape& s = input.shape();
  require(axis < s.size(), "softmax: axis " + std::to_string(axis) + " out of range for " +
                               shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const T* x = input.data().data();
  for (std::size_t i = 0; i < input.numel(); ++i) {
    if (std::isnan(x[i])) throw NumericError("softmax: NaN input at flat index " + std::to_string(i));
  }
  std::vector<T> out(input.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = x[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, x[base + j * inner]);
      double total = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(double(x[base + j * inner] - mx));
        out[base + j * inner] = T(e);
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] = T(out[base + j * inner] / total);
    }
  }
  auto backward = [=](NodeT<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    const auto& y = self.value;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0;
        for (std::size_t j = 0; j < len; ++j) dot += self.grad[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t k = base + j * inner;
          dx[k] += T(y[k] * (self.grad[k] - dot));
        }
      }
    }
  };
  return detail::make_result<T>(s, std::move(out), nodes<T>({&input}), backward);
}

template <class T>
Tensor<T> l2_normalize(const Tensor<T>& input, double eps) {
  require_rank(input.shape(), 2, "l2_normalize", "input");
  const std::size_t n = input.dim(0), d = input.dim(1);
  const T* x = input.data().data();
  std::vector<T> out(n * d, T(0));
  std::vector<T> norms(n);
  for (std::size_t r = 0; r < n; ++r) {
    double ss = 0;
    for (std::size_t j = 0; j < d; ++j) ss += double(x[r * d + j]) * x[r * d + j];
    const double nr = std::sqrt(ss);
    norms[r] = T(nr);
    if (nr < eps) continue;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = T(x[r * d + j] / nr);
  }
  auto backward = [=, norms = std::move(norms)](NodeT<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    const auto& y = self.value;
    for (std::size_t r = 0; r < n; ++r) {
      if (norms[r] < eps) continue;
      double dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += double(y[r * d + j]) * self.grad[r * d + j];
      for (std::size_t j = 0; j < d; ++j) {
        dx[r * d + j] += T((self.grad[r * d + j] - y[r * d + j] * dot) / norms[r]);
      }
    }
  };
  return detail::make_result<T>({n, d}, std::move(out), nodes<T>({&input}), backward);
}

// ---------------------------------------------------------------- spatial helpers

template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  require_rank(input.shape(), 4, "global_avg_pool", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  std::vector<T> out(n * c);
  const T* x = input.data().data();
  for (std::size_t k = 0; k < n * c; ++k) {
    double s = 0;
    for (std::size_t p = 0; p < hw; ++p) s += x[k * hw + p];
    out[k] = T(s / double(hw));
  }
  auto backward = [=](NodeT<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (std::size_t k = 0; k < n * c; ++k) {
      const T g = T(self.grad[k] / T(hw));
      for (std::size_t p = 0; p < hw; ++p) dx[k * hw + p] += g;
    }
  };
  return detail::make_result<T>({n, c}, std::move(out), nodes<T>({&input}), backward);
}

namespace {
void require_spatial_pair(const Shape& fs, const Shape& vs, const char* op) {
  require_rank(fs, 4, op, "features");
  require_rank(vs, 2, op, "vector");
  require(vs[0] == fs[0] && vs[1] == fs[1],
          std::string(op) + ": vector " + shape_str(vs) + " does not match features " +
              shape_str(fs));
}
}  // namespace

template <class T>
Tensor<T> add_spatial(const Tensor<T>& features, const Tensor<T>& vec) {
  require_spatial_pair(features.shape(), vec.shape(), "add_spatial");
  const std::size_t nc = features.dim(0) * features.dim(1);
  const std::size_t hw = features.dim(2) * features.dim(3);
  std::vector<T> out(features.data().begin(), features.data().end());
  for (std::size_t k = 0; k < nc; ++k) {
    for (std::size_t p = 0; p < hw; ++p) out[k * hw + p] += vec.data()[k];
  }
  auto backward = [=](NodeT<T>& self) {
    NodeT<T>* fin = self.inputs[0].get();
    NodeT<T>* vin = self.inputs[1].get();
    if (fin->requires_grad) {
      auto& df = fin->ensure_grad();
      for (std::size_t i = 0; i < df.size(); ++i) df[i] += self.grad[i];
    }
    if (vin->requires_grad) {
      auto& dv = vin->ensure_grad();
      for (std::size_t k = 0; k < nc; ++k) {
        T s = 0;
        for (std::size_t p = 0; p < hw; ++p) s += self.grad[k * hw + p];
        dv[k] += s;
      }
    }
  };
  return detail::make_result<T>(features.shape(), std::move(out), nodes<T>({&features, &vec}),
                                backward);
}

template <class T>
Tensor<T> spatial_dot(const Tensor<T>& features, const Tensor<T>& vec) {
  require_spatial_pair(features.shape(), vec.shape(), "spatial_dot");
  const std::size_t n = features.dim(0), c = features.dim(1);
  const std::size_t hw = features.dim(2) * features.dim(3);
  const T* f = features.data().data();
  const T* v = vec.data().data();
  std::vector<T> out(n * hw, T(0));
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T vc = v[b * c + ch];
      const T* fp = f + (b * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) out[b * hw + p] += vc * fp[p];
    }
  }
  auto backward = [=](NodeT<T>& self) {
    NodeT<T>* fin = self.inputs[0].get();
    NodeT<T>* vin = self.inputs[1].get();
    for (std::size_t b = 0; b < n; ++b) {
      const T* g = self.grad.data() + b * hw;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t off = (b * c + ch) * hw;
        if (fin->requires_grad) {
          auto& df = fin->ensure_grad();
          const T vc = vin->value[b * c + ch];
          for (std::size_t p = 0; p < hw; ++p) df[off + p] += vc * g[p];
        }
        if (vin->requires_grad) {
          T s = 0;
          for (std::size_t p = 0; p < hw; ++p) s += fin->value[off + p] * g[p];
          vin->ensure_grad()[b * c + ch] += s;
        }
      }
    }
  };
  return detail::make_result<T>({n, hw}, std::move(out), nodes<T>({&features, &vec}), backward);
}

template <class T>
Tensor<T> spatial_weighted_sum(const Tensor<T>& features, const Tensor<T>& weights) {
  require_rank(features.shape(), 4, "spatial_weighted_sum", "features");
  require_rank(weights.shape(), 2, "spatial_weighted_sum", "weights");
  const std::size_t n = features.dim(0), c = features.dim(1);
  const std::size_t hw = features.dim(2) * features.dim(3);
  require(weights.dim(0) == n && weights.dim(1) == hw,
          "spatial_weighted_sum: weights " + shape_str(weights.shape()) +
              " do not match features " + shape_str(features.shape()));
  const T* f = features.data().data();
  const T* a = weights.data().data();
  std::vector<T> out(n * c);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* fp = f + (b * c + ch) * hw;
      T s = 0;
      for (std::size_t p = 0; p < hw; ++p) s += a[b * hw + p] * fp[p];
      out[b * c + ch] = s;
    }
  }
  auto backward = [=](NodeT<T>& self) {
    NodeT<T>* fin = self.inputs[0].get();
    NodeT<T>* ain = self.inputs[1].get();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T g = self.grad[b * c + ch];
        const std::size_t off = (b * c + ch) * hw;
        if (fin->requires_grad) {
          auto& df = fin->ensure_grad();
          for (std::size_t p = 0; p < hw; ++p) df[off + p] += g * ain->value[b * hw + p];
        }
        if (ain->requires_grad) {
          auto& da = ain->ensure_grad();
          for (std::size_t p = 0; p < hw; ++p) da[b * hw + p] += g * fin->value[off + p];
        }
      }
    }
  };
  return detail::make_result<T>({n, c}, std::move(out), nodes<T>({&features, &weights}), backward);
}

// ---------------------------------------------------------------- structural

template <class T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape) {
  require(numel_of(shape) == input.numel(),
          "reshape: cannot view " + shape_str(input.shape()) + " as " + shape_str(shape));
  std::vector<T> out(input.data().begin(), input.data().end());
  auto backward = [](NodeT<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
  };
  return detail::make_result<T>(std::move(shape), std::move(out), nodes<T>({&input}), backward);
}

template <class T>
Tensor<T> concat_columns(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat_columns: nothing to concatenate");
  const std::size_t n = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  std::vector<std::shared_ptr<NodeT<T>>> ins;
  for (const auto& p : parts) {
    require_rank(p.shape(), 2, "concat_columns", "part");
    require(p.dim(0) == n, "concat_columns: row count mismatch " + shape_str(p.shape()));
    widths.push_back(p.dim(1));
    total += p.dim(1);
    ins.push_back(p.node());
  }
  std::vector<T> out(n * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(parts[k].data().data() + r * widths[k], widths[k], out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  auto backward = [=](NodeT<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      NodeT<T>* in = self.inputs[k].get();
      if (in->requires_grad) {
        auto& dx = in->ensure_grad();
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < widths[k]; ++j) dx[r * widths[k] + j] += self.grad[r * total + off + j];
        }
      }
      off += widths[k];
    }
  };
  return detail::make_result<T>({n, total}, std::move(out), std::move(ins), backward);
}

template <class T>
Tensor<T> column(const Tensor<T>& input, std::size_t index) {
  require_rank(input.shape(), 2, "column", "input");
  const std::size_t n = input.dim(0), d = input.dim(1);
  require(index < d, "column: index " + std::to_string(index) + " out of range");
  std::vector<T> out(n);
  for (std::size_t r = 0; r < n; ++r) out[r] = input.data()[r * d + index];
  auto backward = [=](NodeT<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (std::size_t r = 0; r < n; ++r) dx[r * d + index] += self.grad[r];
  };
  return detail::make_result<T>({n}, std::move(out), nodes<T>({&input}), backward);
}

template <class T>
Tensor<T> row_distance(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "row_distance", "a");
  require(a.shape() == b.shape(), "row_distance: shapes " + shape_str(a.shape()) + " and " +
                                      shape_str(b.shape()) + " differ");
  const std::size_t n = a.dim(0), d = a.dim(1);
  std::vector<T> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    double ss = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = double(a.data()[r * d + j]) - b.data()[r * d + j];
      ss += diff * diff;
    }
    out[r] = T(std::sqrt(ss));
  }
  auto backward = [=](NodeT<T>& self) {
    NodeT<T>* ain = self.inputs[0].get();
    NodeT<T>* bin = self.inputs[1].get();
    for (std::size_t r = 0; r < n; ++r) {
      if (self.value[r] == T(0)) continue;
      const T scale = self.grad[r] / self.value[r];
      for (std::size_t j = 0; j < d; ++j) {
        const T g = scale * (ain->value[r * d + j] - bin->value[r * d + j]);
        if (ain->requires_grad) ain->ensure_grad()[r * d + j] += g;
        if (bin->requires_grad) bin->ensure_grad()[r * d + j] -= g;
      }
    }
  };
  return detail::make_result<T>({n}, std::move(out), nodes<T>({&a, &b}), backward);
}

template <class T>
Tensor<T> scalar_affine(const Tensor<T>& input, const Tensor<T>& scale_t, const Tensor<T>& shift) {
  require(scale_t.numel() == 1 && shift.numel() == 1, "scalar_affine: scale and shift must be scalars");
  const T s = scale_t.data()[0], t = shift.data()[0];
  std::vector<T> out(input.data().begin(), input.data().end());
  for (T& v : out) v = s * v + t;
  auto backward = [](NodeT<T>& self) {
    NodeT<T>* xin = self.inputs[0].get();
    NodeT<T>* sin = self.inputs[1].get();
    NodeT<T>* tin = self.inputs[2].get();
    double ds = 0, dt = 0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ds += double(self.grad[i]) * xin->value[i];
      dt += self.grad[i];
    }
    if (xin->requires_grad) {
      auto& dx = xin->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += sin->value[0] * self.grad[i];
    }
    if (sin->requires_grad) sin->ensure_grad()[0] += T(ds);
    if (tin->requires_grad) tin->ensure_grad()[0] += T(dt);
  };
  return detail::make_result<T>(input.shape(), std::move(out), nodes<T>({&input, &scale_t, &shift}),
                                backward);
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "add: shapes " + shape_str(a.shape()) + " and " +
                                      shape_str(b.shape()) + " differ");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto backward = [](NodeT<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      NodeT<T>* in = self.inputs[k].get();
      if (!in->requires_grad) continue;
      auto& dx = in->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
    }
  };
  return detail::make_result<T>(a.shape(), std::move(out), nodes<T>({&a, &b}), backward);
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "mul: shapes " + shape_str(a.shape()) + " and " +
                                      shape_str(b.shape()) + " differ");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto backward = [](NodeT<T>& self) {
    NodeT<T>* ain = self.inputs[0].get();
    NodeT<T>* bin = self.inputs[1].get();
    if (ain->requires_grad) {
      auto& da = ain->ensure_grad();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += self.grad[i] * bin->value[i];
    }
    if (bin->requires_grad) {
      auto& db = bin->ensure_grad();
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += self.grad[i] * ain->value[i];
    }
  };
  return detail::make_result<T>(a.shape(), std::move(out), nodes<T>({&a, &b}), backward);
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v *= factor;
  auto backward = [factor](NodeT<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * self.grad[i];
  };
  return detail::make_result<T>(a.shape(), std::move(out), nodes<T>({&a}), backward);
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  double s = 0;
  for (T v : a.data()) s += v;
  auto backward = [](NodeT<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (T& g : dx) g += self.grad[0];
  };
  return detail::make_result<T>({1}, {T(s)}, nodes<T>({&a}), backward);
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / T(a.numel()));
}

template <class T>
Tensor<T> stack(const std::vector<Tensor<T>>& items) {
  require(!items.empty(), "stack: nothing to stack");
  Shape shape = items[0].shape();
  std::vector<T> out;
  out.reserve(items.size() * items[0].numel());
  for (const auto& t : items) {
    require(t.shape() == shape, "stack: shape " + shape_str(t.shape()) + " differs from " +
                                    shape_str(shape));
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  shape.insert(shape.begin(), items.size());
  return Tensor<T>::from(std::move(shape), std::move(out));
}

#define AVC_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,  \
                            std::size_t);                                                        \
  template Tensor<T> maxpool2d(const Tensor<T>&);                                                \
  template Tensor<T> pad_to_even(const Tensor<T>&);                                              \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                 BatchNormState<T>&, Mode, double, double);                      \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                     \
  template Tensor<T> l2_normalize(const Tensor<T>&, double);                                     \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                          \
  template Tensor<T> add_spatial(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> spatial_dot(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> spatial_weighted_sum(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> concat_columns(const std::vector<Tensor<T>>&);                              \
  template Tensor<T> column(const Tensor<T>&, std::size_t);                                      \
  template Tensor<T> row_distance(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> scalar_affine(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> stack(const std::vector<Tensor<T>>&);

AVC_INSTANTIATE_OPS(float)
AVC_INSTANTIATE_OPS(double)

}  // namespace avc
