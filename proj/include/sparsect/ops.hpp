#pragma once

// Forward and backward kernels for the network operators. Kernels are pure
// functions of their arguments; precision emulation is layered on top by the
// tape (see autodiff.hpp).

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sparsect/error.hpp"
#include "sparsect/tensor.hpp"

namespace sparsect::ops {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeom {
  std::int64_t channels, height, width, kh, kw, stride, pad, out_h, out_w;
  std::int64_t rows() const { return channels * kh * kw; }
  std::int64_t cols() const { return out_h * out_w; }
};

template <class T>
void im2col(const T* img, const ConvGeom& g, T* col) {
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        T* dst = col + ((c * g.kh + i) * g.kw + j) * g.cols();
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t y = oy * g.stride - g.pad + i;
          T* row = dst + oy * g.out_w;
          if (y < 0 || y >= g.height) {
            std::fill(row, row + g.out_w, T(0));
            continue;
          }
          const T* src = img + (c * g.height + y) * g.width;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t x = ox * g.stride - g.pad + j;
            row[ox] = (x < 0 || x >= g.width) ? T(0) : src[x];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column entries back onto the image, summing
// overlaps. `img` must be zero-initialised by the caller.
template <class T>
void col2im(const T* col, const ConvGeom& g, T* img) {
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        const T* src = col + ((c * g.kh + i) * g.kw + j) * g.cols();
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t y = oy * g.stride - g.pad + i;
          if (y < 0 || y >= g.height) continue;
          T* dst = img + (c * g.height + y) * g.width;
          const T* row = src + oy * g.out_w;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t x = ox * g.stride - g.pad + j;
            if (x >= 0 && x < g.width) dst[x] += row[ox];
          }
        }
      }
    }
  }
}

template <class T>
void require_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite input");
}

inline void require_rank4(const Shape& s, const char* what) {
  if (s.rank() != 4) throw DimensionError(std::string(what) + ": expected rank-4 tensor, got " + s.str());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d

inline Shape conv2d_output_shape(const Shape& x, const Shape& w, int stride, int pad) {
  detail::require_rank4(x, "conv2d");
  detail::require_rank4(w, "conv2d weight");
  if (w.c() != x.c())
    throw DimensionError("conv2d: weight expects " + std::to_string(w.c()) + " input channels, got " + x.str());
  if (stride < 1 || pad < 0) throw ParameterError("conv2d: stride must be >= 1 and pad >= 0");
  if (w.h() < 1 || w.w() < 1) throw DimensionError("conv2d: empty kernel");
  if (x.h() + 2 * pad < w.h() || x.w() + 2 * pad < w.w())
    throw DimensionError("conv2d: kernel larger than padded input " + x.str());
  return Shape{x.n(), w.n(), (x.h() + 2 * pad - w.h()) / stride + 1, (x.w() + 2 * pad - w.w()) / stride + 1};
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int pad) {
  const Shape out_shape = conv2d_output_shape(x.shape(), w.shape(), stride, pad);
  if (b.size() != static_cast<std::size_t>(w.shape().n())) throw DimensionError("conv2d: bias length");
  detail::require_finite(x, "conv2d");

  const detail::ConvGeom g{x.shape().c(), x.shape().h(), x.shape().w(), w.shape().h(), w.shape().w(),
                           stride,        pad,           out_shape.h(), out_shape.w()};
  const std::int64_t cout = w.shape().n();
  Tensor<T> y(out_shape);
  const detail::CMapMat<T> wm(w.ptr(), cout, g.rows());
  const bool direct = g.kh == 1 && g.kw == 1 && stride == 1 && pad == 0;
  std::vector<T> col(direct ? 0 : static_cast<std::size_t>(g.rows() * g.cols()));
  const std::int64_t in_plane = g.channels * g.height * g.width;
  for (std::int64_t n = 0; n < x.shape().n(); ++n) {
    const T* src = x.ptr() + n * in_plane;
    if (!direct) detail::im2col(src, g, col.data());
    const detail::CMapMat<T> cm(direct ? src : col.data(), g.rows(), g.cols());
    detail::MapMat<T> ym(y.ptr() + n * cout * g.cols(), cout, g.cols());
    ym.noalias() = wm * cm;
    for (std::int64_t o = 0; o < cout; ++o) ym.row(o).array() += b[static_cast<std::size_t>(o)];
  }
  return y;
}

template <class T>
struct ConvGrads {
  Tensor<T> dx, dw, db;
};

template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int stride, int pad) {
  const Shape out_shape = conv2d_output_shape(x.shape(), w.shape(), stride, pad);
  if (!(dy.shape() == out_shape)) throw DimensionError("conv2d_backward: grad shape mismatch");
  const detail::ConvGeom g{x.shape().c(), x.shape().h(), x.shape().w(), w.shape().h(), w.shape().w(),
                           stride,        pad,           out_shape.h(), out_shape.w()};
  const std::int64_t cout = w.shape().n();
  ConvGrads<T> r{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>(Shape{cout})};
  const detail::CMapMat<T> wm(w.ptr(), cout, g.rows());
  detail::MapMat<T> dwm(r.dw.ptr(), cout, g.rows());
  const bool direct = g.kh == 1 && g.kw == 1 && stride == 1 && pad == 0;
  std::vector<T> col(direct ? 0 : static_cast<std::size_t>(g.rows() * g.cols()));
  std::vector<T> dcol(direct ? 0 : col.size());
  const std::int64_t in_plane = g.channels * g.height * g.width;
  for (std::int64_t n = 0; n < x.shape().n(); ++n) {
    const T* src = x.ptr() + n * in_plane;
    if (!direct) detail::im2col(src, g, col.data());
    const detail::CMapMat<T> cm(direct ? src : col.data(), g.rows(), g.cols());
    const detail::CMapMat<T> dym(dy.ptr() + n * cout * g.cols(), cout, g.cols());
    dwm.noalias() += dym * cm.transpose();
    // Plain loop: Eigen's vectorised sum peels by alignment, which would make
    // the result depend on where the buffer happens to live.
    for (std::int64_t o = 0; o < cout; ++o) {
      const T* row = dy.ptr() + (n * cout + o) * g.cols();
      T s = 0;
      for (std::int64_t i = 0; i < g.cols(); ++i) s += row[i];
      r.db[static_cast<std::size_t>(o)] += s;
    }
    T* dx = r.dx.ptr() + n * in_plane;
    if (direct) {
      detail::MapMat<T>(dx, g.rows(), g.cols()).noalias() = wm.transpose() * dym;
    } else {
      detail::MapMat<T>(dcol.data(), g.rows(), g.cols()).noalias() = wm.transpose() * dym;
      detail::col2im(dcol.data(), g, dx);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// conv_transpose2d; weight layout (Cin, Cout, kh, kw), no padding.

inline Shape conv_transpose2d_output_shape(const Shape& x, const Shape& w, int stride) {
  detail::require_rank4(x, "conv_transpose2d");
  detail::require_rank4(w, "conv_transpose2d weight");
  if (stride < 1) throw ParameterError("conv_transpose2d: stride must be >= 1");
  if (w.n() != x.c()) throw DimensionError("conv_transpose2d: weight expects " + std::to_string(w.n()) +
                                           " input channels, got " + x.str());
  if (w.h() < 1 || w.w() < 1) throw DimensionError("conv_transpose2d: empty kernel");
  return Shape{x.n(), w.c(), (x.h() - 1) * stride + w.h(), (x.w() - 1) * stride + w.w()};
}

template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride) {
  const Shape out_shape = conv_transpose2d_output_shape(x.shape(), w.shape(), stride);
  if (b.size() != static_cast<std::size_t>(w.shape().c())) throw DimensionError("conv_transpose2d: bias length");
  detail::require_finite(x, "conv_transpose2d");
  const std::int64_t cin = x.shape().c();
  const std::int64_t cout = w.shape().c();
  // Geometry of the forward convolution this operator is the adjoint of.
  const detail::ConvGeom g{cout, out_shape.h(), out_shape.w(), w.shape().h(), w.shape().w(),
                           stride, 0, x.shape().h(), x.shape().w()};
  Tensor<T> y(out_shape);
  const detail::CMapMat<T> wm(w.ptr(), cin, g.rows());
  std::vector<T> col(static_cast<std::size_t>(g.rows() * g.cols()));
  const std::int64_t out_plane = cout * g.height * g.width;
  const std::int64_t plane = g.height * g.width;
  for (std::int64_t n = 0; n < x.shape().n(); ++n) {
    const detail::CMapMat<T> xm(x.ptr() + n * cin * g.cols(), cin, g.cols());
    detail::MapMat<T>(col.data(), g.rows(), g.cols()).noalias() = wm.transpose() * xm;
    T* dst = y.ptr() + n * out_plane;
    detail::col2im(col.data(), g, dst);
    for (std::int64_t o = 0; o < cout; ++o) {
      const T bias = b[static_cast<std::size_t>(o)];
      for (std::int64_t i = 0; i < plane; ++i) dst[o * plane + i] += bias;
    }
  }
  return y;
}

template <class T>
ConvGrads<T> conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int stride) {
  const Shape out_shape = conv_transpose2d_output_shape(x.shape(), w.shape(), stride);
  if (!(dy.shape() == out_shape)) throw DimensionError("conv_transpose2d_backward: grad shape mismatch");
  const std::int64_t cin = x.shape().c();
  const std::int64_t cout = w.shape().c();
  const detail::ConvGeom g{cout, out_shape.h(), out_shape.w(), w.shape().h(), w.shape().w(),
                           stride, 0, x.shape().h(), x.shape().w()};
  ConvGrads<T> r{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>(Shape{cout})};
  const detail::CMapMat<T> wm(w.ptr(), cin, g.rows());
  detail::MapMat<T> dwm(r.dw.ptr(), cin, g.rows());
  std::vector<T> dcol(static_cast<std::size_t>(g.rows() * g.cols()));
  const std::int64_t out_plane = cout * g.height * g.width;
  const std::int64_t plane = g.height * g.width;
  for (std::int64_t n = 0; n < x.shape().n(); ++n) {
    const T* dsrc = dy.ptr() + n * out_plane;
    detail::im2col(dsrc, g, dcol.data());
    const detail::CMapMat<T> dcm(dcol.data(), g.rows(), g.cols());
    const detail::CMapMat<T> xm(x.ptr() + n * cin * g.cols(), cin, g.cols());
    detail::MapMat<T>(r.dx.ptr() + n * cin * g.cols(), cin, g.cols()).noalias() = wm * dcm;
    dwm.noalias() += xm * dcm.transpose();
    for (std::int64_t o = 0; o < cout; ++o) {
      T s = 0;
      for (std::int64_t i = 0; i < plane; ++i) s += dsrc[o * plane + i];
      r.db[static_cast<std::size_t>(o)] += s;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// maxpool2d

template <class T>
struct PoolResult {
  Tensor<T> y;
  std::vector<std::int64_t> argmax;  // flat input index per output element
};

inline Shape maxpool2d_output_shape(const Shape& x, int k, int stride) {
  detail::require_rank4(x, "maxpool2d");
  if (k < 1 || stride < 1) throw ParameterError("maxpool2d: window and stride must be >= 1");
  if (x.h() % stride != 0 || x.w() % stride != 0)
    throw DimensionError("maxpool2d: spatial dims " + x.str() + " not divisible by stride " + std::to_string(stride));
  const std::int64_t oh = x.h() / stride, ow = x.w() / stride;
  if ((oh - 1) * stride + k > x.h() || (ow - 1) * stride + k > x.w())
    throw DimensionError("maxpool2d: window overruns input " + x.str());
  return Shape{x.n(), x.c(), oh, ow};
}

template <class T>
PoolResult<T> maxpool2d(const Tensor<T>& x, int k = 2, int stride = 2) {
  const Shape os = maxpool2d_output_shape(x.shape(), k, stride);
  PoolResult<T> r{Tensor<T>(os), std::vector<std::int64_t>(os.numel())};
  const std::int64_t H = x.shape().h(), W = x.shape().w();
  std::size_t o = 0;
  for (std::int64_t nc = 0; nc < os.n() * os.c(); ++nc) {
    const std::int64_t base = nc * H * W;
    for (std::int64_t oy = 0; oy < os.h(); ++oy) {
      for (std::int64_t ox = 0; ox < os.w(); ++ox, ++o) {
        std::int64_t best = base + (oy * stride) * W + ox * stride;
        for (std::int64_t i = 0; i < k; ++i)
          for (std::int64_t j = 0; j < k; ++j) {
            const std::int64_t idx = base + (oy * stride + i) * W + ox * stride + j;
            if (x[static_cast<std::size_t>(idx)] > x[static_cast<std::size_t>(best)]) best = idx;
          }
        r.argmax[o] = best;
        r.y[o] = x[static_cast<std::size_t>(best)];
      }
    }
  }
  return r;
}

template <class T>
Tensor<T> maxpool2d_backward(const Shape& x_shape, const std::vector<std::int64_t>& argmax, const Tensor<T>& dy) {
  Tensor<T> dx(x_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[static_cast<std::size_t>(argmax[o])] += dy[o];
  return dx;
}

// ---------------------------------------------------------------------------
// batchnorm2d. Statistics are reduced in double regardless of T.

enum class Mode { train, eval };

template <class T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;

  explicit BatchNormStats(std::int64_t channels = 0)
      : running_mean(Shape{channels}), running_var(Tensor<T>::filled(Shape{channels}, T(1))) {}
};

template <class T>
struct BatchNormResult {
  Tensor<T> y;
  Tensor<T> xhat;
  std::vector<double> inv_std;
};

template <class T>
BatchNormResult<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps, Mode mode,
                               BatchNormStats<T>* stats) {
  detail::require_rank4(x.shape(), "batchnorm2d");
  const std::int64_t N = x.shape().n(), C = x.shape().c(), HW = x.shape().h() * x.shape().w();
  if (gamma.size() != static_cast<std::size_t>(C) || beta.size() != static_cast<std::size_t>(C))
    throw DimensionError("batchnorm2d: gamma/beta length must equal channel count");
  if (!(eps > 0)) throw ParameterError("batchnorm2d: eps must be positive");
  if (mode == Mode::eval && stats == nullptr) throw ParameterError("batchnorm2d: eval mode requires running stats");
  detail::require_finite(x, "batchnorm2d");

  BatchNormResult<T> r{Tensor<T>(x.shape()), Tensor<T>(x.shape()), std::vector<double>(static_cast<std::size_t>(C))};
  const double count = static_cast<double>(N * HW);
  for (std::int64_t c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::int64_t n = 0; n < N; ++n) {
        const T* p = x.ptr() + (n * C + c) * HW;
        for (std::int64_t i = 0; i < HW; ++i) s += p[i];
      }
      mean = s / count;
      double ss = 0.0;
      for (std::int64_t n = 0; n < N; ++n) {
        const T* p = x.ptr() + (n * C + c) * HW;
        for (std::int64_t i = 0; i < HW; ++i) {
          const double d = p[i] - mean;
          ss += d * d;
        }
      }
      var = ss / count;
      if (stats) {
        const double m = stats->momentum;
        const double unbiased = count > 1 ? ss / (count - 1) : var;
        auto& rm = stats->running_mean[static_cast<std::size_t>(c)];
        auto& rv = stats->running_var[static_cast<std::size_t>(c)];
        rm = static_cast<T>((1 - m) * rm + m * mean);
        rv = static_cast<T>((1 - m) * rv + m * unbiased);
      }
    } else {
      mean = stats->running_mean[static_cast<std::size_t>(c)];
      var = stats->running_var[static_cast<std::size_t>(c)];
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    r.inv_std[static_cast<std::size_t>(c)] = inv;
    const double g = gamma[static_cast<std::size_t>(c)], bt = beta[static_cast<std::size_t>(c)];
    for (std::int64_t n = 0; n < N; ++n) {
      const std::int64_t off = (n * C + c) * HW;
      for (std::int64_t i = 0; i < HW; ++i) {
        const double xh = (x[static_cast<std::size_t>(off + i)] - mean) * inv;
        r.xhat[static_cast<std::size_t>(off + i)] = static_cast<T>(xh);
        r.y[static_cast<std::size_t>(off + i)] = static_cast<T>(g * xh + bt);
      }
    }
  }
  return r;
}

template <class T>
struct BatchNormGrads {
  Tensor<T> dx, dgamma, dbeta;
};

template <class T>
BatchNormGrads<T> batchnorm2d_backward(const BatchNormResult<T>& fwd, const Tensor<T>& gamma, const Tensor<T>& dy,
                                       Mode mode) {
  const Shape& s = dy.shape();
  const std::int64_t N = s.n(), C = s.c(), HW = s.h() * s.w();
  BatchNormGrads<T> r{Tensor<T>(s), Tensor<T>(gamma.shape()), Tensor<T>(gamma.shape())};
  const double count = static_cast<double>(N * HW);
  for (std::int64_t c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::int64_t n = 0; n < N; ++n) {
      const std::int64_t off = (n * C + c) * HW;
      for (std::int64_t i = 0; i < HW; ++i) {
        const double d = dy[static_cast<std::size_t>(off + i)];
        sum_dy += d;
        sum_dy_xh += d * fwd.xhat[static_cast<std::size_t>(off + i)];
      }
    }
    r.dbeta[static_cast<std::size_t>(c)] = static_cast<T>(sum_dy);
    r.dgamma[static_cast<std::size_t>(c)] = static_cast<T>(sum_dy_xh);
    const double scale = gamma[static_cast<std::size_t>(c)] * fwd.inv_std[static_cast<std::size_t>(c)];
    for (std::int64_t n = 0; n < N; ++n) {
      const std::int64_t off = (n * C + c) * HW;
      for (std::int64_t i = 0; i < HW; ++i) {
        const std::size_t k = static_cast<std::size_t>(off + i);
        const double d = dy[k];
        r.dx[k] = mode == Mode::train
                      ? static_cast<T>(scale * (d - sum_dy / count - fwd.xhat[k] * sum_dy_xh / count))
                      : static_cast<T>(scale * d);
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// elementwise

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
  return y;
}

template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
  return dx;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) throw DimensionError("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * s;
  return y;
}

/// Whether `b` broadcasts against `a` under the multiply rule: equal shapes,
/// or `b` a single-channel map (B,1,H,W) applied to every channel of `a`.
inline bool mul_broadcasts(const Shape& a, const Shape& b) {
  if (a == b) return true;
  return a.rank() == 4 && b.rank() == 4 && b.c() == 1 && a.n() == b.n() && a.h() == b.h() && a.w() == b.w();
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (!mul_broadcasts(a.shape(), b.shape()))
    throw DimensionError("mul: cannot broadcast " + b.shape().str() + " onto " + a.shape().str());
  Tensor<T> y(a.shape());
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
    return y;
  }
  const std::int64_t C = a.shape().c(), HW = a.shape().h() * a.shape().w();
  for (std::int64_t n = 0; n < a.shape().n(); ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t i = 0; i < HW; ++i) {
        const std::size_t k = static_cast<std::size_t>((n * C + c) * HW + i);
        y[k] = a[k] * b[static_cast<std::size_t>(n * HW + i)];
      }
  return y;
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> mul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& dy) {
  Tensor<T> da(a.shape()), db(b.shape());
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      da[i] = dy[i] * b[i];
      db[i] = dy[i] * a[i];
    }
    return {da, db};
  }
  const std::int64_t C = a.shape().c(), HW = a.shape().h() * a.shape().w();
  for (std::int64_t n = 0; n < a.shape().n(); ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t i = 0; i < HW; ++i) {
        const std::size_t k = static_cast<std::size_t>((n * C + c) * HW + i);
        const std::size_t m = static_cast<std::size_t>(n * HW + i);
        da[k] = dy[k] * b[m];
        db[m] += dy[k] * a[k];
      }
  return {da, db};
}

// ---------------------------------------------------------------------------
// channel concat / split

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank4(a.shape(), "concat_channels");
  detail::require_rank4(b.shape(), "concat_channels");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n() != sb.n() || sa.h() != sb.h() || sa.w() != sb.w())
    throw DimensionError("concat_channels: " + sa.str() + " and " + sb.str() + " differ outside the channel axis");
  const std::int64_t plane = sa.h() * sa.w();
  Tensor<T> y(Shape{sa.n(), sa.c() + sb.c(), sa.h(), sa.w()});
  T* dst = y.ptr();
  for (std::int64_t n = 0; n < sa.n(); ++n) {
    dst = std::copy_n(a.ptr() + n * sa.c() * plane, sa.c() * plane, dst);
    dst = std::copy_n(b.ptr() + n * sb.c() * plane, sb.c() * plane, dst);
  }
  return y;
}

/// Inverse of concat_channels: returns channels [0,first) and [first,C).
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& y, std::int64_t first) {
  const Shape& s = y.shape();
  detail::require_rank4(s, "split_channels");
  if (first < 0 || first > s.c()) throw DimensionError("split_channels: split point out of range");
  const std::int64_t plane = s.h() * s.w();
  Tensor<T> a(Shape{s.n(), first, s.h(), s.w()}), b(Shape{s.n(), s.c() - first, s.h(), s.w()});
  for (std::int64_t n = 0; n < s.n(); ++n) {
    const T* src = y.ptr() + n * s.c() * plane;
    std::copy_n(src, first * plane, a.ptr() + n * first * plane);
    std::copy_n(src + first * plane, (s.c() - first) * plane, b.ptr() + n * (s.c() - first) * plane);
  }
  return {a, b};
}

// ---------------------------------------------------------------------------
// mean squared error

template <class T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (!(pred.shape() == target.shape()))
    throw DimensionError("mse_loss: " + pred.shape().str() + " vs " + target.shape().str());
  if (pred.size() == 0) throw DimensionError("mse_loss: empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

template <class T>
Tensor<T> mse_loss_backward(const Tensor<T>& pred, const Tensor<T>& target, double upstream) {
  Tensor<T> d(pred.shape());
  const double k = 2.0 * upstream / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    d[i] = static_cast<T>(k * (static_cast<double>(pred[i]) - static_cast<double>(target[i])));
  return d;
}

}  // namespace sparsect::ops
