#pragma once

// Reference implementations used only by the tests. Each one is written
// directly from the defining formula and shares no code with the library
// kernels it checks.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "sparsect/metrics.hpp"
#include "sparsect/tensor.hpp"

namespace oracle {

using sparsect::Shape;
using sparsect::Tensor;

template <class T>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

/// Six nested loops over (n, o, y, x, c, i, j) with explicit zero padding.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int pad) {
  const auto N = x.shape().n(), C = x.shape().c(), H = x.shape().h(), W = x.shape().w();
  const auto O = w.shape().n(), KH = w.shape().h(), KW = w.shape().w();
  const auto OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
  Tensor<T> y(Shape{N, O, OH, OW});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t oy = 0; oy < OH; ++oy)
        for (std::int64_t ox = 0; ox < OW; ++ox) {
          double s = b[static_cast<std::size_t>(o)];
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < KH; ++i)
              for (std::int64_t j = 0; j < KW; ++j) {
                const auto yy = oy * stride + i - pad, xx = ox * stride + j - pad;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                s += static_cast<double>(x.at(n, c, yy, xx)) * static_cast<double>(w.at(o, c, i, j));
              }
          y.at(n, o, oy, ox) = static_cast<T>(s);
        }
  return y;
}

/// Scatter form: every input pixel stamps the kernel onto the output.
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride) {
  const auto N = x.shape().n(), C = x.shape().c(), H = x.shape().h(), W = x.shape().w();
  const auto O = w.shape().c(), KH = w.shape().h(), KW = w.shape().w();
  Tensor<T> y(Shape{N, O, (H - 1) * stride + KH, (W - 1) * stride + KW});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o) {
      for (std::int64_t yy = 0; yy < y.shape().h(); ++yy)
        for (std::int64_t xx = 0; xx < y.shape().w(); ++xx) y.at(n, o, yy, xx) = b[static_cast<std::size_t>(o)];
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t iy = 0; iy < H; ++iy)
          for (std::int64_t ix = 0; ix < W; ++ix)
            for (std::int64_t i = 0; i < KH; ++i)
              for (std::int64_t j = 0; j < KW; ++j)
                y.at(n, o, iy * stride + i, ix * stride + j) += x.at(n, c, iy, ix) * w.at(c, o, i, j);
    }
  return y;
}

template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x, int k, int stride) {
  const auto s = x.shape();
  Tensor<T> y(Shape{s.n(), s.c(), s.h() / stride, s.w() / stride});
  for (std::int64_t n = 0; n < s.n(); ++n)
    for (std::int64_t c = 0; c < s.c(); ++c)
      for (std::int64_t oy = 0; oy < y.shape().h(); ++oy)
        for (std::int64_t ox = 0; ox < y.shape().w(); ++ox) {
          T m = -std::numeric_limits<T>::infinity();
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) m = std::max(m, x.at(n, c, oy * stride + i, ox * stride + j));
          y.at(n, c, oy, ox) = m;
        }
  return y;
}

/// Batch norm from the textbook mean/variance formulas.
template <class T>
Tensor<T> batchnorm_train(const Tensor<T>& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                          double eps) {
  const auto s = x.shape();
  Tensor<T> y(s);
  for (std::int64_t c = 0; c < s.c(); ++c) {
    std::vector<double> vals;
    for (std::int64_t n = 0; n < s.n(); ++n)
      for (std::int64_t i = 0; i < s.h(); ++i)
        for (std::int64_t j = 0; j < s.w(); ++j) vals.push_back(x.at(n, c, i, j));
    double mean = 0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    for (std::int64_t n = 0; n < s.n(); ++n)
      for (std::int64_t i = 0; i < s.h(); ++i)
        for (std::int64_t j = 0; j < s.w(); ++j)
          y.at(n, c, i, j) = static_cast<T>(gamma[static_cast<std::size_t>(c)] * (x.at(n, c, i, j) - mean) /
                                                std::sqrt(var + eps) +
                                            beta[static_cast<std::size_t>(c)]);
  }
  return y;
}

/// Nearest binary16 value by enumerating all finite encodings (ties to the
/// encoding with an even significand).
inline float nearest_half(float v) {
  auto decode = [](int bits) -> double {
    const int sign = bits >> 15, exp = (bits >> 10) & 0x1f, mant = bits & 0x3ff;
    double mag = exp == 0 ? std::ldexp(mant, -24) : std::ldexp(1024 + mant, exp - 25);
    return sign ? -mag : mag;
  };
  double best = 0.0, best_err = std::numeric_limits<double>::infinity();
  int best_bits = 0;
  for (int bits = 0; bits < 0x10000; ++bits) {
    if (((bits >> 10) & 0x1f) == 0x1f) continue;  // inf / nan
    const double d = decode(bits);
    const double err = std::abs(d - static_cast<double>(v));
    if (err < best_err || (err == best_err && (bits & 1) == 0 && (best_bits & 1) == 1)) {
      best = d;
      best_err = err;
      best_bits = bits;
    }
  }
  return static_cast<float>(best);
}

inline double psnr(const sparsect::Image8& a, const sparsect::Image8& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::pow(double(a.pixels[i]) - double(b.pixels[i]), 2);
  const double mse = s / static_cast<double>(a.pixels.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

/// Sliding-window SSIM with an explicit 2D Gaussian window evaluated per
/// position; no separability.
inline double ssim(const sparsect::Image8& a, const sparsect::Image8& b, int K = 11, double sigma = 1.5) {
  std::vector<double> w(static_cast<std::size_t>(K * K));
  double total = 0;
  const double mid = (K - 1) / 2.0;
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      total += w[static_cast<std::size_t>(i * K + j)] =
          std::exp(-((i - mid) * (i - mid) + (j - mid) * (j - mid)) / (2 * sigma * sigma));
  for (double& v : w) v /= total;
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double acc = 0;
  int count = 0;
  for (std::int64_t y = 0; y + K <= a.height; ++y)
    for (std::int64_t x = 0; x + K <= a.width; ++x) {
      double mx = 0, my = 0;
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
          mx += w[static_cast<std::size_t>(i * K + j)] * a(y + i, x + j);
          my += w[static_cast<std::size_t>(i * K + j)] * b(y + i, x + j);
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
          const double dx = a(y + i, x + j) - mx, dy = b(y + i, x + j) - my;
          vx += w[static_cast<std::size_t>(i * K + j)] * dx * dx;
          vy += w[static_cast<std::size_t>(i * K + j)] * dy * dy;
          cxy += w[static_cast<std::size_t>(i * K + j)] * dx * dy;
        }
      acc += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / count;
}

inline sparsect::Image8 random_image(std::int64_t h, std::int64_t w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, 255);
  sparsect::Image8 img{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w))};
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(u(rng));
  return img;
}

/// Scalar Adam, one parameter at a time.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double w, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-7) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    return w - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace oracle
