#pragma once

// Parallel-beam Radon transform. Detector bin d sits at signed offset
// d - (D-1)/2 from the rotation centre, which is the image centre
// ((S-1)/2, (S-1)/2) in pixel-index coordinates (x = column, y = row).

#include <cmath>
#include <cstdint>
#include <vector>

#include "sparsect/error.hpp"
#include "sparsect/tensor.hpp"

namespace sparsect {

struct Sinogram {
  Tensor<float> data;  // (A, D)
  std::vector<double> angles;
  double detector_spacing = 1.0;

  std::int64_t angle_count() const { return data.shape()[0]; }
  std::int64_t detector_count() const { return data.shape()[1]; }
  double origin() const { return (static_cast<double>(detector_count()) - 1.0) / 2.0; }

  void validate() const {
    if (data.shape().rank() != 2) throw DimensionError("sinogram data must be rank 2, got " + data.shape().str());
    if (static_cast<std::int64_t>(angles.size()) != angle_count())
      throw DimensionError("sinogram has " + std::to_string(angle_count()) + " rows but " +
                           std::to_string(angles.size()) + " angles");
    for (std::size_t i = 0; i < angles.size(); ++i) {
      if (angles[i] < 0 || angles[i] >= M_PI) throw ParameterError("sinogram angle outside [0, pi)");
      if (i && !(angles[i] > angles[i - 1])) throw ParameterError("sinogram angles must be strictly increasing");
    }
  }
};

/// k*pi/n for k = 0..n-1.
inline std::vector<double> uniform_angles(std::int64_t n) {
  if (n < 1) throw ParameterError("uniform_angles: n must be at least 1");
  std::vector<double> a(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) a[static_cast<std::size_t>(k)] = static_cast<double>(k) * M_PI / static_cast<double>(n);
  return a;
}

namespace detail {

inline double bilinear(const float* img, std::int64_t S, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy);
  const double tx = x - fx, ty = y - fy;
  auto px = [&](std::int64_t yy, std::int64_t xx) -> double {
    return (xx < 0 || yy < 0 || xx >= S || yy >= S) ? 0.0 : static_cast<double>(img[yy * S + xx]);
  };
  return (1 - ty) * ((1 - tx) * px(y0, x0) + tx * px(y0, x0 + 1)) + ty * ((1 - tx) * px(y0 + 1, x0) + tx * px(y0 + 1, x0 + 1));
}

}  // namespace detail

inline constexpr double kRayStep = 0.5;

/// Line integrals by ray marching with bilinear sampling at a 0.5 pixel step.
inline Sinogram radon_forward(const Tensor<float>& image, const std::vector<double>& angles) {
  const Shape& s = image.shape();
  if (s.rank() != 4 || s.n() != 1 || s.c() != 1 || s.h() != s.w())
    throw DimensionError("radon_forward: expected square (1,1,S,S) image, got " + s.str());
  if (angles.empty()) throw ParameterError("radon_forward: empty angle list");
  for (double a : angles)
    if (a < 0 || a >= M_PI) throw ParameterError("radon_forward: angle outside [0, pi)");
  const std::int64_t S = s.h(), D = S, A = static_cast<std::int64_t>(angles.size());
  const double c = (static_cast<double>(S) - 1.0) / 2.0;
  const double half_len = std::ceil(static_cast<double>(S) * std::sqrt(2.0) / 2.0) + 1.0;
  const auto steps = static_cast<std::int64_t>(2.0 * half_len / kRayStep);

  Sinogram out{Tensor<float>(Shape{A, D}), angles, 1.0};
  for (std::int64_t a = 0; a < A; ++a) {
    const double ct = std::cos(angles[static_cast<std::size_t>(a)]);
    const double st = std::sin(angles[static_cast<std::size_t>(a)]);
    for (std::int64_t d = 0; d < D; ++d) {
      const double off = static_cast<double>(d) - (static_cast<double>(D) - 1.0) / 2.0;
      const double bx = c + off * ct, by = c + off * st;
      double acc = 0.0;
      for (std::int64_t k = 0; k <= steps; ++k) {
        const double t = -half_len + static_cast<double>(k) * kRayStep;
        acc += detail::bilinear(image.ptr(), S, bx - t * st, by + t * ct);
      }
      out.data[static_cast<std::size_t>(a * D + d)] = static_cast<float>(acc * kRayStep);
    }
  }
  return out;
}

/// Row indices kept by subsampling A angles by `factor`.
inline std::vector<std::int64_t> subsample_indices(std::int64_t angle_count, std::int64_t factor) {
  if (factor < 1) throw ParameterError("subsample: factor must be at least 1");
  if (factor > angle_count) throw ParameterError("subsample: factor exceeds angle count");
  std::vector<std::int64_t> idx;
  for (std::int64_t i = 0; i < angle_count; i += factor) idx.push_back(i);
  return idx;
}

/// Keeps one angle out of every `factor`, starting at the first.
inline Sinogram subsample(const Sinogram& s, std::int64_t factor) {
  const std::int64_t D = s.detector_count();
  const auto idx = subsample_indices(s.angle_count(), factor);
  Sinogram out{Tensor<float>(Shape{static_cast<std::int64_t>(idx.size()), D}), {}, s.detector_spacing};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(s.data.ptr() + idx[r] * D, D, out.data.ptr() + static_cast<std::int64_t>(r) * D);
    out.angles.push_back(s.angles[static_cast<std::size_t>(idx[r])]);
  }
  return out;
}

}  // namespace sparsect
