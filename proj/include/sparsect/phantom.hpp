#pragma once

// 2D foam phantoms: a uniform disk of material with non-overlapping circular
// voids of random radius and depth. Coordinates are continuous pixel units
// with pixel (i, j) covering [j, j+1) x [i, i+1).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sparsect/error.hpp"
#include "sparsect/rng.hpp"
#include "sparsect/tensor.hpp"

namespace sparsect {

struct Void {
  double cx = 0, cy = 0, r = 0;
  double intensity = 0;  // fraction of material removed, 1.0 = empty
};

struct PhantomConfig {
  std::int64_t size = 128;
  std::int64_t void_min = 8, void_max = 16;
  double radius_min = 0.02 * 128, radius_max = 0.1 * 128;
  double intensity_min = 0.7, intensity_max = 1.0;
  std::int64_t max_attempts = 1000;
  double material_value = 1.0;
  int supersample = 4;

  /// Default ranges scaled to an image side of `s` pixels.
  static PhantomConfig for_size(std::int64_t s) {
    PhantomConfig c;
    c.size = s;
    c.radius_min = 0.02 * static_cast<double>(s);
    c.radius_max = 0.1 * static_cast<double>(s);
    return c;
  }

  double disk_radius() const { return 0.95 * static_cast<double>(size) / 2.0; }
  double center() const { return static_cast<double>(size) / 2.0; }

  void validate() const {
    if (size < 1) throw ParameterError("phantom size must be positive");
    if (void_min < 0 || void_max < void_min) throw ParameterError("invalid void count range");
    if (radius_min < 1.0) throw ParameterError("radius_min must be at least 1 pixel");
    if (radius_max < radius_min) throw ParameterError("invalid radius range");
    if (void_max > 0 && radius_min >= disk_radius()) throw ParameterError("voids cannot fit in the disk");
    if (intensity_min < 0 || intensity_max > 1 || intensity_max < intensity_min)
      throw ParameterError("intensity range must lie in [0, 1]");
    if (max_attempts < 1) throw ParameterError("max_attempts must be positive");
    if (!(material_value > 0) || material_value > 1) throw ParameterError("material_value must lie in (0, 1]");
    if (supersample < 1) throw ParameterError("supersample must be positive");
  }
};

struct Phantom {
  Tensor<float> image;  // (1, 1, S, S)
  std::vector<Void> voids;
  std::uint64_t seed = 0;
  double material_value = 1.0;
  std::int64_t placement_failures = 0;  // voids dropped after exhausting attempts
};

/// Renders a disk of `disk_value` with voids, sampling each pixel on a
/// `supersample` x `supersample` grid and averaging.
inline Tensor<float> render_foam(std::int64_t size, double cx, double cy, double radius, double disk_value,
                                 const std::vector<Void>& voids, int supersample) {
  Tensor<float> img(Shape{1, 1, size, size});
  const double r2 = radius * radius;
  const int ss = supersample;
  const double inv = 1.0 / (ss * ss);
  for (std::int64_t i = 0; i < size; ++i) {
    for (std::int64_t j = 0; j < size; ++j) {
      // Skip pixels whose corners are all far outside the disk.
      const double px = static_cast<double>(j) + 0.5 - cx, py = static_cast<double>(i) + 0.5 - cy;
      if (std::sqrt(px * px + py * py) > radius + 1.0) continue;
      double acc = 0.0;
      for (int a = 0; a < ss; ++a) {
        const double y = static_cast<double>(i) + (a + 0.5) / ss;
        for (int b = 0; b < ss; ++b) {
          const double x = static_cast<double>(j) + (b + 0.5) / ss;
          const double dx = x - cx, dy = y - cy;
          if (dx * dx + dy * dy > r2) continue;
          double v = disk_value;
          for (const Void& vd : voids) {
            const double ex = x - vd.cx, ey = y - vd.cy;
            if (ex * ex + ey * ey <= vd.r * vd.r) {
              v = disk_value * (1.0 - vd.intensity);
              break;
            }
          }
          acc += v;
        }
      }
      img.at(0, 0, i, j) = static_cast<float>(acc * inv);
    }
  }
  return img;
}

/// Deterministic in (config, seed). Voids are placed by rejection sampling:
/// radius uniform in range, centre uniform over the region keeping the void
/// inside the disk, rejected on overlap with any earlier void.
inline Phantom generate_phantom(const PhantomConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SplitMix64 rng(seed);
  Phantom p;
  p.seed = seed;
  p.material_value = cfg.material_value;
  const double R = cfg.disk_radius();
  const double c = cfg.center();
  const std::int64_t count = cfg.void_max > 0 ? rng.integer(cfg.void_min, cfg.void_max) : 0;
  for (std::int64_t k = 0; k < count; ++k) {
    bool placed = false;
    for (std::int64_t attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      Void v;
      v.r = rng.uniform(cfg.radius_min, cfg.radius_max);
      const double reach = R - v.r;
      if (reach <= 0) continue;
      // Uniform over the disk of radius `reach`, strictly inside.
      const double rho = reach * std::sqrt(rng.uniform());
      const double phi = 2.0 * M_PI * rng.uniform();
      v.cx = c + rho * std::cos(phi);
      v.cy = c + rho * std::sin(phi);
      v.intensity = rng.uniform(cfg.intensity_min, cfg.intensity_max);
      placed = true;
      for (const Void& o : p.voids) {
        if (std::hypot(v.cx - o.cx, v.cy - o.cy) <= v.r + o.r) {
          placed = false;
          break;
        }
      }
      if (placed) p.voids.push_back(v);
    }
    if (!placed) ++p.placement_failures;
  }
  p.image = render_foam(cfg.size, c, c, R, cfg.material_value, p.voids, cfg.supersample);
  return p;
}

/// Phantom i is generated from split(seed, i).
inline std::vector<Phantom> generate_dataset(const PhantomConfig& cfg, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw ParameterError("dataset count must be at least 1");
  std::vector<Phantom> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_phantom(cfg, split(seed, i)));
  return out;
}

}  // namespace sparsect
