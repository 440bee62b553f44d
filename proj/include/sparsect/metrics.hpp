#pragma once

// PSNR and SSIM on 8-bit images, and tabular aggregation of per-split
// means.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sparsect/error.hpp"
#include "sparsect/tensor.hpp"

namespace sparsect {

/// Grey image with integer levels in [0, 2^bits - 1].
struct Image8 {
  std::int64_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t operator()(std::int64_t y, std::int64_t x) const { return pixels[static_cast<std::size_t>(y * width + x)]; }
};

/// Clamps to [lo, hi], maps onto [0, 255] and rounds half to even. A
/// degenerate range (hi <= lo) maps everything to 0.
inline std::uint8_t quantize_level(double v, double lo = 0.0, double hi = 1.0) {
  if (!(hi > lo)) return 0;
  const double t = (std::clamp(v, lo, hi) - lo) / (hi - lo) * 255.0;
  return static_cast<std::uint8_t>(std::nearbyint(t));
}

/// 8-bit image from a (1,1,H,W) or (H,W) tensor with values in [lo, hi].
template <class T>
Image8 quantize_image(const Tensor<T>& t, double lo = 0.0, double hi = 1.0) {
  const Shape& s = t.shape();
  Image8 img;
  if (s.rank() == 2) {
    img.height = s[0];
    img.width = s[1];
  } else if (s.rank() == 4 && s.n() == 1 && s.c() == 1) {
    img.height = s.h();
    img.width = s.w();
  } else {
    throw DimensionError("quantize_image: expected (H,W) or (1,1,H,W), got " + s.str());
  }
  img.pixels.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) img.pixels[i] = quantize_level(static_cast<double>(t[i]), lo, hi);
  return img;
}

enum class SsimWindow { gaussian, block };

struct MetricParams {
  int bits = 8;
  SsimWindow window = SsimWindow::gaussian;
  int window_size = 11;  // gaussian: sliding window side; block: non-overlapping block side
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;

  static MetricParams blocks() {
    MetricParams p;
    p.window = SsimWindow::block;
    p.window_size = 8;
    return p;
  }

  double max_value() const { return std::ldexp(1.0, bits) - 1.0; }
  double c1() const { return (k1 * max_value()) * (k1 * max_value()); }
  double c2() const { return (k2 * max_value()) * (k2 * max_value()); }
  double c3() const { return c2() / 2.0; }

  void validate() const {
    if (bits < 1 || bits > 8) throw ParameterError("bits must lie in [1, 8] for 8-bit images");
    if (window_size < 1) throw ParameterError("SSIM window must be positive");
    if (window == SsimWindow::gaussian && !(sigma > 0)) throw ParameterError("SSIM sigma must be positive");
    if (!(k1 > 0) || !(k2 > 0)) throw ParameterError("k1 and k2 must be positive");
  }
};

namespace detail {
inline void require_same(const Image8& x, const Image8& y, const char* what) {
  if (x.height != y.height || x.width != y.width)
    throw DimensionError(std::string(what) + ": image sizes differ");
  if (x.pixels.size() != static_cast<std::size_t>(x.height * x.width) || y.pixels.size() != x.pixels.size())
    throw DimensionError(std::string(what) + ": pixel buffer does not match dimensions");
}
}  // namespace detail

inline double mse(const Image8& x, const Image8& y) {
  detail::require_same(x, y, "mse");
  if (x.pixels.empty()) throw DimensionError("mse: empty image");
  double s = 0.0;
  for (std::size_t i = 0; i < x.pixels.size(); ++i) {
    const double d = static_cast<double>(x.pixels[i]) - static_cast<double>(y.pixels[i]);
    s += d * d;
  }
  return s / static_cast<double>(x.pixels.size());
}

/// 10 log10(MaxValue^2 / MSE) with MaxValue = 2^bits - 1. Identical images
/// give +infinity.
inline double psnr(const Image8& x, const Image8& y, const MetricParams& p = {}) {
  p.validate();
  const double m = mse(x, y);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(p.max_value() * p.max_value() / m);
}

namespace detail {

inline double ssim_term(double mx, double my, double vx, double vy, double cxy, const MetricParams& p) {
  return ((2 * mx * my + p.c1()) * (2 * cxy + p.c2())) / ((mx * mx + my * my + p.c1()) * (vx + vy + p.c2()));
}

inline std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double mid = (size - 1) / 2.0;
  double s = 0.0;
  for (int i = 0; i < size; ++i) s += g[static_cast<std::size_t>(i)] = std::exp(-(i - mid) * (i - mid) / (2 * sigma * sigma));
  for (double& v : g) v /= s;
  return g;
}

// Separable "valid" filtering of an H x W plane with a 1D kernel.
inline std::vector<double> filter_valid(const std::vector<double>& img, std::int64_t H, std::int64_t W,
                                        const std::vector<double>& k) {
  const auto K = static_cast<std::int64_t>(k.size());
  const std::int64_t oh = H - K + 1, ow = W - K + 1;
  std::vector<double> tmp(static_cast<std::size_t>(H * ow));
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::int64_t i = 0; i < K; ++i) s += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y * W + x + i)];
      tmp[static_cast<std::size_t>(y * ow + x)] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::int64_t i = 0; i < K; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>((y + i) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = s;
    }
  return out;
}

}  // namespace detail

/// Mean of per-window SSIM over every window position that fits the image
/// (sliding Gaussian) or over the tiling of full blocks (block mode).
inline double ssim(const Image8& x, const Image8& y, const MetricParams& p = {}) {
  p.validate();
  detail::require_same(x, y, "ssim");
  const std::int64_t H = x.height, W = x.width, K = p.window_size;
  if (H < K || W < K) throw ParameterError("ssim: image smaller than the window");

  if (p.window == SsimWindow::block) {
    double total = 0.0;
    std::int64_t count = 0;
    const double n = static_cast<double>(K * K);
    for (std::int64_t by = 0; by + K <= H; by += K)
      for (std::int64_t bx = 0; bx + K <= W; bx += K) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (std::int64_t i = 0; i < K; ++i)
          for (std::int64_t j = 0; j < K; ++j) {
            const double a = x(by + i, bx + j), b = y(by + i, bx + j);
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
          }
        const double mx = sx / n, my = sy / n;
        total += detail::ssim_term(mx, my, sxx / n - mx * mx, syy / n - my * my, sxy / n - mx * my, p);
        ++count;
      }
    return total / static_cast<double>(count);
  }

  const auto taps = detail::gaussian_taps(static_cast<int>(K), p.sigma);
  const std::size_t N = x.pixels.size();
  std::vector<double> a(N), b(N), aa(N), bb(N), ab(N);
  for (std::size_t i = 0; i < N; ++i) {
    a[i] = x.pixels[i];
    b[i] = y.pixels[i];
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mx = detail::filter_valid(a, H, W, taps), my = detail::filter_valid(b, H, W, taps);
  const auto exx = detail::filter_valid(aa, H, W, taps), eyy = detail::filter_valid(bb, H, W, taps);
  const auto exy = detail::filter_valid(ab, H, W, taps);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    total += detail::ssim_term(mx[i], my[i], exx[i] - mx[i] * mx[i], eyy[i] - my[i] * my[i], exy[i] - mx[i] * my[i], p);
  }
  return total / static_cast<double>(mx.size());
}

// ---------------------------------------------------------------------------
// reports

inline constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};

struct SplitScore {
  double psnr = 0.0;  // mean over images; +inf if every image is exact
  double ssim = 0.0;
  std::size_t images = 0;
};

struct ReportRow {
  std::string model;  // e.g. "ResAttUnet(O2)"
  std::array<SplitScore, 3> splits;
};

/// Memory and wall-clock of one model trained under O0 and under O2.
struct ResourceRow {
  std::string model;
  std::size_t o0_bytes = 0, o2_bytes = 0;
  double o0_seconds = 0.0, o2_seconds = 0.0;

  double memory_saving() const { return o0_bytes ? 1.0 - static_cast<double>(o2_bytes) / static_cast<double>(o0_bytes) : 0.0; }
  double time_saving() const { return o0_seconds > 0 ? 1.0 - o2_seconds / o0_seconds : 0.0; }
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<ResourceRow> resources;

  const ReportRow* find(const std::string& model) const {
    for (const auto& r : rows)
      if (r.model == model) return &r;
    return nullptr;
  }
};

/// Mean PSNR/SSIM over (prediction, label) image pairs.
inline SplitScore score_split(const std::vector<Image8>& predictions, const std::vector<Image8>& labels,
                              const MetricParams& p = {}) {
  if (predictions.empty()) throw ParameterError("evaluate: empty split");
  if (predictions.size() != labels.size()) throw DimensionError("evaluate: prediction/label count mismatch");
  SplitScore s;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    s.psnr += psnr(predictions[i], labels[i], p);
    s.ssim += ssim(predictions[i], labels[i], p);
  }
  s.images = predictions.size();
  s.psnr /= static_cast<double>(s.images);
  s.ssim /= static_cast<double>(s.images);
  return s;
}

inline std::string format_metric(double v, int precision) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

/// Plain-text table: Model | PSNR train/val/test | SSIM train/val/test.
inline std::string render_table(const EvalReport& report) {
  std::size_t name_w = 5;
  for (const auto& r : report.rows) name_w = std::max(name_w, r.model.size());
  std::ostringstream os;
  auto cell = [&](const std::string& s, std::size_t w) { os << std::left << std::setw(static_cast<int>(w)) << s << "  "; };
  const std::size_t w = 14;
  cell("Model", name_w);
  cell("PSNR", w);
  cell("", w);
  cell("", w);
  cell("SSIM", w);
  cell("", w);
  cell("", w);
  os << "\n";
  cell("", name_w);
  for (int k = 0; k < 2; ++k) {
    cell("Training set", w);
    cell("Validation set", w);
    cell("Test set", w);
  }
  os << "\n";
  for (const auto& r : report.rows) {
    cell(r.model, name_w);
    for (const auto& s : r.splits) cell(format_metric(s.psnr, 4), w);
    for (const auto& s : r.splits) cell(format_metric(s.ssim, 4), w);
    os << "\n";
  }
  if (!report.resources.empty()) {
    os << "\n";
    cell("Model", name_w);
    for (const char* h : {"O0 memory (MiB)", "O0 time (s)", "O2 memory (MiB)", "O2 time (s)", "memory saving",
                          "time saving"})
      cell(h, 16);
    os << "\n";
    for (const auto& r : report.resources) {
      cell(r.model, name_w);
      cell(format_metric(static_cast<double>(r.o0_bytes) / (1024.0 * 1024.0), 1), 16);
      cell(format_metric(r.o0_seconds, 4), 16);
      cell(format_metric(static_cast<double>(r.o2_bytes) / (1024.0 * 1024.0), 1), 16);
      cell(format_metric(r.o2_seconds, 4), 16);
      cell(format_metric(100.0 * r.memory_saving(), 2) + "%", 16);
      cell(format_metric(100.0 * r.time_saving(), 2) + "%", 16);
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace sparsect
