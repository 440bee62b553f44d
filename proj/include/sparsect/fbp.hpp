#pragma once

// Filtered backprojection for the parallel-beam geometry in projector.hpp.

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "sparsect/error.hpp"
#include "sparsect/projector.hpp"
#include "sparsect/tensor.hpp"

namespace sparsect {

enum class FilterWindow { ramlak, hann };

inline FilterWindow parse_window(const std::string& s) {
  if (s == "ramlak") return FilterWindow::ramlak;
  if (s == "hann") return FilterWindow::hann;
  throw ParameterError("unknown filter window '" + s + "' (expected ramlak or hann)");
}

inline std::string to_string(FilterWindow w) { return w == FilterWindow::ramlak ? "ramlak" : "hann"; }

struct FilterSpec {
  FilterWindow window = FilterWindow::ramlak;
  std::int64_t zero_pad = 0;  // 0 selects the smallest power of two >= 2*D

  std::int64_t padded_length(std::int64_t detectors) const {
    if (zero_pad == 0) {
      std::int64_t n = 1;
      while (n < 2 * detectors) n <<= 1;
      return n;
    }
    if (zero_pad < 2 * detectors || (zero_pad & (zero_pad - 1)) != 0)
      throw ParameterError("zero_pad must be a power of two of at least 2*D");
    return zero_pad;
  }
};

/// Spatial Ram-Lak kernel at unit detector spacing: 1/4 at 0, -1/(pi n)^2 at
/// odd n, 0 at even n != 0.
inline double ramlak_tap(std::int64_t n) {
  if (n == 0) return 0.25;
  if (n % 2 == 0) return 0.0;
  const double d = M_PI * static_cast<double>(n);
  return -1.0 / (d * d);
}

/// Frequency response of the padded-length cyclic filter.
inline std::vector<double> filter_response(std::int64_t length, FilterWindow window) {
  std::vector<std::complex<double>> h(static_cast<std::size_t>(length));
  for (std::int64_t k = 0; k < length; ++k) {
    const std::int64_t n = k < length / 2 ? k : k - length;
    h[static_cast<std::size_t>(k)] = ramlak_tap(n);
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> H;
  fft.fwd(H, h);
  std::vector<double> resp(H.size());
  for (std::size_t k = 0; k < H.size(); ++k) {
    double r = H[k].real();  // kernel is even, so the response is real
    if (window == FilterWindow::hann) {
      const double f = static_cast<double>(std::min<std::size_t>(k, H.size() - k)) / static_cast<double>(H.size());
      r *= 0.5 * (1.0 + std::cos(2.0 * M_PI * f));
    }
    resp[k] = r;
  }
  return resp;
}

/// Ramp-filters every row by cyclic convolution over the padded length. The
/// padding region repeats the edge values (right edge, then left edge), so a
/// constant row stays constant through the cyclic wrap.
inline Sinogram ramp_filter(const Sinogram& s, const FilterSpec& spec = {}) {
  s.validate();
  const std::int64_t A = s.angle_count(), D = s.detector_count();
  if (D < 2) throw DimensionError("ramp_filter: need at least 2 detector bins");
  const std::int64_t L = spec.padded_length(D);
  const std::vector<double> resp = filter_response(L, spec.window);
  Eigen::FFT<double> fft;
  std::vector<double> row(static_cast<std::size_t>(L));
  std::vector<std::complex<double>> spectrum;
  std::vector<double> back;
  Sinogram out{Tensor<float>(s.data.shape()), s.angles, s.detector_spacing};
  const std::int64_t split_at = D + (L - D) / 2;
  for (std::int64_t a = 0; a < A; ++a) {
    const float* src = s.data.ptr() + a * D;
    for (std::int64_t k = 0; k < L; ++k) {
      const double v = k < D ? src[k] : (k < split_at ? src[D - 1] : src[0]);
      row[static_cast<std::size_t>(k)] = v;
    }
    fft.fwd(spectrum, row);
    for (std::size_t k = 0; k < spectrum.size(); ++k) spectrum[k] *= resp[k] * s.detector_spacing;
    fft.inv(back, spectrum);
    for (std::int64_t d = 0; d < D; ++d) out.data[static_cast<std::size_t>(a * D + d)] = static_cast<float>(back[static_cast<std::size_t>(d)]);
  }
  return out;
}

/// Pixel-driven backprojection with linear interpolation, scaled by pi/A.
/// The field of view is the circle inscribed in the image; pixels whose
/// centre lies outside it are not seen by every angle and are left at 0.
inline Tensor<float> backproject(const Sinogram& s, std::int64_t size) {
  s.validate();
  const std::int64_t A = s.angle_count(), D = s.detector_count();
  if (size != D) throw DimensionError("backproject: image size " + std::to_string(size) + " must equal detector count " +
                                      std::to_string(D));
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  const double origin = s.origin();
  std::vector<double> cs(static_cast<std::size_t>(A)), sn(static_cast<std::size_t>(A));
  for (std::int64_t a = 0; a < A; ++a) {
    cs[static_cast<std::size_t>(a)] = std::cos(s.angles[static_cast<std::size_t>(a)]);
    sn[static_cast<std::size_t>(a)] = std::sin(s.angles[static_cast<std::size_t>(a)]);
  }
  const double norm = M_PI / static_cast<double>(A);
  const double fov2 = (static_cast<double>(size) / 2.0) * (static_cast<double>(size) / 2.0);
  Tensor<float> img(Shape{1, 1, size, size});
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
      if (dx * dx + dy * dy > fov2) continue;
      double acc = 0.0;
      for (std::int64_t a = 0; a < A; ++a) {
        const double t = (static_cast<double>(x) - c) * cs[static_cast<std::size_t>(a)] +
                         (static_cast<double>(y) - c) * sn[static_cast<std::size_t>(a)] + origin;
        const double f = std::floor(t);
        const auto i0 = static_cast<std::int64_t>(f);
        const double w = t - f;
        const float* row = s.data.ptr() + a * D;
        if (i0 >= 0 && i0 < D) acc += (1.0 - w) * row[i0];
        if (i0 + 1 >= 0 && i0 + 1 < D) acc += w * row[i0 + 1];
      }
      img.at(0, 0, y, x) = static_cast<float>(acc * norm);
    }
  }
  return img;
}

/// backproject(ramp_filter(s)); no clamping.
inline Tensor<float> fbp(const Sinogram& s, const FilterSpec& spec, std::int64_t size) {
  return backproject(ramp_filter(s, spec), size);
}

}  // namespace sparsect
