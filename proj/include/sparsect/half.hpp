#pragma once

// IEEE 754 binary16 encoding with round-to-nearest-even, used to emulate
// FP16 storage on CPU.

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>

namespace sparsect::half {

inline constexpr float kMax = 65504.0f;

/// Encodes a float as binary16 bits (round to nearest, ties to even).
/// Values beyond the binary16 range become infinity; NaN stays NaN.
inline std::uint16_t encode(float value) noexcept {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
  const std::uint32_t exp = (bits >> 23) & 0xffu;
  std::uint32_t mant = bits & 0x7fffffu;

  if (exp == 0xffu) {
    return static_cast<std::uint16_t>(sign | 0x7c00u | (mant ? 0x200u : 0u));
  }
  const int e = static_cast<int>(exp) - 127 + 15;
  if (e >= 0x1f) return static_cast<std::uint16_t>(sign | 0x7c00u);

  if (e <= 0) {
    // Subnormal or underflow to zero.
    if (e < -10) return sign;
    mant |= 0x800000u;
    const int shift = 14 - e;
    const std::uint32_t half_mant = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    std::uint32_t rounded = half_mant;
    if (rem > halfway || (rem == halfway && (half_mant & 1u))) ++rounded;
    return static_cast<std::uint16_t>(sign | rounded);
  }

  std::uint32_t out = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (out & 1u))) ++out;  // may carry into exponent, incl. to inf
  return static_cast<std::uint16_t>(sign | out);
}

/// Decodes binary16 bits to float (exact).
inline float decode(std::uint16_t h) noexcept {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1fu;
  std::uint32_t mant = h & 0x3ffu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      int e = -1;
      do {
        ++e;
        mant <<= 1;
      } while ((mant & 0x400u) == 0);
      bits = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3ffu) << 13);
    }
  } else if (exp == 0x1f) {
    bits = sign | 0x7f800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

/// Rounds a value to the nearest binary16-representable value.
template <class T>
inline T quantize(T value) noexcept {
  return static_cast<T>(decode(encode(static_cast<float>(value))));
}

template <class T>
inline void quantize_inplace(std::span<T> values) noexcept {
  for (T& v : values) v = quantize(v);
}

template <class T>
inline bool representable(T value) noexcept {
  if (std::isnan(value)) return true;
  return quantize(value) == value;
}

}  // namespace sparsect::half
