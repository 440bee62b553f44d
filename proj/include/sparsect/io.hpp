#pragma once

// On-disk formats.
//
// Tensor container (little-endian):
//   bytes 0-3   magic "TSR1"
//   byte  4     dtype code: 1 = FP32, 2 = FP16 (binary16), 3 = U8
//   byte  5     rank r (0..4)
//   r x u32     extents
//   payload     product(extents) elements, row-major
//
// Phantoms and sinograms carry a JSON sidecar next to the container
// (same stem, ".json").

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"
#include "sparsect/error.hpp"
#include "sparsect/half.hpp"
#include "sparsect/metrics.hpp"
#include "sparsect/phantom.hpp"
#include "sparsect/projector.hpp"
#include "sparsect/tensor.hpp"

namespace sparsect::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr char kMagic[4] = {'T', 'S', 'R', '1'};

inline std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::FP32: return 4;
    case DType::FP16E: return 2;
    case DType::U8: return 1;
  }
  throw IoError("unknown dtype");
}

/// Serialises to the container layout above, using the tensor's dtype.
template <class T>
std::vector<std::uint8_t> encode_tensor(const Tensor<T>& t) {
  const Shape& s = t.shape();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(static_cast<std::uint8_t>(t.dtype()));
  out.push_back(static_cast<std::uint8_t>(s.rank()));
  for (int i = 0; i < s.rank(); ++i) {
    const auto d = static_cast<std::uint64_t>(s[i]);
    if (d > 0xffffffffu) throw IoError("extent too large for container");
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(d >> (8 * b)));
  }
  out.reserve(out.size() + t.size() * dtype_size(t.dtype()));
  for (T v : t.data()) {
    switch (t.dtype()) {
      case DType::FP32: {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
        break;
      }
      case DType::FP16E: {
        if (!half::representable(v)) throw IoError("value not representable in binary16");
        const std::uint16_t bits = half::encode(static_cast<float>(v));
        out.push_back(static_cast<std::uint8_t>(bits));
        out.push_back(static_cast<std::uint8_t>(bits >> 8));
        break;
      }
      case DType::U8: {
        if (!(v >= 0 && v <= 255) || std::nearbyint(v) != v) throw IoError("value not representable as u8");
        out.push_back(static_cast<std::uint8_t>(v));
        break;
      }
    }
  }
  return out;
}

template <class T = float>
Tensor<T> decode_tensor(const std::vector<std::uint8_t>& buf) {
  if (buf.size() < 6 || !std::equal(kMagic, kMagic + 4, buf.begin())) throw IoError("not a TSR1 container");
  const std::uint8_t code = buf[4];
  if (code < 1 || code > 3) throw IoError("unknown dtype code " + std::to_string(code));
  const auto dtype = static_cast<DType>(code);
  const int rank = buf[5];
  if (rank > Shape::kMaxRank) throw IoError("container rank exceeds 4");
  std::size_t pos = 6;
  if (buf.size() < pos + 4 * static_cast<std::size_t>(rank)) throw IoError("truncated container header");
  std::vector<std::int64_t> dims;
  for (int i = 0; i < rank; ++i, pos += 4) {
    std::uint32_t d = 0;
    for (int b = 0; b < 4; ++b) d |= static_cast<std::uint32_t>(buf[pos + static_cast<std::size_t>(b)]) << (8 * b);
    dims.push_back(d);
  }
  const Shape shape(dims.begin(), dims.end());
  const std::size_t n = shape.numel(), width = dtype_size(dtype);
  if (buf.size() != pos + n * width) throw IoError("container payload length does not match its header");
  std::vector<T> data(n);
  for (std::size_t i = 0; i < n; ++i, pos += width) {
    switch (dtype) {
      case DType::FP32: {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[pos + static_cast<std::size_t>(b)]) << (8 * b);
        data[i] = static_cast<T>(std::bit_cast<float>(bits));
        break;
      }
      case DType::FP16E: {
        const auto bits = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        data[i] = static_cast<T>(half::decode(bits));
        break;
      }
      case DType::U8: data[i] = static_cast<T>(buf[pos]); break;
    }
  }
  return Tensor<T>(shape, std::move(data), dtype);
}

inline std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

template <class T>
void write_tensor(const fs::path& path, const Tensor<T>& t) {
  write_bytes(path, encode_tensor(t));
}

template <class T = float>
Tensor<T> read_tensor(const fs::path& path) {
  return decode_tensor<T>(read_bytes(path));
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline fs::path sidecar_path(const fs::path& tensor_path) {
  fs::path p = tensor_path;
  return p.replace_extension(".json");
}

// ---------------------------------------------------------------------------
// PGM

/// Binary P5, maxval 255.
inline void write_pgm(const fs::path& path, const Image8& img) {
  std::vector<std::uint8_t> bytes;
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  bytes.assign(header.begin(), header.end());
  bytes.insert(bytes.end(), img.pixels.begin(), img.pixels.end());
  write_bytes(path, bytes);
}

inline Image8 read_pgm(const fs::path& path) {
  const auto bytes = read_bytes(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && (std::isspace(bytes[pos]) || bytes[pos] == '#')) {
      if (bytes[pos] == '#')
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      else
        ++pos;
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    return t;
  };
  if (token() != "P5") throw IoError(path.string() + " is not a binary PGM");
  Image8 img;
  try {
    img.width = std::stoll(token());
    img.height = std::stoll(token());
    if (std::stoi(token()) != 255) throw IoError("only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw IoError("malformed PGM header in " + path.string());
  }
  ++pos;
  const auto n = static_cast<std::size_t>(img.width * img.height);
  if (bytes.size() != pos + n) throw IoError("PGM payload length mismatch in " + path.string());
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

// ---------------------------------------------------------------------------
// phantom / sinogram persistence

inline json phantom_sidecar(const Phantom& p) {
  json voids = json::array();
  for (const Void& v : p.voids) voids.push_back({{"cx", v.cx}, {"cy", v.cy}, {"r", v.r}, {"intensity", v.intensity}});
  return {{"seed", p.seed},
          {"material_value", p.material_value},
          {"placement_failures", p.placement_failures},
          {"voids", voids}};
}

inline void save_phantom(const fs::path& path, const Phantom& p) {
  write_tensor(path, p.image);
  write_json(sidecar_path(path), phantom_sidecar(p));
}

inline Phantom load_phantom(const fs::path& path) {
  Phantom p;
  p.image = read_tensor<float>(path);
  const json j = read_json(sidecar_path(path));
  try {
    p.seed = j.at("seed").get<std::uint64_t>();
    p.material_value = j.at("material_value").get<double>();
    p.placement_failures = j.value("placement_failures", std::int64_t{0});
    for (const auto& v : j.at("voids"))
      p.voids.push_back({v.at("cx").get<double>(), v.at("cy").get<double>(), v.at("r").get<double>(),
                         v.at("intensity").get<double>()});
  } catch (const json::exception& e) {
    throw IoError("malformed phantom sidecar for " + path.string() + ": " + e.what());
  }
  return p;
}

inline void save_sinogram(const fs::path& path, const Sinogram& s, const json& extra = json::object()) {
  write_tensor(path, s.data);
  json j = extra;
  j["angles"] = s.angles;
  j["detector_spacing"] = s.detector_spacing;
  j["origin"] = s.origin();
  write_json(sidecar_path(path), j);
}

inline Sinogram load_sinogram(const fs::path& path) {
  Sinogram s;
  s.data = read_tensor<float>(path);
  const json j = read_json(sidecar_path(path));
  try {
    s.angles = j.at("angles").get<std::vector<double>>();
    s.detector_spacing = j.value("detector_spacing", 1.0);
  } catch (const json::exception& e) {
    throw IoError("malformed sinogram sidecar for " + path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

/// Sorted list of "*.tsr" files in a directory.
inline std::vector<fs::path> list_tensors(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".tsr") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace sparsect::io
