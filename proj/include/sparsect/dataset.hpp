#pragma once

// Sample pairs for artifact removal: sparse-view FBP reconstruction as input,
// ground-truth phantom as label, both quantised to 8 bits and renormalised to
// [0, 1].

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sparsect/error.hpp"
#include "sparsect/fbp.hpp"
#include "sparsect/metrics.hpp"
#include "sparsect/phantom.hpp"
#include "sparsect/projector.hpp"
#include "sparsect/rng.hpp"
#include "sparsect/tensor.hpp"

namespace sparsect {

struct SamplePair {
  Tensor<float> input;  // (1,1,S,S), values k/255
  Tensor<float> label;
  std::uint64_t phantom_seed = 0;
  std::size_t index = 0;  // position in the phantom list
};

struct DatasetSplits {
  std::vector<SamplePair> train, val, test;

  const std::vector<SamplePair>& split(std::size_t i) const {
    return i == 0 ? train : i == 1 ? val : test;
  }
  std::size_t size() const { return train.size() + val.size() + test.size(); }
};

struct SplitFractions {
  double train = 0.8, val = 0.1, test = 0.1;

  void validate() const {
    if (train < 0 || val < 0 || test < 0) throw ParameterError("split fractions must be non-negative");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw ParameterError("split fractions must sum to 1");
  }
};

struct ProjectionProtocol {
  std::int64_t angles_total = 360;
  std::int64_t factor = 20;
  FilterSpec filter;

  void validate() const {
    if (angles_total < 1) throw ParameterError("angles_total must be positive");
    if (factor < 1 || factor > angles_total) throw ParameterError("factor must lie in [1, angles_total]");
  }
};

/// Quantises to 8 bits over [lo, hi] and maps back to k/255.
inline Tensor<float> quantize_normalized(const Tensor<float>& t, double lo, double hi) {
  Tensor<float> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<float>(quantize_level(t[i], lo, hi)) / 255.0f;
  return out;
}

struct QuantizedPair {
  Tensor<float> input, label;
  bool degenerate = false;  // label was constant; both quantised to zero
};

/// Both images are clamped to the label's [min, max] range before
/// quantisation, so input and label share one intensity scale.
inline QuantizedPair quantize_pair(const Tensor<float>& recon, const Tensor<float>& label) {
  if (!(recon.shape() == label.shape())) throw DimensionError("quantize_pair: input and label shapes differ");
  const auto [lo_it, hi_it] = std::minmax_element(label.vec().begin(), label.vec().end());
  const double lo = *lo_it, hi = *hi_it;
  QuantizedPair q{quantize_normalized(recon, lo, hi), quantize_normalized(label, lo, hi), !(hi > lo)};
  return q;
}

/// FBP of one phantom from every `factor`-th projection angle.
inline Tensor<float> sparse_reconstruction(const Tensor<float>& image, const ProjectionProtocol& proto) {
  proto.validate();
  const Sinogram dense = radon_forward(image, uniform_angles(proto.angles_total));
  return fbp(subsample(dense, proto.factor), proto.filter, image.shape().h());
}

inline SamplePair make_sample(const Phantom& p, std::size_t index, const ProjectionProtocol& proto) {
  const Tensor<float> recon = sparse_reconstruction(p.image, proto);
  auto q = quantize_pair(recon, p.image);
  return SamplePair{std::move(q.input), std::move(q.label), p.seed, index};
}

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Shuffles 0..n-1 with `seed` and cuts it into round(f*n)-sized pieces;
/// the test split takes the remainder.
inline SplitIndices assign_splits(std::size_t n, const SplitFractions& f, std::uint64_t seed) {
  f.validate();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  SplitMix64 rng(seed);
  rng.shuffle(perm);
  const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n))));
  const auto n_val =
      std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n))));
  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
               perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return s;
}

inline DatasetSplits split_samples(std::vector<SamplePair> samples, const SplitFractions& f, std::uint64_t seed) {
  const SplitIndices idx = assign_splits(samples.size(), f, seed);
  DatasetSplits d;
  for (auto i : idx.train) d.train.push_back(samples[i]);
  for (auto i : idx.val) d.val.push_back(samples[i]);
  for (auto i : idx.test) d.test.push_back(samples[i]);
  return d;
}

inline DatasetSplits build_dataset(const std::vector<Phantom>& phantoms, const ProjectionProtocol& proto,
                                   std::uint64_t seed, const SplitFractions& fractions = {},
                                   std::size_t* degenerate_count = nullptr) {
  if (phantoms.empty()) throw ParameterError("build_dataset: no phantoms");
  std::vector<SamplePair> samples;
  std::size_t degenerate = 0;
  for (std::size_t i = 0; i < phantoms.size(); ++i) {
    const Tensor<float> recon = sparse_reconstruction(phantoms[i].image, proto);
    auto q = quantize_pair(recon, phantoms[i].image);
    degenerate += q.degenerate;
    samples.push_back(SamplePair{std::move(q.input), std::move(q.label), phantoms[i].seed, i});
  }
  if (degenerate_count) *degenerate_count = degenerate;
  return split_samples(std::move(samples), fractions, seed);
}

/// Stacks (1,1,S,S) images along the batch axis.
inline Tensor<float> stack_batch(const std::vector<const Tensor<float>*>& images) {
  if (images.empty()) throw DimensionError("stack_batch: empty batch");
  const Shape& s = images.front()->shape();
  Tensor<float> out(Shape{static_cast<std::int64_t>(images.size()), s.c(), s.h(), s.w()});
  float* dst = out.ptr();
  for (const auto* img : images) {
    if (!(img->shape() == s)) throw DimensionError("stack_batch: mixed image shapes");
    dst = std::copy(img->vec().begin(), img->vec().end(), dst);
  }
  return out;
}

}  // namespace sparsect
