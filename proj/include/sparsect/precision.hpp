#pragma once

// Mixed-precision numeric policy. O0 is plain FP32; O2 keeps FP32 master
// weights, computes with binary16-rounded copies, accumulates in FP32 and
// exempts batch norm. Loss scaling guards small gradients against FP16
// underflow.

#include <cstdint>
#include <string>
#include <string_view>

#include "sparsect/error.hpp"
#include "sparsect/tensor.hpp"

namespace sparsect {

enum class OptLevel { O0, O2 };

inline std::string to_string(OptLevel l) { return l == OptLevel::O0 ? "O0" : "O2"; }

inline OptLevel parse_opt_level(std::string_view s) {
  if (s == "O0") return OptLevel::O0;
  if (s == "O2") return OptLevel::O2;
  throw ParameterError("unsupported opt level '" + std::string(s) + "' (expected O0 or O2)");
}

struct PrecisionPolicy {
  OptLevel level = OptLevel::O0;
  double loss_scale = 1.0;
  bool dynamic = false;
  bool bn_exempt = true;

  static PrecisionPolicy o0() { return {}; }
  static PrecisionPolicy o2(double scale = 1024.0, bool dynamic = false) {
    return {OptLevel::O2, scale, dynamic, true};
  }

  bool half() const noexcept { return level == OptLevel::O2; }
  /// Loss scale actually applied; identity under O0.
  double effective_scale() const noexcept { return half() ? loss_scale : 1.0; }

  void validate() const {
    if (!(loss_scale > 0)) throw ParameterError("loss_scale must be positive");
    if (half() && !bn_exempt) throw ParameterError("O2 requires batch-norm exemption");
  }
};

/// Trainable tensor with its FP32 master copy and gradient. `compute` is the
/// policy-rounded copy the forward pass reads.
template <class T>
struct Parameter {
  Tensor<T> master;
  Tensor<T> compute;
  Tensor<T> grad;

  Parameter() = default;
  explicit Parameter(Tensor<T> init) : master(std::move(init)), compute(master), grad(master.shape()) {}

  void zero_grad() { std::fill(grad.vec().begin(), grad.vec().end(), T(0)); }
};

template <class T>
void apply_policy(Parameter<T>& p, const PrecisionPolicy& policy) {
  p.compute = policy.half() ? to_half(p.master) : p.master;
  if (!policy.half()) p.compute.set_dtype(DType::FP32);
}

/// Static or dynamic loss scale. Dynamic mode halves on overflow and doubles
/// after `growth_interval` consecutive clean steps.
class LossScaler {
 public:
  explicit LossScaler(const PrecisionPolicy& policy, std::int64_t growth_interval = 2000)
      : scale_(policy.effective_scale()), dynamic_(policy.half() && policy.dynamic), growth_interval_(growth_interval) {}

  double scale() const noexcept { return scale_; }
  std::int64_t skipped() const noexcept { return skipped_; }

  /// Records a step outcome; returns true when the optimizer step may proceed.
  bool update(bool overflow) {
    if (overflow) {
      ++skipped_;
      clean_ = 0;
      if (dynamic_) scale_ = std::max(scale_ * 0.5, 1.0 / 65536.0);
      return false;
    }
    if (dynamic_ && ++clean_ >= growth_interval_) {
      scale_ *= 2.0;
      clean_ = 0;
    }
    return true;
  }

 private:
  double scale_;
  bool dynamic_;
  std::int64_t growth_interval_;
  std::int64_t clean_ = 0;
  std::int64_t skipped_ = 0;
};

}  // namespace sparsect
