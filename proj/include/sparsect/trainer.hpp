#pragma once

// Adam with a step-decayed learning rate, plus the loss-scaled
// mixed-precision training loop.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparsect/autodiff.hpp"
#include "sparsect/dataset.hpp"
#include "sparsect/error.hpp"
#include "sparsect/model.hpp"
#include "sparsect/precision.hpp"
#include "sparsect/rng.hpp"

namespace sparsect {

struct TrainConfig {
  double lr0 = 3e-4;
  double decay = 0.95;
  int decay_every = 10;
  int epochs = 65;
  double adam_eps = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 1;
  PrecisionPolicy policy = PrecisionPolicy::o2();
  std::uint64_t seed = 0;
  SplitFractions splits;

  void validate() const {
    if (!(lr0 > 0)) throw ParameterError("lr0 must be positive");
    if (!(decay > 0) || decay > 1) throw ParameterError("decay must lie in (0, 1]");
    if (decay_every < 1) throw ParameterError("decay_every must be positive");
    if (epochs < 1) throw ParameterError("epochs must be at least 1");
    if (!(adam_eps > 0)) throw ParameterError("adam_eps must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ParameterError("Adam betas must lie in [0, 1)");
    if (batch_size < 1) throw ParameterError("batch_size must be positive");
    policy.validate();
    splits.validate();
  }
};

/// lr0 * decay^floor(epoch / decay_every).
inline double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) throw ParameterError("lr_at: epoch outside [0, epochs)");
  return cfg.lr0 * std::pow(cfg.decay, epoch / cfg.decay_every);
}

template <class T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  std::int64_t t = 0;
};

/// One bias-corrected Adam update of the FP32 masters; eps is added to the
/// square root of the corrected second moment. Compute copies are refreshed
/// by the caller per policy.
template <class T>
void adam_step(std::vector<NamedParameter<T>>& params, AdamState<T>& st, double lr, const TrainConfig& cfg) {
  if (st.m.empty()) {
    for (const auto& p : params) {
      st.m.emplace_back(p.param.master.shape());
      st.v.emplace_back(p.param.master.shape());
    }
  }
  if (st.m.size() != params.size()) throw GraphError("adam_step: optimizer state does not match parameters");
  ++st.t;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& w = params[k].param.master;
    const Tensor<T>& g = params[k].param.grad;
    Tensor<T>& m = st.m[k];
    Tensor<T>& v = st.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / c1, vhat = vi / c2;
      w[i] = static_cast<T>(w[i] - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
  }
}

struct StepResult {
  double loss = 0.0;  // unscaled MSE of the batch
  bool overflow = false;
  bool applied = false;
};

/// Mutable state carried across steps.
template <class T>
struct TrainState {
  AdamState<T> adam;
  LossScaler scaler;

  explicit TrainState(const PrecisionPolicy& policy) : scaler(policy) {}
};

namespace detail {
template <class T>
std::map<std::string, ops::BatchNormStats<T>> snapshot_stats(const NetworkGraph<T>& g) {
  return g.bn_stats();
}
}  // namespace detail

/// One loss-scaled optimisation step on a single batch. Under O2 a non-finite gradient or activation skips the
/// update and leaves masters and batch-norm statistics untouched; under O0 it
/// is a NumericError.
template <class T>
StepResult train_step(NetworkGraph<T>& model, const Tensor<T>& x, const Tensor<T>& y, TrainState<T>& state, double lr,
                      const TrainConfig& cfg) {
  const PrecisionPolicy& policy = cfg.policy;
  auto stats_before = detail::snapshot_stats(model);
  model.zero_grad();
  StepResult r;
  bool overflow = false;
  try {
    Tape<T> tape(policy);
    Var out = model.forward(tape, tape.input(x), ops::Mode::train, true);
    Var loss = tape.mse_loss(out, y);
    r.loss = tape.scalar(loss);
    if (!std::isfinite(r.loss)) {
      overflow = true;
    } else {
      overflow = tape.backward(loss, state.scaler.scale()).overflow;
    }
  } catch (const NumericError&) {
    if (!policy.half()) throw;
    overflow = true;
  }
  if (overflow && !policy.half()) throw NumericError("non-finite loss or gradient under O0");
  r.overflow = overflow;
  r.applied = state.scaler.update(overflow);
  if (!r.applied) {
    model.bn_stats() = std::move(stats_before);
    model.zero_grad();
    return r;
  }
  adam_step(model.parameters(), state.adam, lr, cfg);
  model.apply_policy(policy);
  return r;
}

/// Eval-mode output for a batch, computed with FP32 (O0) numerics from the
/// master weights.
template <class T>
Tensor<T> predict(NetworkGraph<T>& model, const Tensor<T>& x) {
  Tape<T> tape(PrecisionPolicy::o0());
  Var out = model.forward(tape, tape.input(x), ops::Mode::eval);
  return tape.value(out);
}

/// Artifact-removed image clamped to [0, 1].
template <class T>
Tensor<T> infer(NetworkGraph<T>& model, const Tensor<T>& image) {
  Tensor<T> y = predict(model, image);
  for (T& v : y.data()) v = std::clamp(v, T(0), T(1));
  return y;
}

/// Mean per-image MSE in eval mode under O0 numerics.
template <class T>
double evaluate_mse(NetworkGraph<T>& model, const std::vector<SamplePair>& pairs) {
  if (pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const auto& p : pairs) s += ops::mse_loss(predict(model, p.input.template cast<T>()), p.label.template cast<T>());
  return s / static_cast<double>(pairs.size());
}

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_mse = 0.0;  // mean batch loss over applied and skipped steps
  double val_mse = 0.0;
  double scale = 1.0;  // loss scale at epoch end
  std::int64_t skipped_steps = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_mse = std::numeric_limits<double>::infinity();
  NetworkGraph<float> best;
  double seconds = 0.0;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Called with "best" when validation improves and "final" at the end.
  std::function<void(const std::string&, const NetworkGraph<float>&, const EpochRecord&)> on_checkpoint;
};

/// Epoch loop over shuffled mini-batches. Shuffling uses the sub-stream
/// split(seed, 2); the model is expected to be initialised by the caller.
inline TrainResult train(NetworkGraph<float>& model, const DatasetSplits& data, const TrainConfig& cfg,
                         const TrainHooks& hooks = {}) {
  cfg.validate();
  if (data.train.empty()) throw ParameterError("train: empty training split");
  const auto t0 = std::chrono::steady_clock::now();
  model.apply_policy(cfg.policy);
  TrainState<float> state(cfg.policy);
  SplitMix64 shuffle_rng(split(cfg.seed, 2));
  TrainResult result;
  std::vector<std::size_t> order(data.train.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);
    const std::int64_t skipped_before = state.scaler.skipped();
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Tensor<float>*> xs, ys;
      for (std::size_t k = start; k < end; ++k) {
        xs.push_back(&data.train[order[k]].input);
        ys.push_back(&data.train[order[k]].label);
      }
      const StepResult s = train_step(model, stack_batch(xs), stack_batch(ys), state, lr, cfg);
      loss_sum += s.loss;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_mse = loss_sum / static_cast<double>(batches);
    rec.val_mse = evaluate_mse(model, data.val);
    rec.scale = state.scaler.scale();
    rec.skipped_steps = state.scaler.skipped() - skipped_before;
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    const bool improved = data.val.empty() ? epoch == cfg.epochs - 1 : rec.val_mse < result.best_val_mse;
    if (improved) {
      result.best_val_mse = rec.val_mse;
      result.best_epoch = epoch;
      result.best = model;
      if (hooks.on_checkpoint) hooks.on_checkpoint("best", model, rec);
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (hooks.on_checkpoint) hooks.on_checkpoint("final", model, result.history.back());
  return result;
}

}  // namespace sparsect
