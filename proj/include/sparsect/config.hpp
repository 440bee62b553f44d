#pragma once

// JSON run configuration. Every field has a default; unknown keys are
// rejected so a misspelt option cannot be silently ignored.
//
// {
//   "phantom":    {"size", "count", "void_count": [min, max], "radius": [min, max],
//                  "intensity": [min, max], "max_attempts", "material_value", "supersample"},
//   "projection": {"angles", "factor"},
//   "fbp":        {"window": "ramlak" | "hann", "zero_pad"},
//   "model":      {"name": "resattunet" | "unet", "encoder_filters", "kernel", "bn_eps", "bn_momentum"},
//   "train":      {"lr0", "decay", "decay_every", "epochs", "adam_eps", "beta1", "beta2", "batch_size",
//                  "opt_level": "O0" | "O2", "loss_scale", "dynamic_scale", "splits": [train, val, test]},
//   "metric":     {"bits", "window": "gaussian" | "block", "window_size", "sigma", "k1", "k2"}
// }
// Radii given as null fall back to 0.02*size and 0.1*size.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sparsect/dataset.hpp"
#include "sparsect/error.hpp"
#include "sparsect/metrics.hpp"
#include "sparsect/model.hpp"
#include "sparsect/phantom.hpp"
#include "sparsect/trainer.hpp"

namespace sparsect {

using json = nlohmann::json;

class ConfigError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

namespace detail {

inline void reject_unknown(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, _] : j.items())
    if (!ok.count(k)) throw ConfigError("unknown key '" + section + "." + k + "'");
}

template <class V>
void read(const json& j, const char* key, V& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError("invalid value for '" + section + "." + key + "'");
  }
}

template <class V>
void read_pair(const json& j, const char* key, V& lo, V& hi, const std::string& section) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2) throw ConfigError("'" + section + "." + key + "' must be a two-element array");
  try {
    lo = v[0].get<V>();
    hi = v[1].get<V>();
  } catch (const json::exception&) {
    throw ConfigError("invalid value for '" + section + "." + key + "'");
  }
}

}  // namespace detail

struct RunConfig {
  PhantomConfig phantom = PhantomConfig::for_size(128);
  std::int64_t phantom_count = 20;
  ProjectionProtocol projection;
  std::string model_name = "resattunet";
  ModelConfig model;
  TrainConfig train;
  MetricParams metric;

  void validate() const {
    phantom.validate();
    if (phantom_count < 1) throw ConfigError("phantom.count must be positive");
    projection.validate();
    model.validate();
    train.validate();
    metric.validate();
    if (phantom.size % model.size_multiple() != 0)
      throw ConfigError("phantom.size must be divisible by " + std::to_string(model.size_multiple()));
  }
};

inline RunConfig parse_run_config(const json& j) {
  RunConfig c;
  detail::reject_unknown(j, "config", {"phantom", "projection", "fbp", "model", "train", "metric"});

  if (j.contains("phantom")) {
    const json& p = j.at("phantom");
    detail::reject_unknown(p, "phantom", {"size", "count", "void_count", "radius", "intensity", "max_attempts",
                                          "material_value", "supersample"});
    std::int64_t size = c.phantom.size;
    detail::read(p, "size", size, "phantom");
    c.phantom = PhantomConfig::for_size(size);
    detail::read(p, "count", c.phantom_count, "phantom");
    detail::read_pair(p, "void_count", c.phantom.void_min, c.phantom.void_max, "phantom");
    if (p.contains("radius") && !p.at("radius").is_null()) {
      detail::read_pair(p, "radius", c.phantom.radius_min, c.phantom.radius_max, "phantom");
    }
    detail::read_pair(p, "intensity", c.phantom.intensity_min, c.phantom.intensity_max, "phantom");
    detail::read(p, "max_attempts", c.phantom.max_attempts, "phantom");
    detail::read(p, "material_value", c.phantom.material_value, "phantom");
    detail::read(p, "supersample", c.phantom.supersample, "phantom");
  }

  if (j.contains("projection")) {
    const json& p = j.at("projection");
    detail::reject_unknown(p, "projection", {"angles", "factor"});
    detail::read(p, "angles", c.projection.angles_total, "projection");
    detail::read(p, "factor", c.projection.factor, "projection");
  }
  if (j.contains("fbp")) {
    const json& p = j.at("fbp");
    detail::reject_unknown(p, "fbp", {"window", "zero_pad"});
    std::string w = to_string(c.projection.filter.window);
    detail::read(p, "window", w, "fbp");
    c.projection.filter.window = parse_window(w);
    detail::read(p, "zero_pad", c.projection.filter.zero_pad, "fbp");
  }
  if (j.contains("model")) {
    const json& p = j.at("model");
    detail::reject_unknown(p, "model", {"name", "encoder_filters", "kernel", "bn_eps", "bn_momentum"});
    detail::read(p, "name", c.model_name, "model");
    detail::read(p, "encoder_filters", c.model.encoder_filters, "model");
    detail::read(p, "kernel", c.model.kernel, "model");
    c.model.pad = c.model.kernel / 2;
    detail::read(p, "bn_eps", c.model.bn_eps, "model");
    detail::read(p, "bn_momentum", c.model.bn_momentum, "model");
  }
  if (c.model_name != "resattunet" && c.model_name != "unet") throw ConfigError("model.name must be resattunet or unet");
  if (j.contains("train")) {
    const json& p = j.at("train");
    detail::reject_unknown(p, "train", {"lr0", "decay", "decay_every", "epochs", "adam_eps", "beta1", "beta2",
                                        "batch_size", "opt_level", "loss_scale", "dynamic_scale", "splits"});
    TrainConfig& t = c.train;
    detail::read(p, "lr0", t.lr0, "train");
    detail::read(p, "decay", t.decay, "train");
    detail::read(p, "decay_every", t.decay_every, "train");
    detail::read(p, "epochs", t.epochs, "train");
    detail::read(p, "adam_eps", t.adam_eps, "train");
    detail::read(p, "beta1", t.beta1, "train");
    detail::read(p, "beta2", t.beta2, "train");
    detail::read(p, "batch_size", t.batch_size, "train");
    std::string level = to_string(t.policy.level);
    detail::read(p, "opt_level", level, "train");
    t.policy.level = parse_opt_level(level);
    t.policy.loss_scale = t.policy.half() ? 1024.0 : 1.0;
    detail::read(p, "loss_scale", t.policy.loss_scale, "train");
    detail::read(p, "dynamic_scale", t.policy.dynamic, "train");
    if (p.contains("splits")) {
      std::vector<double> s;
      detail::read(p, "splits", s, "train");
      if (s.size() != 3) throw ConfigError("train.splits must have three entries");
      t.splits = {s[0], s[1], s[2]};
    }
  }
  if (j.contains("metric")) {
    const json& p = j.at("metric");
    detail::reject_unknown(p, "metric", {"bits", "window", "window_size", "sigma", "k1", "k2"});
    MetricParams& m = c.metric;
    std::string w = m.window == SsimWindow::gaussian ? "gaussian" : "block";
    detail::read(p, "window", w, "metric");
    if (w == "block") {
      m = MetricParams::blocks();
    } else if (w != "gaussian") {
      throw ConfigError("metric.window must be gaussian or block");
    }
    detail::read(p, "bits", m.bits, "metric");
    detail::read(p, "window_size", m.window_size, "metric");
    detail::read(p, "sigma", m.sigma, "metric");
    detail::read(p, "k1", m.k1, "metric");
    detail::read(p, "k2", m.k2, "metric");
  }
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

// --- echoes ---------------------------------------------------------------

inline json to_json(const PrecisionPolicy& p) {
  return {{"opt_level", to_string(p.level)}, {"loss_scale", p.loss_scale}, {"dynamic", p.dynamic},
          {"bn_exempt", p.bn_exempt}};
}

inline PrecisionPolicy policy_from_json(const json& j) {
  PrecisionPolicy p;
  p.level = parse_opt_level(j.at("opt_level").get<std::string>());
  p.loss_scale = j.at("loss_scale").get<double>();
  p.dynamic = j.at("dynamic").get<bool>();
  p.bn_exempt = j.at("bn_exempt").get<bool>();
  return p;
}

/// Training hyperparameters without the precision policy.
inline json to_json(const TrainConfig& t) {
  return {{"lr0", t.lr0},           {"decay", t.decay},       {"decay_every", t.decay_every},
          {"epochs", t.epochs},     {"adam_eps", t.adam_eps}, {"beta1", t.beta1},
          {"beta2", t.beta2},       {"batch_size", t.batch_size}, {"seed", t.seed},
          {"splits", {t.splits.train, t.splits.val, t.splits.test}}};
}

inline json to_json(const ModelConfig& m) {
  return {{"encoder_filters", m.encoder_filters}, {"in_channels", m.in_channels}, {"out_channels", m.out_channels},
          {"kernel", m.kernel}, {"pad", m.pad}, {"use_attention", m.use_attention}, {"use_residual", m.use_residual},
          {"bn_eps", m.bn_eps}, {"bn_momentum", m.bn_momentum}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  m.encoder_filters = j.at("encoder_filters").get<std::vector<std::int64_t>>();
  m.in_channels = j.at("in_channels").get<std::int64_t>();
  m.out_channels = j.at("out_channels").get<std::int64_t>();
  m.kernel = j.at("kernel").get<int>();
  m.pad = j.at("pad").get<int>();
  m.use_attention = j.at("use_attention").get<bool>();
  m.use_residual = j.at("use_residual").get<bool>();
  m.bn_eps = j.at("bn_eps").get<double>();
  m.bn_momentum = j.at("bn_momentum").get<double>();
  return m;
}

inline json to_json(const EpochRecord& r) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"epoch", r.epoch},   {"lr", r.lr},       {"train_mse", num(r.train_mse)}, {"val_mse", num(r.val_mse)},
          {"scale", r.scale}, {"skipped_steps", r.skipped_steps}};
}

}  // namespace sparsect
