#pragma once

// On-disk layouts for training runs and datasets.
//
// Checkpoint directory:
//   manifest.json      configuration echo plus one entry per tensor
//   params/<name>.tsr  FP32 master weights
//   buffers/<name>.tsr batch-norm running statistics
//
// Dataset directory:
//   dataset.json                      provenance and split membership
//   <split>/<index>_input.tsr         sparse-FBP input, U8 levels
//   <split>/<index>_label.tsr         ground truth, U8 levels

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sparsect/config.hpp"
#include "sparsect/dataset.hpp"
#include "sparsect/io.hpp"
#include "sparsect/metrics.hpp"
#include "sparsect/model.hpp"
#include "sparsect/trainer.hpp"

namespace sparsect::io {

inline constexpr const char* kCheckpointFormat = "sparsect-checkpoint-1";

inline void save_checkpoint(const fs::path& dir, const NetworkGraph<float>& g, const TrainConfig& cfg, int epoch,
                            const json& metrics) {
  fs::create_directories(dir / "params");
  fs::create_directories(dir / "buffers");
  json params = json::array(), buffers = json::array();
  for (const auto& p : g.parameters()) {
    const std::string file = "params/" + p.name + ".tsr";
    Tensor<float> master = p.param.master;
    master.set_dtype(DType::FP32);
    write_tensor(dir / file, master);
    params.push_back({{"name", p.name}, {"shape", master.shape().dims()}, {"dtype", "fp32"}, {"file", file}});
  }
  for (const auto& [name, st] : g.bn_stats()) {
    for (const auto& [suffix, t] : {std::pair{"running_mean", &st.running_mean}, std::pair{"running_var", &st.running_var}}) {
      const std::string file = "buffers/" + name + "." + suffix + ".tsr";
      write_tensor(dir / file, *t);
      buffers.push_back({{"name", name + "." + suffix}, {"shape", t->shape().dims()}, {"dtype", "fp32"}, {"file", file}});
    }
  }
  json manifest = {{"format", kCheckpointFormat},
                   {"model", g.model_name()},
                   {"model_config", to_json(g.config())},
                   {"policy", to_json(cfg.policy)},
                   {"train_config", to_json(cfg)},
                   {"epoch", epoch},
                   {"metrics", metrics},
                   {"parameter_count", g.parameter_count()},
                   {"parameters", params},
                   {"buffers", buffers}};
  write_json(dir / "manifest.json", manifest);
}

struct LoadedCheckpoint {
  NetworkGraph<float> model;
  json manifest;
};

inline LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  const json m = read_json(dir / "manifest.json");
  try {
    if (m.at("format").get<std::string>() != kCheckpointFormat) throw IoError("unsupported checkpoint format");
    const ModelConfig cfg = model_config_from_json(m.at("model_config"));
    NetworkGraph<float> g = build_resattunet<float>(cfg, 0);
    if (g.model_name() != m.at("model").get<std::string>()) throw IoError("checkpoint model name does not match config");
    std::size_t seen = 0;
    for (const auto& e : m.at("parameters")) {
      const std::string name = e.at("name").get<std::string>();
      if (!g.has_param(name)) throw IoError("checkpoint has unknown parameter " + name);
      Tensor<float> t = read_tensor<float>(dir / e.at("file").get<std::string>());
      Parameter<float>& p = g.param(name);
      if (!(t.shape() == p.master.shape())) throw IoError("shape mismatch for parameter " + name);
      p = Parameter<float>(std::move(t));
      ++seen;
    }
    if (seen != g.parameters().size()) throw IoError("checkpoint is missing parameters");
    for (const auto& e : m.at("buffers")) {
      const std::string name = e.at("name").get<std::string>();
      const auto dot = name.rfind('.');
      auto it = g.bn_stats().find(name.substr(0, dot));
      if (dot == std::string::npos || it == g.bn_stats().end()) throw IoError("checkpoint has unknown buffer " + name);
      Tensor<float> t = read_tensor<float>(dir / e.at("file").get<std::string>());
      Tensor<float>& dst = name.substr(dot + 1) == "running_mean" ? it->second.running_mean : it->second.running_var;
      if (!(t.shape() == dst.shape())) throw IoError("shape mismatch for buffer " + name);
      dst = std::move(t);
    }
    g.apply_policy(PrecisionPolicy::o0());
    return {std::move(g), m};
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  }
}

inline void append_history(const fs::path& path, const EpochRecord& r) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(r).dump() << "\n";
}

/// Trains and writes `<dir>/best`, `<dir>/final` and `<dir>/history.jsonl`.
inline TrainResult train_to_directory(NetworkGraph<float>& model, const DatasetSplits& data, const TrainConfig& cfg,
                                      const fs::path& dir,
                                      const std::function<void(const EpochRecord&)>& progress = {}) {
  fs::create_directories(dir);
  fs::remove(dir / "history.jsonl");
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    append_history(dir / "history.jsonl", r);
    if (progress) progress(r);
  };
  hooks.on_checkpoint = [&](const std::string& kind, const NetworkGraph<float>& g, const EpochRecord& r) {
    fs::remove_all(dir / kind);
    save_checkpoint(dir / kind, g, cfg, r.epoch, to_json(r));
  };
  return train(model, data, cfg, hooks);
}

// ---------------------------------------------------------------------------
// datasets

inline Tensor<float> to_levels(const Tensor<float>& normalized) {
  Tensor<float> t(normalized.shape(), DType::U8);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::nearbyint(normalized[i] * 255.0f);
  return t;
}

inline Tensor<float> from_levels(const Tensor<float>& levels) {
  Tensor<float> t(levels.shape());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = levels[i] / 255.0f;
  return t;
}

inline void save_dataset(const fs::path& dir, const DatasetSplits& d, const json& provenance) {
  json members = json::object();
  for (std::size_t s = 0; s < 3; ++s) {
    json list = json::array();
    for (const auto& p : d.split(s)) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "%04zu", p.index);
      write_tensor(dir / kSplitNames[s] / (std::string(stem) + "_input.tsr"), to_levels(p.input));
      write_tensor(dir / kSplitNames[s] / (std::string(stem) + "_label.tsr"), to_levels(p.label));
      list.push_back({{"index", p.index}, {"phantom_seed", p.phantom_seed}, {"stem", stem}});
    }
    members[kSplitNames[s]] = list;
  }
  json j = provenance;
  j["splits"] = members;
  write_json(dir / "dataset.json", j);
}

inline DatasetSplits load_dataset(const fs::path& dir) {
  const json j = read_json(dir / "dataset.json");
  DatasetSplits d;
  try {
    for (std::size_t s = 0; s < 3; ++s) {
      auto& out = s == 0 ? d.train : s == 1 ? d.val : d.test;
      for (const auto& e : j.at("splits").at(kSplitNames[s])) {
        const std::string stem = e.at("stem").get<std::string>();
        SamplePair p;
        p.input = from_levels(read_tensor<float>(dir / kSplitNames[s] / (stem + "_input.tsr")));
        p.label = from_levels(read_tensor<float>(dir / kSplitNames[s] / (stem + "_label.tsr")));
        p.index = e.at("index").get<std::size_t>();
        p.phantom_seed = e.at("phantom_seed").get<std::uint64_t>();
        out.push_back(std::move(p));
      }
    }
  } catch (const json::exception& e) {
    throw IoError("malformed dataset manifest in " + dir.string() + ": " + e.what());
  }
  return d;
}

// ---------------------------------------------------------------------------
// reports

inline json metric_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline json to_json(const EvalReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json psnr = json::object(), ssim = json::object(), counts = json::object();
    for (std::size_t s = 0; s < 3; ++s) {
      psnr[kSplitNames[s]] = metric_json(row.splits[s].psnr);
      ssim[kSplitNames[s]] = metric_json(row.splits[s].ssim);
      counts[kSplitNames[s]] = row.splits[s].images;
    }
    rows.push_back({{"model", row.model}, {"psnr", psnr}, {"ssim", ssim}, {"images", counts}});
  }
  json res = json::array();
  for (const auto& x : r.resources)
    res.push_back({{"model", x.model},
                   {"o0_bytes", x.o0_bytes},
                   {"o0_seconds", x.o0_seconds},
                   {"o2_bytes", x.o2_bytes},
                   {"o2_seconds", x.o2_seconds},
                   {"memory_saving", x.memory_saving()},
                   {"time_saving", x.time_saving()}});
  return {{"columns", {"model", "psnr.train", "psnr.val", "psnr.test", "ssim.train", "ssim.val", "ssim.test"}},
          {"rows", rows},
          {"resources", res}};
}

}  // namespace sparsect::io
