#pragma once

// Per-split PSNR/SSIM of trained models and of the sparse-FBP inputs.

#include <string>
#include <utility>
#include <vector>

#include "sparsect/dataset.hpp"
#include "sparsect/metrics.hpp"
#include "sparsect/model.hpp"
#include "sparsect/precision.hpp"
#include "sparsect/trainer.hpp"

namespace sparsect {

/// "ResAttUnet(O2)" style row label.
inline std::string display_name(const std::string& model, OptLevel level) {
  std::string base = model == "resattunet" ? "ResAttUnet" : model == "unet" ? "Unet" : model;
  return base + "(" + to_string(level) + ")";
}

inline constexpr const char* kInputRow = "FBP input";

/// Model outputs and labels are quantised to 8 bits before scoring.
inline ReportRow evaluate_model(const std::string& label, NetworkGraph<float>& model, const DatasetSplits& d,
                                const MetricParams& p = {}) {
  ReportRow row{label, {}};
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<Image8> preds, labels;
    for (const auto& pair : d.split(s)) {
      preds.push_back(quantize_image(infer(model, pair.input)));
      labels.push_back(quantize_image(pair.label));
    }
    row.splits[s] = score_split(preds, labels, p);
  }
  return row;
}

/// Scores the network inputs themselves against the labels.
inline ReportRow evaluate_inputs(const DatasetSplits& d, const MetricParams& p = {}) {
  ReportRow row{kInputRow, {}};
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<Image8> inputs, labels;
    for (const auto& pair : d.split(s)) {
      inputs.push_back(quantize_image(pair.input));
      labels.push_back(quantize_image(pair.label));
    }
    row.splits[s] = score_split(inputs, labels, p);
  }
  return row;
}

inline EvalReport evaluate(const std::vector<std::pair<std::string, NetworkGraph<float>*>>& models,
                           const DatasetSplits& d, const MetricParams& p = {}, bool with_input_row = true) {
  EvalReport r;
  for (const auto& [label, model] : models) r.rows.push_back(evaluate_model(label, *model, d, p));
  if (with_input_row) r.rows.push_back(evaluate_inputs(d, p));
  return r;
}

}  // namespace sparsect
