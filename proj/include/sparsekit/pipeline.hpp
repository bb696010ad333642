/**
 * Copyright 2026 The sparsekit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef SPARSEKIT_PIPELINE_HPP
#define SPARSEKIT_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sparsekit/calibration.hpp"
#include "sparsekit/dataset.hpp"
#include "sparsekit/model.hpp"
#include "sparsekit/sparsity.hpp"
#include "sparsekit/syndata.hpp"

namespace sparsekit {

inline constexpr const char* kToolkitVersion = "0.1.0";

enum class CalibrationSourceKind { kDirectory, kFractalColored, kFractalGray, kWhiteNoise };

std::string_view to_string(CalibrationSourceKind kind);

struct CalibrationSource {
  CalibrationSourceKind kind = CalibrationSourceKind::kDirectory;
  /// Dataset directory when kind is kDirectory.
  std::filesystem::path path;
  std::size_t pool_size = 300;
  /// Synthetic render side; defaults to the model's input height (at least 32).
  std::optional<std::size_t> image_size;
  /// Chaos-game points; defaults to 100000 scaled by (image_size / 512)^2, at least 1000.
  std::optional<std::size_t> n_points;
  ColorizeRanges color;

  SyntheticOptions synthetic_options(const Shape& input_shape) const;
};

struct PipelineToggles {
  bool weight_correction = true;
  bool activation_bias_correction = true;
  bool bn_adaptation = false;
  bool finetune = true;
  bool quantize = false;
  bool fuse_bn_first = true;
  /// Keep every previously pruned weight pruned, even if recomputed scores
  /// would release it.
  bool strict_mask_superset = false;
};

struct PipelineConfig {
  std::filesystem::path model_path;
  CalibrationSource calibration;
  ScheduleConfig schedule;
  ImportanceCriterion criterion = ImportanceCriterion::kL2NormalizedMagnitude;
  std::set<std::string> exclude_layers;
  PipelineToggles toggles;
  TuneConfig tune;
  std::optional<double> max_accuracy_drop;
  std::optional<std::filesystem::path> eval_dataset;
  /// Overrides the eval dataset's / model's preprocessing when set.
  std::optional<Preprocess> preprocess;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> out_dir;

  /// Relative paths resolve against base_dir.
  static PipelineConfig from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

struct IterationRecord {
  std::size_t iteration = 0;
  double target_sparsity = 0.0;
  double achieved_sparsity = 0.0;
  std::map<std::string, double> layer_sparsity;
  std::optional<double> kd_loss_before;
  std::optional<double> kd_loss_after;
  std::optional<double> accuracy;
  bool accepted = true;
  double seconds = 0.0;
};

struct RunReport {
  nlohmann::json config;
  std::size_t prunable_weights = 0;
  std::optional<double> dense_accuracy;
  std::vector<IterationRecord> iterations;
  double final_sparsity = 0.0;
  std::optional<double> final_accuracy;
  std::optional<double> quantized_accuracy;
  bool stopped_early = false;
  std::map<std::string, std::string> artifacts;
  std::optional<nlohmann::json> error;
  double total_seconds = 0.0;

  /// Timing values live under the single "timings" key.
  nlohmann::json to_json() const;
};

struct PipelineResult {
  Model model;
  std::optional<Model> quantized;
  SparsityMask masks;
  RunReport report;
};

using LogFn = std::function<void(const std::string&)>;

/// Resolved input preprocessing for a config and model.
Preprocess resolve_preprocess(const PipelineConfig& cfg, const Model& model);

/// Calibration pool (N, C, H, W) from the configured source.
Tensorf build_calibration_pool(const PipelineConfig& cfg, const Model& model);

/// Iterative prune / correct / fine-tune loop, optional quantization, and
/// (when out_dir is set) sparse + quantized bundles, masks and report.json.
PipelineResult run_pipeline(const PipelineConfig& cfg, const LogFn& log = {});

/// Fraction of samples whose label is among the k largest logits; equal
/// logits rank the lower class index first.
double topk_accuracy(const Tensorf& logits, std::span<const long> labels, std::size_t k);

double evaluate_topk(const Model& model, const EvalDataset& dataset, std::size_t k,
                     const Preprocess& pre, std::size_t batch_size = 250);

struct AblationVariant {
  std::string name;
  /// JSON merge patch applied to the base config.
  nlohmann::json delta;
};

struct AblationRow {
  std::string name;
  bool ok = false;
  std::optional<double> accuracy;
  std::optional<double> quantized_accuracy;
  double sparsity = 0.0;
  std::string error;
};

struct AblationTable {
  std::optional<double> dense_accuracy;
  std::vector<AblationRow> rows;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Named variant sets: "corrections", "criteria", "data_source",
/// "colorization", "weight_decay", "schedule". Unknown names raise kConfig.
std::vector<AblationVariant> ablation_preset(std::string_view name);

/// Runs each variant with the base config's seed; failures are recorded per row.
AblationTable ablation_compare(const nlohmann::json& base_config,
                               const std::vector<AblationVariant>& variants,
                               const std::filesystem::path& base_dir = {}, const LogFn& log = {});

}  // namespace sparsekit

#endif  // SPARSEKIT_PIPELINE_HPP
