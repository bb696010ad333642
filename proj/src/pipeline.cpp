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
#include "sparsekit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "sparsekit/correction.hpp"
#include "sparsekit/quantization.hpp"
#include "sparsekit/rng.hpp"

namespace sparsekit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(CalibrationSourceKind kind) {
  switch (kind) {
    case CalibrationSourceKind::kDirectory: return "directory";
    case CalibrationSourceKind::kFractalColored: return "fractal_colored";
    case CalibrationSourceKind::kFractalGray: return "fractal_gray";
    case CalibrationSourceKind::kWhiteNoise: return "white_noise";
  }
  return "unknown";
}

namespace {

CalibrationSourceKind parse_source(const std::string& name) {
  if (name == "directory") return CalibrationSourceKind::kDirectory;
  if (name == "fractal_colored") return CalibrationSourceKind::kFractalColored;
  if (name == "fractal_gray") return CalibrationSourceKind::kFractalGray;
  if (name == "white_noise") return CalibrationSourceKind::kWhiteNoise;
  throw Error(ErrorKind::kConfig, "unknown calibration source '" + name + "'");
}

SyntheticKind synthetic_kind(CalibrationSourceKind kind) {
  switch (kind) {
    case CalibrationSourceKind::kFractalColored: return SyntheticKind::kFractalColored;
    case CalibrationSourceKind::kFractalGray: return SyntheticKind::kFractalGray;
    case CalibrationSourceKind::kWhiteNoise: return SyntheticKind::kWhiteNoise;
    case CalibrationSourceKind::kDirectory: break;
  }
  throw Error(ErrorKind::kConfig, "directory calibration source is not synthetic");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

// Seed streams of the pipeline.
constexpr std::uint64_t kPoolStream = 11;
constexpr std::uint64_t kSyntheticStream = 12;
constexpr std::uint64_t kTuneStream = 13;

const std::set<std::string> kConfigKeys = {
    "model",   "calibration",       "schedule",     "criterion",  "exclude_layers",
    "toggles", "tune",              "max_accuracy_drop", "eval_dataset", "preprocess",
    "seed",    "out_dir"};

}  // namespace

SyntheticOptions CalibrationSource::synthetic_options(const Shape& input_shape) const {
  SyntheticOptions opts;
  opts.color = color;
  opts.size = image_size.value_or(std::max<std::size_t>(32, input_shape.size() == 3 ? input_shape[1] : 0));
  if (n_points) {
    opts.n_points = *n_points;
  } else {
    const double area = static_cast<double>(opts.size) / 512.0;
    opts.n_points = std::max<std::size_t>(1000, static_cast<std::size_t>(std::llround(100000.0 * area * area)));
  }
  return opts;
}

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig cfg;
  try {
    require(j.is_object(), ErrorKind::kConfig, "config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      require(kConfigKeys.contains(key), ErrorKind::kConfig, "unknown config key '" + key + "'");
    }
    require(j.contains("model"), ErrorKind::kConfig, "config needs a 'model' bundle path");
    cfg.model_path = resolve(base_dir, j.at("model").get<std::string>());

    require(j.contains("calibration"), ErrorKind::kConfig, "config needs a 'calibration' source");
    const json& cal = j.at("calibration");
    cfg.calibration.kind = parse_source(cal.at("source").get<std::string>());
    if (cfg.calibration.kind == CalibrationSourceKind::kDirectory) {
      require(cal.contains("path"), ErrorKind::kConfig, "directory calibration needs 'path'");
      cfg.calibration.path = resolve(base_dir, cal.at("path").get<std::string>());
    } else {
      require(!cal.contains("path"), ErrorKind::kConfig,
              "synthetic calibration sources take no 'path'; exactly one source is allowed");
    }
    cfg.calibration.pool_size = cal.value("pool_size", cfg.calibration.pool_size);
    if (cal.contains("image_size")) cfg.calibration.image_size = cal.at("image_size").get<std::size_t>();
    if (cal.contains("n_points")) cfg.calibration.n_points = cal.at("n_points").get<std::size_t>();
    if (cal.contains("colorize")) {
      auto& c = cfg.calibration.color;
      const json& cj = cal.at("colorize");
      c.alpha_min = cj.value("alpha_min", c.alpha_min);
      c.alpha_max = cj.value("alpha_max", c.alpha_max);
      c.beta_min = cj.value("beta_min", c.beta_min);
      c.beta_max = cj.value("beta_max", c.beta_max);
    }

    if (j.contains("schedule")) {
      const json& s = j.at("schedule");
      cfg.schedule.initial = s.value("initial", cfg.schedule.initial);
      cfg.schedule.final = s.value("final", cfg.schedule.final);
      cfg.schedule.iterations = s.value("iterations", cfg.schedule.iterations);
    }
    if (j.contains("criterion")) cfg.criterion = parse_criterion(j.at("criterion").get<std::string>());
    if (j.contains("exclude_layers")) {
      cfg.exclude_layers = j.at("exclude_layers").get<std::set<std::string>>();
    }
    if (j.contains("toggles")) {
      const json& t = j.at("toggles");
      auto& g = cfg.toggles;
      g.weight_correction = t.value("weight_correction", g.weight_correction);
      g.activation_bias_correction = t.value("activation_bias_correction", g.activation_bias_correction);
      g.bn_adaptation = t.value("bn_adaptation", g.bn_adaptation);
      g.finetune = t.value("finetune", g.finetune);
      g.quantize = t.value("quantize", g.quantize);
      g.fuse_bn_first = t.value("fuse_bn_first", g.fuse_bn_first);
      g.strict_mask_superset = t.value("strict_mask_superset", g.strict_mask_superset);
    }
    if (j.contains("tune")) {
      const json& t = j.at("tune");
      auto& c = cfg.tune;
      c.lr_weights = t.value("lr_weights", c.lr_weights);
      c.lr_bias = t.value("lr_bias", c.lr_bias);
      c.batch_size = t.value("batch_size", c.batch_size);
      c.steps_per_iteration = t.value("steps_per_iteration", c.steps_per_iteration);
      c.weight_decay = t.value("weight_decay", c.weight_decay);
      c.max_cache_bytes = t.value("max_cache_bytes", c.max_cache_bytes);
    }
    if (j.contains("max_accuracy_drop") && !j.at("max_accuracy_drop").is_null()) {
      cfg.max_accuracy_drop = j.at("max_accuracy_drop").get<double>();
    }
    if (j.contains("eval_dataset") && !j.at("eval_dataset").is_null()) {
      cfg.eval_dataset = resolve(base_dir, j.at("eval_dataset").get<std::string>());
    }
    if (j.contains("preprocess")) cfg.preprocess = Preprocess::from_json(j.at("preprocess"));
    cfg.seed = j.value("seed", cfg.seed);
    cfg.tune.seed = derive_seed(cfg.seed, kTuneStream);
    if (j.contains("out_dir") && !j.at("out_dir").is_null()) {
      cfg.out_dir = resolve(base_dir, j.at("out_dir").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kConfig, "cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, "'" + path.string() + "': " + e.what());
  }
  return from_json(j, path.parent_path());
}

json PipelineConfig::to_json() const {
  json cal = {{"source", std::string(to_string(calibration.kind))},
              {"pool_size", calibration.pool_size}};
  if (calibration.kind == CalibrationSourceKind::kDirectory) {
    cal["path"] = calibration.path.string();
  } else {
    if (calibration.image_size) cal["image_size"] = *calibration.image_size;
    if (calibration.n_points) cal["n_points"] = *calibration.n_points;
    const auto& c = calibration.color;
    cal["colorize"] = {{"alpha_min", c.alpha_min}, {"alpha_max", c.alpha_max},
                       {"beta_min", c.beta_min},   {"beta_max", c.beta_max}};
  }
  json j = {
      {"model", model_path.string()},
      {"calibration", cal},
      {"schedule",
       {{"initial", schedule.initial}, {"final", schedule.final}, {"iterations", schedule.iterations}}},
      {"criterion", std::string(to_string(criterion))},
      {"exclude_layers", exclude_layers},
      {"toggles",
       {{"weight_correction", toggles.weight_correction},
        {"activation_bias_correction", toggles.activation_bias_correction},
        {"bn_adaptation", toggles.bn_adaptation},
        {"finetune", toggles.finetune},
        {"quantize", toggles.quantize},
        {"fuse_bn_first", toggles.fuse_bn_first},
        {"strict_mask_superset", toggles.strict_mask_superset}}},
      {"tune",
       {{"lr_weights", tune.lr_weights},
        {"lr_bias", tune.lr_bias},
        {"batch_size", tune.batch_size},
        {"steps_per_iteration", tune.steps_per_iteration},
        {"weight_decay", tune.weight_decay},
        {"max_cache_bytes", tune.max_cache_bytes}}},
      {"max_accuracy_drop", max_accuracy_drop ? json(*max_accuracy_drop) : json(nullptr)},
      {"eval_dataset", eval_dataset ? json(eval_dataset->string()) : json(nullptr)},
      {"seed", seed}};
  if (preprocess) j["preprocess"] = preprocess->to_json();
  return j;
}

void PipelineConfig::validate() const {
  schedule.validate();
  tune.validate();
  require(calibration.pool_size >= 1, ErrorKind::kConfig, "calibration pool_size must be positive");
  if (max_accuracy_drop) {
    require(eval_dataset.has_value(), ErrorKind::kConfig,
            "max_accuracy_drop needs an eval_dataset");
    require(*max_accuracy_drop >= 0.0, ErrorKind::kConfig, "max_accuracy_drop must be >= 0");
  }
}

json RunReport::to_json() const {
  json iters = json::array();
  json iter_seconds = json::array();
  for (const auto& r : iterations) {
    json entry = {{"iteration", r.iteration},
                  {"target_sparsity", r.target_sparsity},
                  {"achieved_sparsity", r.achieved_sparsity},
                  {"layer_sparsity", r.layer_sparsity},
                  {"accepted", r.accepted}};
    entry["kd_loss_before"] = r.kd_loss_before ? json(*r.kd_loss_before) : json(nullptr);
    entry["kd_loss_after"] = r.kd_loss_after ? json(*r.kd_loss_after) : json(nullptr);
    entry["accuracy"] = r.accuracy ? json(*r.accuracy) : json(nullptr);
    iters.push_back(std::move(entry));
    iter_seconds.push_back(r.seconds);
  }
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j = {{"toolkit_version", kToolkitVersion},
            {"config", config},
            {"prunable_weights", prunable_weights},
            {"dense_accuracy", opt(dense_accuracy)},
            {"iterations", std::move(iters)},
            {"final_sparsity", final_sparsity},
            {"final_accuracy", opt(final_accuracy)},
            {"quantized_accuracy", opt(quantized_accuracy)},
            {"stopped_early", stopped_early},
            {"artifacts", artifacts},
            {"timings", {{"total_seconds", total_seconds}, {"iteration_seconds", iter_seconds}}}};
  if (error) {
    j["error"] = *error;
    j["partial"] = true;
  }
  return j;
}

Preprocess resolve_preprocess(const PipelineConfig& cfg, const Model& model) {
  if (cfg.preprocess) return *cfg.preprocess;
  if (cfg.eval_dataset) {
    EvalDataset ds = load_dataset(*cfg.eval_dataset);
    if (!ds.preprocess.empty()) return ds.preprocess;
  }
  return Preprocess::from_model(model);
}

Tensorf build_calibration_pool(const PipelineConfig& cfg, const Model& model) {
  require(model.input_shape.size() == 3, ErrorKind::kConfig,
          "calibration needs a (C, H, W) model input shape");
  const Preprocess pre = resolve_preprocess(cfg, model);
  const auto& cal = cfg.calibration;
  if (cal.kind == CalibrationSourceKind::kDirectory) {
    const EvalDataset ds = load_dataset(cal.path);
    require(ds.size() > 0, ErrorKind::kData, "calibration directory '" + cal.path.string() + "' is empty");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, kPoolStream));
    rng.shuffle(order);
    order.resize(std::min(order.size(), cal.pool_size));
    const Preprocess& ds_pre = cfg.preprocess ? *cfg.preprocess : (ds.preprocess.empty() ? pre : ds.preprocess);
    return load_inputs(ds, order, model.input_shape, ds_pre);
  }
  const SyntheticKind kind = synthetic_kind(cal.kind);
  const SyntheticOptions opts = cal.synthetic_options(model.input_shape);
  const std::uint64_t root = derive_seed(cfg.seed, kSyntheticStream);
  Shape shape{cal.pool_size};
  shape.insert(shape.end(), model.input_shape.begin(), model.input_shape.end());
  Tensorf pool(shape);
  const std::size_t stride = shape_product(model.input_shape);
  parallel_for(cal.pool_size, [&](std::size_t i) {
    const SyntheticImage img = synthetic_image(kind, image_seed(root, i), opts);
    const Tensorf input = preprocess_image(img.image, model.input_shape, pre);
    std::copy_n(input.data(), stride, pool.data() + i * stride);
  });
  return pool;
}

double topk_accuracy(const Tensorf& logits, std::span<const long> labels, std::size_t k) {
  require(logits.rank() == 2 && logits.dim(0) == labels.size(), ErrorKind::kData,
          "logits " + shape_string(logits.shape()) + " vs " + std::to_string(labels.size()) +
              " labels");
  require(k >= 1, ErrorKind::kArgument, "k must be >= 1");
  require(!labels.empty(), ErrorKind::kData, "empty evaluation set");
  const std::size_t classes = logits.dim(1);
  std::size_t hits = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const long label = labels[n];
    require(label >= 0 && static_cast<std::size_t>(label) < classes, ErrorKind::kData,
            "label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    const float* row = logits.data() + n * classes;
    const float mine = row[label];
    std::size_t rank = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (row[c] > mine || (row[c] == mine && c < static_cast<std::size_t>(label))) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double evaluate_topk(const Model& model, const EvalDataset& dataset, std::size_t k,
                     const Preprocess& pre, std::size_t batch_size) {
  require(dataset.size() > 0, ErrorKind::kData, "empty evaluation dataset");
  require(dataset.labeled(), ErrorKind::kData, "evaluation dataset has unlabeled samples");
  std::vector<long> labels;
  labels.reserve(dataset.size());
  for (const auto& s : dataset.samples) labels.push_back(*s.label);
  std::size_t hits = 0;
  for (std::size_t begin = 0; begin < dataset.size(); begin += batch_size) {
    const std::size_t count = std::min(batch_size, dataset.size() - begin);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), begin);
    const Tensorf logits = forward(model, load_inputs(dataset, idx, model.input_shape, pre));
    const double acc = topk_accuracy(
        logits.reshaped({count, logits.size() / count}),
        std::span<const long>(labels).subspan(begin, count), k);
    hits += static_cast<std::size_t>(std::llround(acc * static_cast<double>(count)));
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::map<std::string, double> layer_sparsity(const Model& model) {
  std::map<std::string, double> out;
  for (std::size_t i : model.prunable_indices()) {
    const auto& w = *model.layers[i].weights;
    out[model.names[i]] = static_cast<double>(count_zeros(w)) / static_cast<double>(w.size());
  }
  return out;
}

void write_report(const RunReport& report, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream out(dir / "report.json", std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write report in '" + dir.string() + "'");
  out << report.to_json().dump(2) << '\n';
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const LogFn& log) {
  cfg.validate();
  const Stopwatch total;
  auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };

  PipelineResult result;
  RunReport& report = result.report;
  report.config = cfg.to_json();
  std::string stage = "load";
  std::size_t iteration = 0;

  try {
    Model dense = load_bundle(cfg.model_path);
    if (cfg.toggles.fuse_bn_first) {
      stage = "fuse_bn";
      dense = fuse_batchnorm(dense);
    }
    report.prunable_weights = dense.prunable_weight_count();

    stage = "calibration_pool";
    const Tensorf pool = build_calibration_pool(cfg, dense);
    const std::vector<Tensorf> batches = split_batches(pool, cfg.tune.batch_size);
    say("calibration pool: " + shape_string(pool.shape()));

    std::optional<EvalDataset> eval;
    Preprocess eval_pre;
    if (cfg.eval_dataset) {
      stage = "evaluate";
      eval = load_dataset(*cfg.eval_dataset);
      eval_pre = resolve_preprocess(cfg, dense);
      report.dense_accuracy = evaluate_topk(dense, *eval, 1, eval_pre);
      say("dense top-1: " + std::to_string(*report.dense_accuracy));
    }

    stage = "capture_dense";
    DenseInputs dense_inputs;
    if (cfg.toggles.activation_bias_correction) dense_inputs = capture_dense_inputs(dense, batches);
    std::vector<LayerCache> caches;
    if (cfg.toggles.finetune) caches = build_layer_cache(dense, batches, cfg.tune.max_cache_bytes);

    Model current = dense;
    SparsityMask previous_masks;
    result.masks = select_global_masks(importance_scores(dense, cfg.criterion, cfg.exclude_layers), 0.0);

    for (iteration = 1; iteration <= cfg.schedule.iterations; ++iteration) {
      const Stopwatch watch;
      IterationRecord record;
      record.iteration = iteration;
      record.target_sparsity = schedule_sparsity(iteration, cfg.schedule);

      stage = "mask_selection";
      SparsityMask masks = select_global_masks(
          importance_scores(current, cfg.criterion, cfg.exclude_layers), record.target_sparsity);
      if (cfg.toggles.strict_mask_superset && previous_masks.size() == masks.size()) {
        for (std::size_t m = 0; m < masks.size(); ++m) {
          masks.tensors[m].flat().array() *= previous_masks.tensors[m].flat().array();
        }
      }
      Model sparse = apply_masks(current, masks);

      if (cfg.toggles.weight_correction) {
        stage = "weight_correction";
        for (std::size_t m = 0; m < masks.size(); ++m) {
          const std::size_t i = *dense.index_of(masks.names[m]);
          auto& w = *sparse.layers[i].weights;
          w = correct_weight_statistics(*dense.layers[i].weights, w, masks.tensors[m]);
        }
      }
      if (cfg.toggles.activation_bias_correction) {
        stage = "activation_bias_correction";
        sparse = correct_activation_bias(dense, sparse, dense_inputs);
      }
      if (cfg.toggles.bn_adaptation) {
        stage = "bn_adaptation";
        sparse = adapt_batchnorm(sparse, batches);
      }
      if (cfg.toggles.finetune) {
        stage = "finetune";
        TuneConfig tune = cfg.tune;
        tune.seed = derive_seed(cfg.tune.seed, iteration);
        FinetuneResult tuned = finetune_all(sparse, masks, caches, tune);
        sparse = std::move(tuned.model);
        if (!tuned.records.empty()) {
          double before = 0.0, after = 0.0;
          for (const auto& r : tuned.records) {
            before += r.loss_before / static_cast<double>(r.elements);
            after += r.loss_after / static_cast<double>(r.elements);
          }
          record.kd_loss_before = before / static_cast<double>(tuned.records.size());
          record.kd_loss_after = after / static_cast<double>(tuned.records.size());
        }
      }

      record.achieved_sparsity = model_sparsity(sparse);
      record.layer_sparsity = layer_sparsity(sparse);
      if (eval) {
        stage = "evaluate";
        record.accuracy = evaluate_topk(sparse, *eval, 1, eval_pre);
        if (cfg.max_accuracy_drop &&
            *report.dense_accuracy - *record.accuracy > *cfg.max_accuracy_drop) {
          record.accepted = false;
        }
      }
      record.seconds = watch.seconds();
      std::ostringstream msg;
      msg << "iteration " << iteration << ": target " << std::fixed << std::setprecision(4)
          << record.target_sparsity << " achieved " << record.achieved_sparsity;
      if (record.accuracy) msg << " top-1 " << *record.accuracy;
      say(msg.str());
      const bool accepted = record.accepted;
      report.iterations.push_back(std::move(record));
      if (!accepted) {
        report.stopped_early = true;
        say("accuracy drop exceeded; keeping the previous model");
        break;
      }
      current = std::move(sparse);
      previous_masks = masks;
      result.masks = std::move(masks);
    }
    iteration = 0;

    report.final_sparsity = model_sparsity(current);
    if (eval) {
      report.final_accuracy = report.iterations.empty() || report.stopped_early
                                  ? (report.iterations.size() >= 2
                                         ? report.iterations[report.iterations.size() - 2].accuracy
                                         : report.dense_accuracy)
                                  : report.iterations.back().accuracy;
    }
    if (cfg.toggles.quantize) {
      stage = "quantize";
      result.quantized = quantize_model(current, batches);
      if (eval) {
        stage = "evaluate";
        report.quantized_accuracy = evaluate_topk(*result.quantized, *eval, 1, eval_pre);
      }
    }
    result.model = std::move(current);

    if (cfg.out_dir) {
      stage = "save";
      save_bundle(result.model, *cfg.out_dir / "sparse");
      report.artifacts["sparse_bundle"] = "sparse";
      save_masks(result.masks, *cfg.out_dir / "masks");
      report.artifacts["masks"] = "masks";
      if (result.quantized) {
        save_bundle(*result.quantized, *cfg.out_dir / "quantized");
        report.artifacts["quantized_bundle"] = "quantized";
      }
      report.total_seconds = total.seconds();
      write_report(report, *cfg.out_dir);
    }
    report.total_seconds = total.seconds();
  } catch (const Error& e) {
    std::string where = "stage '" + stage + "'";
    if (iteration > 0) where += " (iteration " + std::to_string(iteration) + ")";
    report.error = json{{"stage", stage}, {"iteration", iteration}, {"message", e.what()}};
    report.total_seconds = total.seconds();
    if (cfg.out_dir) {
      try {
        write_report(report, *cfg.out_dir);
      } catch (const Error&) {
        // the original error is the one worth reporting
      }
    }
    throw Error(e.kind(), where + ": " + e.what());
  }
  return result;
}

json AblationTable::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"name", r.name},
                         {"ok", r.ok},
                         {"accuracy", r.accuracy ? json(*r.accuracy) : json(nullptr)},
                         {"quantized_accuracy",
                          r.quantized_accuracy ? json(*r.quantized_accuracy) : json(nullptr)},
                         {"sparsity", r.sparsity},
                         {"error", r.error}});
  }
  return {{"dense_accuracy", dense_accuracy ? json(*dense_accuracy) : json(nullptr)},
          {"rows", std::move(rows_json)}};
}

std::string AblationTable::to_text() const {
  std::ostringstream os;
  os << std::left << std::setw(32) << "variant" << std::setw(12) << "sparsity" << std::setw(12)
     << "top-1" << std::setw(12) << "int8 top-1" << "status\n";
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * *v;
    return s.str();
  };
  if (dense_accuracy) {
    os << std::setw(32) << "(dense)" << std::setw(12) << "0.00" << std::setw(12)
       << pct(dense_accuracy) << std::setw(12) << "-" << "ok\n";
  }
  for (const auto& r : rows) {
    std::ostringstream sp;
    sp << std::fixed << std::setprecision(2) << 100.0 * r.sparsity;
    os << std::setw(32) << r.name << std::setw(12) << sp.str() << std::setw(12) << pct(r.accuracy)
       << std::setw(12) << pct(r.quantized_accuracy) << (r.ok ? "ok" : "failed: " + r.error)
       << '\n';
  }
  return os.str();
}

std::vector<AblationVariant> ablation_preset(std::string_view name) {
  auto toggles = [](bool wc, bool abc, bool ft) {
    return json{{"toggles",
                 {{"weight_correction", wc}, {"activation_bias_correction", abc}, {"finetune", ft}}}};
  };
  auto source = [](const char* kind) {
    return json{{"calibration", {{"source", kind}, {"path", nullptr}}}};
  };
  if (name == "corrections") {
    return {{"mask_only", toggles(false, false, false)},
            {"bias_corr", toggles(true, true, false)},
            {"bias_corr_finetune", toggles(true, true, true)}};
  }
  if (name == "criteria") {
    return {{"magnitude", {{"criterion", "magnitude"}}},
            {"l2_normalized", {{"criterion", "l2_normalized_magnitude"}}},
            {"lamp", {{"criterion", "lamp"}}}};
  }
  if (name == "data_source") {
    return {{"real", json::object()},
            {"fractal_colored", source("fractal_colored")},
            {"white_noise", source("white_noise")}};
  }
  if (name == "colorization") {
    return {{"fractal_colored", source("fractal_colored")},
            {"fractal_gray", source("fractal_gray")}};
  }
  if (name == "weight_decay") {
    return {{"weight_decay_0", {{"tune", {{"weight_decay", 0.0}}}}},
            {"weight_decay_1e-5", {{"tune", {{"weight_decay", 1e-5}}}}}};
  }
  if (name == "schedule") {
    return {{"one_shot", {{"schedule", {{"iterations", 1}}}}}, {"iterative", json::object()}};
  }
  throw Error(ErrorKind::kConfig, "unknown ablation preset '" + std::string(name) + "'");
}

AblationTable ablation_compare(const json& base_config, const std::vector<AblationVariant>& variants,
                               const fs::path& base_dir, const LogFn& log) {
  AblationTable table;
  for (const auto& variant : variants) {
    AblationRow row;
    row.name = variant.name;
    try {
      json patched = base_config;
      patched.merge_patch(variant.delta);
      PipelineConfig cfg = PipelineConfig::from_json(patched, base_dir);
      if (cfg.out_dir) cfg.out_dir = *cfg.out_dir / variant.name;
      if (log) log("variant '" + variant.name + "'");
      const PipelineResult result = run_pipeline(cfg, log);
      if (!table.dense_accuracy) table.dense_accuracy = result.report.dense_accuracy;
      row.ok = true;
      row.accuracy = result.report.final_accuracy;
      row.quantized_accuracy = result.report.quantized_accuracy;
      row.sparsity = result.report.final_sparsity;
    } catch (const Error& e) {
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace sparsekit
