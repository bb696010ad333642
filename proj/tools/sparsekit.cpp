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
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "sparsekit/pipeline.hpp"
#include "sparsekit/quantization.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sparsekit;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool verbose = false;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kConfig, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, "'" + path.string() + "': " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

/// Config file with --seed / --out-dir applied on top.
json load_config_json(const Globals& g) {
  require(!g.config.empty(), ErrorKind::kConfig, "--config is required");
  json j = read_json(g.config);
  require(j.is_object(), ErrorKind::kConfig, "config must be a JSON object");
  if (g.seed) j["seed"] = *g.seed;
  if (!g.out_dir.empty()) j["out_dir"] = fs::absolute(g.out_dir).string();
  return j;
}

fs::path config_dir(const Globals& g) { return fs::path(g.config).parent_path(); }

fs::path require_out_dir(const Globals& g) {
  require(!g.out_dir.empty(), ErrorKind::kConfig, "--out-dir is required");
  return g.out_dir;
}

LogFn logger(const Globals& g) {
  if (!g.verbose) return {};
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

int run_prune(const Globals& g) {
  PipelineConfig cfg = PipelineConfig::from_json(load_config_json(g), config_dir(g));
  require(cfg.out_dir.has_value(), ErrorKind::kConfig, "prune needs --out-dir or config out_dir");
  const PipelineResult result = run_pipeline(cfg, logger(g));
  std::cout << "sparsity " << result.report.final_sparsity;
  if (result.report.final_accuracy) std::cout << " top-1 " << *result.report.final_accuracy;
  std::cout << "\nreport " << (*cfg.out_dir / "report.json").string() << '\n';
  return 0;
}

int run_fuse_bn(const Globals& g, const std::string& model_path) {
  const fs::path out = require_out_dir(g);
  const Model fused = fuse_batchnorm(load_bundle(model_path));
  save_bundle(fused, out);
  if (g.verbose) std::cerr << "fused " << fused.layers.size() << " layers\n";
  return 0;
}

int run_quantize(const Globals& g, const std::string& model_path) {
  PipelineConfig cfg = PipelineConfig::from_json(load_config_json(g), config_dir(g));
  if (!model_path.empty()) cfg.model_path = model_path;
  const fs::path out = require_out_dir(g);
  const Model model = load_bundle(cfg.model_path);
  const Tensorf pool = build_calibration_pool(cfg, model);
  const Model quantized = quantize_model(model, split_batches(pool, cfg.tune.batch_size));
  save_bundle(quantized, out / "quantized");
  json report = {{"toolkit_version", kToolkitVersion},
                 {"model", cfg.model_path.string()},
                 {"activation_scales", quantized.activation_scales},
                 {"artifacts", {{"quantized_bundle", "quantized"}}}};
  if (cfg.eval_dataset) {
    const EvalDataset ds = load_dataset(*cfg.eval_dataset);
    const Preprocess pre = resolve_preprocess(cfg, model);
    report["accuracy"] = evaluate_topk(model, ds, 1, pre);
    report["quantized_accuracy"] = evaluate_topk(quantized, ds, 1, pre);
  }
  write_json(out / "report.json", report);
  return 0;
}

int run_generate(const Globals& g, const std::string& kind, std::size_t count,
                 const SyntheticOptions& opts) {
  const fs::path out = require_out_dir(g);
  const auto samples = generate_dataset(parse_synthetic_kind(kind), count, g.seed.value_or(0), out, opts);
  if (g.verbose) std::cerr << "wrote " << samples.size() << " images to " << out.string() << '\n';
  return 0;
}

int run_evaluate(const Globals& g, const std::string& model_path, const std::string& dataset_dir,
                 std::size_t k) {
  const Model model = load_bundle(model_path);
  const EvalDataset ds = load_dataset(dataset_dir);
  const Preprocess pre = ds.preprocess.empty() ? Preprocess::from_model(model) : ds.preprocess;
  const double acc = evaluate_topk(model, ds, k, pre);
  const json report = {{"toolkit_version", kToolkitVersion},
                       {"model", model_path},
                       {"dataset", dataset_dir},
                       {"k", k},
                       {"samples", ds.size()},
                       {"accuracy", acc}};
  std::cout << "top-" << k << " " << acc << '\n';
  if (!g.out_dir.empty()) write_json(fs::path(g.out_dir) / "report.json", report);
  return 0;
}

int run_ablate(const Globals& g, const std::string& preset, const std::string& variants_path) {
  const json base = load_config_json(g);
  std::vector<AblationVariant> variants;
  if (!variants_path.empty()) {
    const json vj = read_json(variants_path);
    require(vj.is_array(), ErrorKind::kConfig, "variants file must hold a JSON array");
    for (const auto& v : vj) {
      require(v.contains("name"), ErrorKind::kConfig, "each variant needs a 'name'");
      variants.push_back({v.at("name").get<std::string>(), v.value("delta", json::object())});
    }
  } else {
    variants = ablation_preset(preset);
  }
  const AblationTable table = ablation_compare(base, variants, config_dir(g), logger(g));
  const std::string text = table.to_text();
  std::cout << text;
  if (base.contains("out_dir")) {
    const fs::path out = base.at("out_dir").get<std::string>();
    write_json(out / "ablation.json", table.to_json());
    std::ofstream(out / "ablation.txt") << text;
  }
  for (const auto& row : table.rows) {
    if (!row.ok) return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Post-training sparsification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON pipeline config");
  app.add_option("--seed", g.seed, "Root seed (overrides the config)");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_flag("-v,--verbose", g.verbose, "Progress on stderr");

  auto* prune = app.add_subcommand("prune", "Iterative prune / correct / fine-tune pipeline");

  std::string model_path;
  auto* fuse = app.add_subcommand("fuse-bn", "Fold BatchNorm layers into their producers");
  fuse->add_option("--model", model_path, "Input bundle")->required();

  std::string quant_model;
  auto* quant = app.add_subcommand("quantize", "Symmetric int8 fake quantization");
  quant->add_option("--model", quant_model, "Bundle to quantize (defaults to the config model)");

  std::string kind = "fractal_colored";
  std::size_t count = 16;
  SyntheticOptions opts;
  auto* gen = app.add_subcommand("generate-data", "Write a synthetic image set");
  gen->add_option("--kind", kind, "fractal_colored | fractal_gray | white_noise");
  gen->add_option("--count", count, "Number of images");
  gen->add_option("--size", opts.size, "Image side in pixels");
  gen->add_option("--n-points", opts.n_points, "Chaos-game points per fractal");

  std::string eval_model, eval_data;
  std::size_t k = 1;
  auto* eval = app.add_subcommand("evaluate", "Top-k accuracy of a bundle on a labeled set");
  eval->add_option("--model", eval_model, "Bundle to evaluate")->required();
  eval->add_option("--dataset", eval_data, "Labeled dataset directory")->required();
  eval->add_option("-k,--top-k", k, "k");

  std::string preset = "corrections", variants_path;
  auto* ablate = app.add_subcommand("ablate", "Run config variants and tabulate results");
  ablate->add_option("--preset", preset,
                     "corrections | criteria | data_source | colorization | weight_decay | schedule");
  ablate->add_option("--variants", variants_path, "JSON array of {name, delta} merge patches");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::kConfig);
  }

  try {
    if (*prune) return run_prune(g);
    if (*fuse) return run_fuse_bn(g, model_path);
    if (*quant) return run_quantize(g, quant_model);
    if (*gen) return run_generate(g, kind, count, opts);
    if (*eval) return run_evaluate(g, eval_model, eval_data, k);
    if (*ablate) return run_ablate(g, preset, variants_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
