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
#include <gtest/gtest.h>

#include <fstream>

#include "json.hpp"
#include "sparsekit/pipeline.hpp"
#include "sparsekit/quantization.hpp"
#include "test_util.hpp"

namespace sparsekit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::random_tensor;

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kArgument;
}

/// Small model bundle plus a .tens eval set labeled with the model's own argmax.
struct Fixture {
  fs::path root;
  Model model;

  explicit Fixture(const std::string& name) : root(testing::scratch_dir(name)) {
    Rng rng(21);
    model = testing::small_cnn(rng);
    save_bundle(model, root / "model");
    fs::create_directories(root / "eval");
    json samples = json::array();
    for (std::size_t i = 0; i < 40; ++i) {
      Tensorf x = random_tensor({1, 3, 8, 8}, rng);
      Tensorf logits = forward(model, x);
      Eigen::Index label = 0;
      logits.flat().maxCoeff(&label);
      const std::string file = "x" + std::to_string(i) + ".tens";
      write_tensor_file(root / "eval" / file, x.reshaped({3, 8, 8}));
      samples.push_back({{"path", file}, {"label", label}});
    }
    std::ofstream(root / "eval" / "manifest.json") << json{{"samples", samples}}.dump();
  }

  json config() const {
    return {{"model", (root / "model").string()},
            {"calibration", {{"source", "white_noise"}, {"pool_size", 24}, {"image_size", 32}}},
            {"schedule", {{"initial", 0.2}, {"final", 0.6}, {"iterations", 3}}},
            {"tune", {{"batch_size", 8}, {"steps_per_iteration", 6}}},
            {"eval_dataset", (root / "eval").string()},
            {"seed", 5}};
  }
};

TEST(Config, ParsesDefaultsAndPaths) {
  json j = {{"model", "m"}, {"calibration", {{"source", "directory"}, {"path", "cal"}}}};
  PipelineConfig cfg = PipelineConfig::from_json(j, "/base");
  EXPECT_EQ(cfg.model_path, fs::path("/base/m"));
  EXPECT_EQ(cfg.calibration.path, fs::path("/base/cal"));
  EXPECT_EQ(cfg.calibration.pool_size, 300u);
  EXPECT_EQ(cfg.schedule.iterations, 10u);
  EXPECT_EQ(cfg.criterion, ImportanceCriterion::kL2NormalizedMagnitude);
  EXPECT_TRUE(cfg.toggles.finetune);
  EXPECT_EQ(cfg.tune.batch_size, 50u);
  EXPECT_EQ(PipelineConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
}

TEST(Config, Rejections) {
  const json base = {{"model", "m"}, {"calibration", {{"source", "white_noise"}}}};
  auto with = [&](const json& patch) {
    json j = base;
    j.merge_patch(patch);
    return j;
  };
  EXPECT_EQ(kind_of([&] { PipelineConfig::from_json(with({{"bogus", 1}})); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([&] { PipelineConfig::from_json(with({{"max_accuracy_drop", 0.01}})); }),
            ErrorKind::kConfig);
  EXPECT_EQ(kind_of([&] {
              PipelineConfig::from_json(with({{"calibration", {{"path", "also-a-directory"}}}}));
            }),
            ErrorKind::kConfig);
  EXPECT_EQ(kind_of([&] { PipelineConfig::from_json(with({{"criterion", "random"}})); }),
            ErrorKind::kConfig);
  EXPECT_EQ(kind_of([&] { PipelineConfig::from_json(with({{"schedule", {{"final", 1.5}}}})); }),
            ErrorKind::kConfig);
  EXPECT_EQ(kind_of([&] { PipelineConfig::from_json(json::array()); }), ErrorKind::kConfig);
}

TEST(TopK, ConstantLogits) {
  Tensorf logits({3, 4});
  for (std::size_t n = 0; n < 3; ++n) logits[n * 4] = 1.0f;
  std::vector<long> labels{0, 0, 0};
  EXPECT_EQ(topk_accuracy(logits, labels, 1), 1.0);
}

TEST(TopK, TieGoesToLowerClass) {
  Tensorf logits({2, 3}, {1, 1, 0, 1, 1, 0});
  std::vector<long> labels{0, 1};
  EXPECT_EQ(topk_accuracy(logits, labels, 1), 0.5);
  EXPECT_EQ(topk_accuracy(logits, labels, 2), 1.0);
}

TEST(TopK, FullKAlwaysOne) {
  Rng rng(3);
  Tensorf logits = random_tensor({20, 10}, rng);
  std::vector<long> labels;
  for (int i = 0; i < 20; ++i) labels.push_back(static_cast<long>(rng.below(10)));
  EXPECT_EQ(topk_accuracy(logits, labels, 10), 1.0);
}

TEST(TopK, LabelOutOfRange) {
  std::vector<long> labels{3};
  EXPECT_EQ(kind_of([&] { topk_accuracy(Tensorf({1, 3}), labels, 1); }), ErrorKind::kData);
  labels = {-1};
  EXPECT_EQ(kind_of([&] { topk_accuracy(Tensorf({1, 3}), labels, 1); }), ErrorKind::kData);
}

TEST(TopK, DeskModelMatchesReferenceLogits) {
  const auto dir = testing::asset_dir();
  if (!fs::exists(dir / "desk_cnn")) GTEST_SKIP() << "desk assets not generated";
  const Model model = load_bundle(dir / "desk_cnn");
  const EvalDataset ds = load_dataset(dir / "desk_data" / "val");
  const Tensorf reference = read_tensor_file(dir / "desk_data" / "val_logits_reference.tens");
  std::size_t hits = 0;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    Eigen::Index best = 0;
    reference.leading_matrix().row(static_cast<Eigen::Index>(n)).maxCoeff(&best);
    if (best == *ds.samples[n].label) ++hits;
  }
  const double expect = static_cast<double>(hits) / static_cast<double>(ds.size());
  EXPECT_EQ(evaluate_topk(model, ds, 1, ds.preprocess), expect);
}

TEST(Pipeline, NoOpSchedule) {
  Fixture fx("pipe_noop");
  json j = fx.config();
  j["schedule"] = {{"initial", 0.0}, {"final", 0.0}, {"iterations", 1}};
  j["toggles"] = {{"quantize", true}, {"bn_adaptation", true}};
  const PipelineResult r = run_pipeline(PipelineConfig::from_json(j));
  ASSERT_EQ(r.report.iterations.size(), 1u);
  EXPECT_EQ(r.report.final_sparsity, 0.0);
  ASSERT_TRUE(r.quantized.has_value());
  // the only change left is quantizing the input model itself
  const PipelineConfig cfg = PipelineConfig::from_json(j);
  const Tensorf x = build_calibration_pool(cfg, fx.model);
  const Model direct = quantize_model(fx.model, split_batches(x, cfg.tune.batch_size));
  EXPECT_LT(max_abs_diff(forward(*r.quantized, x), forward(direct, x)), 1e-4f);
  EXPECT_LT(max_abs_diff(forward(r.model, x), forward(fx.model, x)), 1e-4f);
}

TEST(Pipeline, ReportAndArtifactsConsistent) {
  Fixture fx("pipe_full");
  json j = fx.config();
  j["out_dir"] = (fx.root / "out").string();
  const PipelineConfig cfg = PipelineConfig::from_json(j);
  const PipelineResult r = run_pipeline(cfg);
  ASSERT_EQ(r.report.iterations.size(), 3u);
  const double n = static_cast<double>(r.report.prunable_weights);
  double last = 0.0;
  for (const auto& rec : r.report.iterations) {
    EXPECT_LE(std::abs(rec.achieved_sparsity - rec.target_sparsity), 1.0 / n);
    EXPECT_GE(rec.achieved_sparsity, last);
    last = rec.achieved_sparsity;
    EXPECT_TRUE(rec.kd_loss_after.has_value());
    EXPECT_TRUE(rec.accuracy.has_value());
  }
  const Model saved = load_bundle(fx.root / "out" / "sparse");
  EXPECT_EQ(model_sparsity(saved), r.report.final_sparsity);
  const json report = json::parse(std::ifstream(fx.root / "out" / "report.json"));
  EXPECT_EQ(report.at("toolkit_version"), kToolkitVersion);
  EXPECT_EQ(report.at("iterations").size(), 3u);
  EXPECT_TRUE(report.contains("timings"));
  EXPECT_EQ(report.at("final_sparsity").get<double>(), model_sparsity(saved));
  for (std::size_t m = 0; m < r.masks.size(); ++m) {
    const auto& w = *saved.layers[*saved.index_of(r.masks.names[m])].weights;
    const Tensorf mask = read_tensor_file(fx.root / "out" / "masks" / (r.masks.names[m] + ".mask.tens"));
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (mask[i] == 0.0f) EXPECT_EQ(w[i], 0.0f);
    }
  }
}

TEST(Pipeline, EarlyStopKeepsLastPassingModel) {
  Fixture fx("pipe_stop");
  json j = fx.config();
  j["schedule"] = {{"initial", 0.9}, {"final", 0.97}, {"iterations", 3}};
  j["max_accuracy_drop"] = 0.0;
  const PipelineResult r = run_pipeline(PipelineConfig::from_json(j));
  EXPECT_TRUE(r.report.stopped_early);
  ASSERT_EQ(r.report.iterations.size(), 1u);
  EXPECT_FALSE(r.report.iterations[0].accepted);
  EXPECT_EQ(r.report.final_sparsity, 0.0);
  EXPECT_EQ(r.report.final_accuracy, r.report.dense_accuracy);
}

TEST(Pipeline, StrictSupersetKeepsPrunedWeights) {
  Fixture fx("pipe_superset");
  json j = fx.config();
  j["toggles"] = {{"strict_mask_superset", true}};
  const PipelineResult r = run_pipeline(PipelineConfig::from_json(j));
  EXPECT_GE(r.report.final_sparsity, 0.6 - 1.0 / static_cast<double>(r.report.prunable_weights));
}

TEST(Pipeline, ErrorNamesStage) {
  Fixture fx("pipe_error");
  json j = fx.config();
  j["out_dir"] = (fx.root / "out").string();
  j["eval_dataset"] = (fx.root / "missing").string();
  j["preprocess"] = {{"mean", {0.5, 0.5, 0.5}}, {"std", {0.25, 0.25, 0.25}}};
  try {
    run_pipeline(PipelineConfig::from_json(j));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
    EXPECT_NE(std::string(e.what()).find("evaluate"), std::string::npos);
  }
  const json report = json::parse(std::ifstream(fx.root / "out" / "report.json"));
  EXPECT_TRUE(report.at("partial").get<bool>());
  EXPECT_EQ(report.at("error").at("stage"), "evaluate");
}

TEST(Pipeline, Deterministic) {
  Fixture fx("pipe_det");
  const PipelineConfig cfg = PipelineConfig::from_json(fx.config());
  const PipelineResult a = run_pipeline(cfg), b = run_pipeline(cfg);
  for (std::size_t i : a.model.prunable_indices()) {
    EXPECT_EQ(*a.model.layers[i].weights, *b.model.layers[i].weights);
    EXPECT_EQ(*a.model.layers[i].bias, *b.model.layers[i].bias);
  }
}

TEST(Ablation, SingleVariantEqualsPlainRun) {
  Fixture fx("ablate_single");
  const json j = fx.config();
  const AblationTable table = ablation_compare(j, {{"lamp", {{"criterion", "lamp"}}}});
  ASSERT_EQ(table.rows.size(), 1u);
  json patched = j;
  patched["criterion"] = "lamp";
  const PipelineResult plain = run_pipeline(PipelineConfig::from_json(patched));
  EXPECT_TRUE(table.rows[0].ok);
  EXPECT_EQ(table.rows[0].accuracy, plain.report.final_accuracy);
  EXPECT_EQ(table.rows[0].sparsity, plain.report.final_sparsity);
  EXPECT_NE(table.to_text().find("lamp"), std::string::npos);
}

TEST(Ablation, FailedVariantIsMarked) {
  Fixture fx("ablate_fail");
  const AblationTable table = ablation_compare(
      fx.config(), {{"broken", {{"criterion", "nope"}}}, {"ok", json::object()}});
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_FALSE(table.rows[0].ok);
  EXPECT_FALSE(table.rows[0].error.empty());
  EXPECT_TRUE(table.rows[1].ok);
  EXPECT_EQ(kind_of([] { ablation_preset("nothing"); }), ErrorKind::kConfig);
}

}  // namespace
}  // namespace sparsekit
