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

#include <algorithm>
#include <cmath>
#include <tuple>

#include "sparsekit/sparsity.hpp"
#include "test_util.hpp"

namespace sparsekit {
namespace {

using testing::random_tensor;

Model two_fc(const Tensorf& a, const Tensorf& b) {
  Model m;
  m.input_shape = {a.dim(1)};
  m.add("l1", LayerSpec::fully_connected(a, std::nullopt));
  m.add("l2", LayerSpec::fully_connected(b, std::nullopt));
  return m;
}

// Layer l1: 1x2 weights [3, -4]; layer l2 consumes l1's single output.
Model example_model() {
  return two_fc(Tensorf({1, 2}, {3, -4}), Tensorf({4, 1}, {1, 0.5f, 0.2f, 2}));
}

TEST(Scores, MagnitudeIsAbs) {
  Rng rng(1);
  Model m = testing::small_cnn(rng);
  LayerScores s = importance_scores(m, ImportanceCriterion::kMagnitude);
  ASSERT_EQ(s.size(), 3u);
  for (std::size_t l = 0; l < s.size(); ++l) {
    const auto& w = *m.layers[*m.index_of(s.names[l])].weights;
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(s.tensors[l][i], std::abs(w[i]));
  }
}

TEST(Scores, L2NormalizedHand) {
  LayerScores s = importance_scores(example_model(), ImportanceCriterion::kL2NormalizedMagnitude);
  EXPECT_NEAR(s.tensors[0][0], 0.6, 1e-9);
  EXPECT_NEAR(s.tensors[0][1], 0.8, 1e-9);
  EXPECT_NEAR(s.tensors[1][0], 0.435, 1e-3);
  EXPECT_NEAR(s.tensors[1][3], 0.870, 1e-3);
}

TEST(Scores, SingleWeightSelfNormalizes) {
  for (float w : {-3.0f, 1e-3f, 250.0f}) {
    Model m;
    m.input_shape = {1};
    m.add("l", LayerSpec::fully_connected(Tensorf({1, 1}, w), std::nullopt));
    EXPECT_NEAR(importance_scores(m, ImportanceCriterion::kL2NormalizedMagnitude).tensors[0][0],
                1.0, 1e-6);
  }
}

TEST(Scores, AllZeroLayerIsGuarded) {
  Model m = two_fc(Tensorf({1, 2}), Tensorf({4, 1}, 1.0f));
  for (auto c : {ImportanceCriterion::kL2NormalizedMagnitude, ImportanceCriterion::kLamp}) {
    LayerScores s = importance_scores(m, c);
    EXPECT_EQ(s.tensors[0][0], 0.0);
    EXPECT_TRUE(std::isfinite(s.tensors[1][0]));
  }
}

TEST(Scores, LampMatchesBruteForce) {
  Rng rng(2);
  Model m = testing::small_cnn(rng);
  // force ties in magnitude
  (*m.layers[0].weights)[0] = 0.5f;
  (*m.layers[0].weights)[1] = -0.5f;
  LayerScores s = importance_scores(m, ImportanceCriterion::kLamp);
  for (std::size_t l = 0; l < s.size(); ++l) {
    const auto& w = *m.layers[*m.index_of(s.names[l])].weights;
    for (std::size_t i = 0; i < w.size(); ++i) {
      double denom = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (std::abs(w[j]) >= std::abs(w[i])) denom += static_cast<double>(w[j]) * w[j];
      }
      const double expect = static_cast<double>(w[i]) * w[i] / (denom + kScoreEps);
      EXPECT_NEAR(s.tensors[l][i], expect, 1e-12 + 1e-9 * expect);
    }
  }
}

TEST(Scores, ExcludedLayersSkipped) {
  Rng rng(3);
  Model m = testing::small_cnn(rng);
  LayerScores s = importance_scores(m, ImportanceCriterion::kMagnitude, {"conv2"});
  EXPECT_EQ(s.names, (std::vector<std::string>{"conv1", "fc"}));
}

TEST(Masks, Endpoints) {
  LayerScores s = importance_scores(example_model(), ImportanceCriterion::kMagnitude);
  SparsityMask none = select_global_masks(s, 0.0);
  SparsityMask all = select_global_masks(s, 1.0);
  EXPECT_EQ(none.pruned_count(), 0u);
  EXPECT_EQ(all.pruned_count(), 6u);
  EXPECT_EQ(all.global_sparsity(), 1.0);
}

TEST(Masks, HandExample) {
  SparsityMask m = select_global_masks(
      importance_scores(example_model(), ImportanceCriterion::kL2NormalizedMagnitude), 0.5);
  EXPECT_EQ(m.tensors[0], Tensorf({1, 2}, {1, 1}));
  EXPECT_EQ(m.tensors[1], Tensorf({4, 1}, {0, 0, 0, 1}));
  Model pruned = apply_masks(example_model(), m);
  EXPECT_EQ(*pruned.layers[0].weights, Tensorf({1, 2}, {3, -4}));
  EXPECT_EQ(*pruned.layers[1].weights, Tensorf({4, 1}, {0, 0, 0, 2}));
}

TEST(Masks, TiesBreakByLayerThenIndex) {
  LayerScores s;
  s.names = {"a", "b"};
  s.tensors = {Tensord({3}, 1.0), Tensord({2}, 1.0)};
  SparsityMask m = select_global_masks(s, 0.8);  // floor(0.8 * 5) = 4
  EXPECT_EQ(m.tensors[0], Tensorf({3}, {0, 0, 0}));
  EXPECT_EQ(m.tensors[1], Tensorf({2}, {0, 1}));
}

TEST(Masks, BruteForceOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    LayerScores s;
    const std::size_t layers = 1 + rng.below(4);
    for (std::size_t l = 0; l < layers; ++l) {
      Tensord t({1 + rng.below(20)});
      // coarse values produce many ties
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(rng.below(6));
      s.names.push_back("l" + std::to_string(l));
      s.tensors.push_back(t);
    }
    const double target = rng.uniform();
    std::vector<std::tuple<double, std::size_t, std::size_t>> pool;
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t i = 0; i < s.tensors[l].size(); ++i) pool.emplace_back(s.tensors[l][i], l, i);
    std::sort(pool.begin(), pool.end());
    const auto k = static_cast<std::size_t>(std::floor(target * static_cast<double>(pool.size())));
    SparsityMask m = select_global_masks(s, target);
    EXPECT_EQ(m.pruned_count(), k);
    for (std::size_t p = 0; p < pool.size(); ++p) {
      const auto [score, l, i] = pool[p];
      EXPECT_EQ(m.tensors[l][i], p < k ? 0.0f : 1.0f);
    }
  }
}

TEST(Masks, EmptyScores) {
  SparsityMask m = select_global_masks(LayerScores{}, 0.5);
  EXPECT_EQ(m.size(), 0u);
  EXPECT_EQ(m.global_sparsity(), 0.0);
}

TEST(Schedule, EndpointsExact) {
  ScheduleConfig cfg{0.1, 0.5, 10};
  EXPECT_EQ(schedule_sparsity(0, cfg), 0.1);
  EXPECT_EQ(schedule_sparsity(10, cfg), 0.5);
  EXPECT_NEAR(schedule_sparsity(5, cfg), 0.45, 1e-12);
  EXPECT_THROW(schedule_sparsity(11, cfg), Error);
}

TEST(Schedule, NonDecreasing) {
  ScheduleConfig cfg{0.05, 0.9, 17};
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    EXPECT_GE(schedule_sparsity(t, cfg), schedule_sparsity(t - 1, cfg));
  }
}

TEST(Schedule, InvalidConfig) {
  EXPECT_THROW((ScheduleConfig{0.6, 0.5, 10}.validate()), Error);
  EXPECT_THROW((ScheduleConfig{0.1, 0.5, 0}.validate()), Error);
  EXPECT_THROW((ScheduleConfig{0.1, 1.0, 3}.validate()), Error);
}

TEST(ApplyMasks, OnesAndZeros) {
  Rng rng(5);
  Model m = testing::small_cnn(rng);
  LayerScores s = importance_scores(m, ImportanceCriterion::kMagnitude);
  Model same = apply_masks(m, select_global_masks(s, 0.0));
  Model zero = apply_masks(m, select_global_masks(s, 1.0));
  for (std::size_t i : m.prunable_indices()) {
    EXPECT_EQ(*same.layers[i].weights, *m.layers[i].weights);
    EXPECT_EQ(count_zeros(*zero.layers[i].weights), zero.layers[i].weights->size());
    EXPECT_EQ(*zero.layers[i].bias, *m.layers[i].bias);
  }
  EXPECT_EQ(model_sparsity(zero), 1.0);
}

TEST(ApplyMasks, ShapeMismatch) {
  Model m = example_model();
  SparsityMask mask;
  mask.names = {"l1"};
  mask.tensors = {Tensorf({2, 1}, 1.0f)};
  EXPECT_THROW(apply_masks(m, mask), Error);
}

}  // namespace
}  // namespace sparsekit
