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
#ifndef SPARSEKIT_SPARSITY_HPP
#define SPARSEKIT_SPARSITY_HPP

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sparsekit/model.hpp"

namespace sparsekit {

enum class ImportanceCriterion { kMagnitude, kL2NormalizedMagnitude, kLamp };

std::string_view to_string(ImportanceCriterion criterion);
ImportanceCriterion parse_criterion(std::string_view name);

/// Guard added to per-layer normalizers.
inline constexpr double kScoreEps = 1e-9;

/// Per-layer tensors keyed by layer name, kept in model layer order. Layer
/// order is the primary tie-break key of global selection.
template <typename Scalar>
struct LayerTensors {
  std::vector<std::string> names;
  std::vector<Tensor<Scalar>> tensors;

  std::size_t size() const { return names.size(); }
  const Tensor<Scalar>* find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return &tensors[i];
    }
    return nullptr;
  }
  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
};

using LayerScores = LayerTensors<double>;

/// Binary {0, 1} masks; zero marks a pruned weight.
struct SparsityMask : LayerTensors<float> {
  std::size_t pruned_count() const;
  /// Zeros over all mask entries; 0 for an empty mask.
  double global_sparsity() const;
};

/// Scores for every prunable layer not listed in `excluded`.
///   magnitude:               |w|
///   l2_normalized_magnitude: |w| / (||W_layer||_2 + 1e-9)
///   lamp:                    w^2 / (sum of v^2 over v in the layer with |v| >= |w|, + 1e-9)
LayerScores importance_scores(const Model& model, ImportanceCriterion criterion,
                              const std::set<std::string>& excluded = {});

/// Prunes exactly floor(target * N) entries with the globally smallest scores.
/// Ties go to the lower (layer position, flat index) first.
SparsityMask select_global_masks(const LayerScores& scores, double target_sparsity);

struct ScheduleConfig {
  double initial = 0.1;  // s_i
  double final = 0.5;    // s_f
  std::size_t iterations = 10;

  void validate() const;
};

/// Cubic ramp s_t = s_f + (s_i - s_f) * (1 - t/T)^3.
double schedule_sparsity(std::size_t t, const ScheduleConfig& cfg);

/// Multiplies masked layers' weights by their mask; everything else untouched.
Model apply_masks(const Model& model, const SparsityMask& masks);

/// Zero-weight fraction over all prunable layers.
double model_sparsity(const Model& model);

void save_masks(const SparsityMask& masks, const std::filesystem::path& dir);

}  // namespace sparsekit

#endif  // SPARSEKIT_SPARSITY_HPP
