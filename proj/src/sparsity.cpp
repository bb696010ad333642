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
#include "sparsekit/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sparsekit {

std::string_view to_string(ImportanceCriterion criterion) {
  switch (criterion) {
    case ImportanceCriterion::kMagnitude: return "magnitude";
    case ImportanceCriterion::kL2NormalizedMagnitude: return "l2_normalized_magnitude";
    case ImportanceCriterion::kLamp: return "lamp";
  }
  return "unknown";
}

ImportanceCriterion parse_criterion(std::string_view name) {
  if (name == "magnitude") return ImportanceCriterion::kMagnitude;
  if (name == "l2_normalized_magnitude" || name == "l2_normalized") {
    return ImportanceCriterion::kL2NormalizedMagnitude;
  }
  if (name == "lamp") return ImportanceCriterion::kLamp;
  throw Error(ErrorKind::kConfig, "unknown importance criterion '" + std::string(name) + "'");
}

std::size_t SparsityMask::pruned_count() const {
  std::size_t zeros = 0;
  for (const auto& t : tensors) zeros += count_zeros(t);
  return zeros;
}

double SparsityMask::global_sparsity() const {
  const std::size_t total = element_count();
  return total == 0 ? 0.0 : static_cast<double>(pruned_count()) / static_cast<double>(total);
}

namespace {

// LAMP (Lee et al.): weights sorted by ascending magnitude; each squared
// weight is divided by the sum of squares of all weights in the layer whose
// magnitude is at least its own (equal magnitudes share one denominator).
Tensord lamp_scores(const Tensorf& w) {
  const std::size_t n = w.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(w[a]) < std::abs(w[b]);
  });
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t k = n; k-- > 0;) {
    const double v = static_cast<double>(w[order[k]]);
    suffix[k] = suffix[k + 1] + v * v;
  }
  Tensord scores(w.shape());
  for (std::size_t k = 0; k < n;) {
    std::size_t group_end = k + 1;
    while (group_end < n && std::abs(w[order[group_end]]) == std::abs(w[order[k]])) ++group_end;
    const double denom = suffix[k] + kScoreEps;
    for (std::size_t j = k; j < group_end; ++j) {
      const double v = static_cast<double>(w[order[j]]);
      scores[order[j]] = v * v / denom;
    }
    k = group_end;
  }
  return scores;
}

}  // namespace

LayerScores importance_scores(const Model& model, ImportanceCriterion criterion,
                              const std::set<std::string>& excluded) {
  LayerScores scores;
  for (std::size_t i : model.prunable_indices()) {
    if (excluded.contains(model.names[i])) continue;
    const auto& w = *model.layers[i].weights;
    Tensord s(w.shape());
    switch (criterion) {
      case ImportanceCriterion::kMagnitude:
        s.flat() = w.flat().cast<double>().cwiseAbs();
        break;
      case ImportanceCriterion::kL2NormalizedMagnitude: {
        const double norm = w.flat().cast<double>().norm();
        s.flat() = w.flat().cast<double>().cwiseAbs() / (norm + kScoreEps);
        break;
      }
      case ImportanceCriterion::kLamp:
        s = lamp_scores(w);
        break;
    }
    scores.names.push_back(model.names[i]);
    scores.tensors.push_back(std::move(s));
  }
  return scores;
}

SparsityMask select_global_masks(const LayerScores& scores, double target_sparsity) {
  require(target_sparsity >= 0.0 && target_sparsity <= 1.0, ErrorKind::kArgument,
          "target sparsity " + std::to_string(target_sparsity) + " outside [0, 1]");
  SparsityMask masks;
  struct Entry {
    double score;
    std::uint32_t layer;
    std::size_t index;
  };
  std::vector<Entry> entries;
  entries.reserve(scores.element_count());
  for (std::size_t l = 0; l < scores.size(); ++l) {
    masks.names.push_back(scores.names[l]);
    masks.tensors.emplace_back(scores.tensors[l].shape(), 1.0f);
    for (std::size_t i = 0; i < scores.tensors[l].size(); ++i) {
      entries.push_back({scores.tensors[l][i], static_cast<std::uint32_t>(l), i});
    }
  }
  const auto prune = static_cast<std::size_t>(
      std::floor(target_sparsity * static_cast<double>(entries.size())));
  if (prune == 0) return masks;
  auto before = [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.index < b.index;
  };
  std::nth_element(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(prune - 1),
                   entries.end(), before);
  for (std::size_t k = 0; k < prune; ++k) {
    masks.tensors[entries[k].layer][entries[k].index] = 0.0f;
  }
  return masks;
}

void ScheduleConfig::validate() const {
  require(initial >= 0.0 && initial < 1.0, ErrorKind::kConfig, "s_i must lie in [0, 1)");
  require(final >= 0.0 && final < 1.0, ErrorKind::kConfig, "s_f must lie in [0, 1)");
  require(initial <= final, ErrorKind::kConfig, "s_i must not exceed s_f");
  require(iterations >= 1, ErrorKind::kConfig, "schedule needs at least one iteration");
}

double schedule_sparsity(std::size_t t, const ScheduleConfig& cfg) {
  cfg.validate();
  require(t <= cfg.iterations, ErrorKind::kArgument,
          "schedule step " + std::to_string(t) + " outside [0, " +
              std::to_string(cfg.iterations) + "]");
  if (t == 0) return cfg.initial;
  if (t == cfg.iterations) return cfg.final;
  const double remaining = 1.0 - static_cast<double>(t) / static_cast<double>(cfg.iterations);
  return cfg.final + (cfg.initial - cfg.final) * remaining * remaining * remaining;
}

Model apply_masks(const Model& model, const SparsityMask& masks) {
  Model out = model;
  for (std::size_t m = 0; m < masks.size(); ++m) {
    const auto index = model.index_of(masks.names[m]);
    require(index && model.layers[*index].prunable(), ErrorKind::kName,
            "mask for unknown prunable layer '" + masks.names[m] + "'");
    auto& w = *out.layers[*index].weights;
    require(w.shape() == masks.tensors[m].shape(), ErrorKind::kDimension,
            "mask " + shape_string(masks.tensors[m].shape()) + " does not match weights " +
                shape_string(w.shape()) + " of '" + masks.names[m] + "'");
    apply_mask_in_place(w, masks.tensors[m]);
  }
  return out;
}

double model_sparsity(const Model& model) {
  std::size_t zeros = 0;
  std::size_t total = 0;
  for (std::size_t i : model.prunable_indices()) {
    zeros += count_zeros(*model.layers[i].weights);
    total += model.layers[i].weights->size();
  }
  return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

void save_masks(const SparsityMask& masks, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create '" + dir.string() + "'");
  for (std::size_t m = 0; m < masks.size(); ++m) {
    write_tensor_file(dir / (masks.names[m] + ".mask.tens"), masks.tensors[m]);
  }
}

}  // namespace sparsekit
