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
#ifndef SPARSEKIT_CALIBRATION_HPP
#define SPARSEKIT_CALIBRATION_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sparsekit/model.hpp"
#include "sparsekit/sparsity.hpp"

namespace sparsekit {

struct TuneConfig {
  double lr_weights = 1e-5;
  double lr_bias = 1e-4;
  std::size_t batch_size = 50;
  /// 300-sample pool consumed five times at batch size 50.
  std::size_t steps_per_iteration = 30;
  /// Coupled L2 term added to the weight gradient. Kept at 0 outside experiments.
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  /// Layers whose cached tensors would exceed this many bytes are recomputed
  /// from the calibration batches on demand. 0 keeps everything resident.
  std::size_t max_cache_bytes = 0;

  void validate() const;
};

struct CacheBatch {
  Tensorf input;
  Tensorf target;  // f(W_dense, X), without bias
};

/// Dense-model inputs and pre-bias outputs of one prunable layer, one entry
/// per calibration batch.
struct LayerCache {
  std::string name;
  std::size_t layer_index = 0;
  /// Dense bias (zeros when the dense layer had none); the tuning target is
  /// target + dense_bias.
  Tensorf dense_bias;
  std::vector<Tensorf> inputs;
  std::vector<Tensorf> targets;

  std::size_t batch_count() const;
  bool resident() const { return !inputs.empty(); }
  CacheBatch batch(std::size_t i) const;

  // Recompute-on-demand source for non-resident caches.
  std::shared_ptr<const Model> dense_model;
  std::shared_ptr<const std::vector<Tensorf>> source_batches;
};

std::vector<LayerCache> build_layer_cache(const Model& dense_model,
                                          std::span<const Tensorf> calib_batches,
                                          std::size_t max_cache_bytes = 0);

/// Summed squared error of a (masked) layer against its cache.
double layer_kd_loss(const LayerSpec& layer, const LayerCache& cache);

struct TuneResult {
  LayerSpec layer;
  double loss_before = 0.0;
  double loss_after = 0.0;
  /// Output elements the losses are summed over.
  std::size_t elements = 0;
  std::size_t steps = 0;
  bool diverged = false;
};

/// Adam on sum((Y_dense + b_dense - f(W * M, X) - b)^2) over cached batches,
/// with separate weight and bias learning rates. Pruned weights stay exactly 0.
/// On a non-finite loss the last finite state is returned with diverged set.
TuneResult finetune_layer(const LayerSpec& layer, const Tensorf& mask, const LayerCache& cache,
                          const TuneConfig& cfg);

struct LayerTuneRecord {
  std::string name;
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::size_t elements = 0;
};

struct FinetuneResult {
  Model model;
  std::vector<LayerTuneRecord> records;
};

/// Tunes every masked layer independently. Throws a numeric error naming the
/// layer if any tuning run diverges.
FinetuneResult finetune_all(const Model& sparse_model, const SparsityMask& masks,
                            std::span<const LayerCache> caches, const TuneConfig& cfg);

}  // namespace sparsekit

#endif  // SPARSEKIT_CALIBRATION_HPP
