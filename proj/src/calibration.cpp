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
#include "sparsekit/calibration.hpp"

#include <cmath>
#include <numeric>

#include "sparsekit/adam.hpp"
#include "sparsekit/rng.hpp"

namespace sparsekit {

void TuneConfig::validate() const {
  require(lr_weights > 0.0 && lr_bias > 0.0, ErrorKind::kConfig, "learning rates must be positive");
  require(batch_size >= 1, ErrorKind::kConfig, "batch_size must be positive");
  require(weight_decay >= 0.0, ErrorKind::kConfig, "weight_decay must be non-negative");
}

std::size_t LayerCache::batch_count() const {
  return resident() ? inputs.size() : (source_batches ? source_batches->size() : 0);
}

CacheBatch LayerCache::batch(std::size_t i) const {
  require(i < batch_count(), ErrorKind::kArgument, "cache batch index out of range");
  if (resident()) return {inputs[i], targets[i]};
  auto captured = forward_with_capture(*dense_model, (*source_batches)[i], {name}).captured;
  auto& act = captured.at(name);
  Tensorf target = linear_forward(dense_model->layers[layer_index], act.input);
  return {std::move(act.input), std::move(target)};
}

std::vector<LayerCache> build_layer_cache(const Model& dense_model,
                                          std::span<const Tensorf> calib_batches,
                                          std::size_t max_cache_bytes) {
  require(!calib_batches.empty(), ErrorKind::kArgument, "empty calibration pool");
  std::vector<LayerCache> caches;
  std::set<std::string> targets;
  for (std::size_t i : dense_model.prunable_indices()) {
    LayerCache cache;
    cache.name = dense_model.names[i];
    cache.layer_index = i;
    const auto& layer = dense_model.layers[i];
    cache.dense_bias = layer.bias ? *layer.bias : Tensorf({layer.out_channels()});
    caches.push_back(std::move(cache));
    targets.insert(dense_model.names[i]);
  }
  if (caches.empty()) return caches;

  for (const auto& batch : calib_batches) {
    auto captured = forward_with_capture(dense_model, batch, targets).captured;
    for (auto& cache : caches) {
      auto& act = captured.at(cache.name);
      cache.targets.push_back(linear_forward(dense_model.layers[cache.layer_index], act.input));
      cache.inputs.push_back(std::move(act.input));
    }
  }
  if (max_cache_bytes == 0) return caches;

  auto shared_model = std::make_shared<const Model>(dense_model);
  auto shared_batches =
      std::make_shared<const std::vector<Tensorf>>(calib_batches.begin(), calib_batches.end());
  for (auto& cache : caches) {
    std::size_t bytes = 0;
    for (std::size_t b = 0; b < cache.inputs.size(); ++b) {
      bytes += (cache.inputs[b].size() + cache.targets[b].size()) * sizeof(float);
    }
    if (bytes > max_cache_bytes) {
      cache.inputs.clear();
      cache.targets.clear();
      cache.dense_model = shared_model;
      cache.source_batches = shared_batches;
    }
  }
  return caches;
}

namespace {

struct StepEval {
  Tensorf residual;
  double loss;
};

StepEval evaluate(const LayerSpec& layer, const LayerCache& cache, const CacheBatch& batch) {
  Tensorf pred = linear_forward(layer, batch.input);
  const Tensorf& bias = layer.bias ? *layer.bias : cache.dense_bias;
  // residual = f(W, X) + b - (Y + b_dense)
  Tensorf shifted_bias = bias;
  if (layer.bias) {
    shifted_bias.flat() = bias.flat() - cache.dense_bias.flat();
  } else {
    shifted_bias.flat() = -cache.dense_bias.flat();
  }
  pred.flat() -= batch.target.flat();
  add_channel_bias(pred, shifted_bias);
  const double loss = pred.flat().cast<double>().squaredNorm();
  return {std::move(pred), loss};
}

}  // namespace

double layer_kd_loss(const LayerSpec& layer, const LayerCache& cache) {
  double loss = 0.0;
  for (std::size_t b = 0; b < cache.batch_count(); ++b) {
    loss += evaluate(layer, cache, cache.batch(b)).loss;
  }
  return loss;
}

TuneResult finetune_layer(const LayerSpec& layer, const Tensorf& mask, const LayerCache& cache,
                          const TuneConfig& cfg) {
  cfg.validate();
  require(layer.prunable(), ErrorKind::kUnsupportedLayer, "only conv / fc layers are tuned");
  require(mask.shape() == layer.weights->shape(), ErrorKind::kDimension,
          "mask " + shape_string(mask.shape()) + " does not match weights of '" + cache.name + "'");
  require(cache.batch_count() > 0, ErrorKind::kConfig, "empty cache for '" + cache.name + "'");

  TuneResult result;
  result.layer = layer;
  if (!result.layer.bias) result.layer.bias = Tensorf({layer.out_channels()});
  auto& weights = *result.layer.weights;
  auto& bias = *result.layer.bias;
  apply_mask_in_place(weights, mask);

  for (std::size_t b = 0; b < cache.batch_count(); ++b) {
    const auto batch = cache.batch(b);
    result.elements += batch.target.size();
    result.loss_before += evaluate(result.layer, cache, batch).loss;
  }
  result.loss_after = result.loss_before;
  if (cfg.steps_per_iteration == 0) return result;

  auto weight_state = AdamState<float>::fresh(weights.shape());
  auto bias_state = AdamState<float>::fresh(bias.shape());
  Rng rng(derive_seed(cfg.seed, cache.layer_index));
  std::vector<std::size_t> order(cache.batch_count());
  std::size_t cursor = order.size();
  LayerSpec last_finite = result.layer;

  for (std::size_t step = 0; step < cfg.steps_per_iteration; ++step) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order);
      cursor = 0;
    }
    const auto batch = cache.batch(order[cursor++]);
    const StepEval eval = evaluate(result.layer, cache, batch);
    if (!std::isfinite(eval.loss)) {
      result.diverged = true;
      break;
    }
    auto grads = layer_local_gradients(result.layer, batch.input, eval.residual);
    apply_mask_in_place(grads.weights, mask);
    if (cfg.weight_decay > 0.0) {
      grads.weights.flat() += static_cast<float>(cfg.weight_decay) * weights.flat();
    }
    if (!grads.weights.all_finite() || !grads.bias.all_finite()) {
      result.diverged = true;
      break;
    }
    last_finite = result.layer;
    std::tie(weights, weight_state) =
        adam_step(std::move(weights), grads.weights, std::move(weight_state), cfg.lr_weights);
    std::tie(bias, bias_state) =
        adam_step(std::move(bias), grads.bias, std::move(bias_state), cfg.lr_bias);
    apply_mask_in_place(weights, mask);
    result.steps = step + 1;
  }
  if (result.diverged || !weights.all_finite() || !bias.all_finite()) {
    result.diverged = true;
    result.layer = last_finite;
  }
  result.loss_after = layer_kd_loss(result.layer, cache);
  if (!std::isfinite(result.loss_after)) {
    result.diverged = true;
    result.layer = last_finite;
    result.loss_after = layer_kd_loss(result.layer, cache);
  }
  return result;
}

FinetuneResult finetune_all(const Model& sparse_model, const SparsityMask& masks,
                            std::span<const LayerCache> caches, const TuneConfig& cfg) {
  FinetuneResult out{sparse_model, {}};
  for (std::size_t m = 0; m < masks.size(); ++m) {
    const auto& name = masks.names[m];
    const auto index = sparse_model.index_of(name);
    require(index.has_value(), ErrorKind::kName, "mask for unknown layer '" + name + "'");
    const LayerCache* cache = nullptr;
    for (const auto& c : caches) {
      if (c.name == name) cache = &c;
    }
    require(cache != nullptr, ErrorKind::kConfig, "no layer cache for '" + name + "'");
    if (cfg.steps_per_iteration == 0) continue;
    TuneResult tuned = finetune_layer(sparse_model.layers[*index], masks.tensors[m], *cache, cfg);
    require(!tuned.diverged, ErrorKind::kNumeric,
            "fine-tuning of '" + name + "' diverged after " + std::to_string(tuned.steps) +
                " steps");
    out.model.layers[*index] = std::move(tuned.layer);
    out.records.push_back({name, tuned.loss_before, tuned.loss_after, tuned.elements});
  }
  return out;
}

}  // namespace sparsekit
