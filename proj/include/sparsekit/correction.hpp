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
#ifndef SPARSEKIT_CORRECTION_HPP
#define SPARSEKIT_CORRECTION_HPP

#include <Eigen/Core>

#include <map>
#include <span>
#include <string>

#include "sparsekit/model.hpp"

namespace sparsekit {

inline constexpr double kStatEps = 1e-9;

/// Population mean / std per slice of the leading axis.
struct ChannelStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
};

ChannelStats channel_stats(const Tensorf& t);

/// lambda * W_s + E(W_dense) - E(lambda * W_s) per output channel, with
/// lambda = std(W_dense) / (std(W_s) + 1e-9), before any re-masking.
Tensorf restore_channel_statistics(const Tensorf& w_dense, const Tensorf& w_sparse);

/// restore_channel_statistics followed by re-applying the mask, so pruned
/// positions are exactly zero.
Tensorf correct_weight_statistics(const Tensorf& w_dense, const Tensorf& w_sparse,
                                  const Tensorf& mask);

/// Concatenated calibration inputs of each prunable layer of the dense model.
using DenseInputs = std::map<std::string, Tensorf>;

DenseInputs capture_dense_inputs(const Model& dense_model, std::span<const Tensorf> calib_batches);

/// One-shot bias correction: b = b_dense + E[f(W_dense, X)] - E[f(W_s, X)] with X
/// the dense model's layer inputs and E the per-channel batch+spatial mean.
Model correct_activation_bias(const Model& dense_model, const Model& sparse_model,
                              std::span<const Tensorf> calib_batches);
Model correct_activation_bias(const Model& dense_model, const Model& sparse_model,
                              const DenseInputs& dense_inputs);

/// Re-estimates every batchnorm's running mean / population variance from its
/// inputs over the calibration batches. No-op without batchnorm layers.
Model adapt_batchnorm(const Model& model, std::span<const Tensorf> calib_batches);

}  // namespace sparsekit

#endif  // SPARSEKIT_CORRECTION_HPP
