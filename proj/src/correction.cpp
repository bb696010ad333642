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
#include "sparsekit/correction.hpp"

#include <cmath>
#include <vector>

namespace sparsekit {

ChannelStats channel_stats(const Tensorf& t) {
  require(t.rank() >= 1, ErrorKind::kDimension, "channel statistics need rank >= 1");
  const auto m = t.leading_matrix().cast<double>();
  ChannelStats stats;
  stats.mean = m.rowwise().mean();
  const Eigen::MatrixXd centered = m.colwise() - stats.mean;
  stats.stddev = (centered.array().square().rowwise().sum() / static_cast<double>(m.cols())).sqrt();
  return stats;
}

Tensorf restore_channel_statistics(const Tensorf& w_dense, const Tensorf& w_sparse) {
  require(w_dense.shape() == w_sparse.shape(), ErrorKind::kDimension,
          "dense " + shape_string(w_dense.shape()) + " vs sparse " +
              shape_string(w_sparse.shape()));
  const ChannelStats dense = channel_stats(w_dense);
  const ChannelStats sparse = channel_stats(w_sparse);
  Tensorf out(w_sparse.shape());
  const auto src = w_sparse.leading_matrix();
  auto dst = out.leading_matrix();
  for (Eigen::Index c = 0; c < src.rows(); ++c) {
    const double lambda = dense.stddev[c] / (sparse.stddev[c] + kStatEps);
    const double shift = dense.mean[c] - lambda * sparse.mean[c];
    dst.row(c) = ((src.row(c).cast<double>() * lambda).array() + shift).cast<float>().matrix();
  }
  return out;
}

Tensorf correct_weight_statistics(const Tensorf& w_dense, const Tensorf& w_sparse,
                                  const Tensorf& mask) {
  require(mask.shape() == w_sparse.shape(), ErrorKind::kDimension,
          "mask " + shape_string(mask.shape()) + " vs weights " + shape_string(w_sparse.shape()));
  Tensorf out = restore_channel_statistics(w_dense, w_sparse);
  apply_mask_in_place(out, mask);
  return out;
}

DenseInputs capture_dense_inputs(const Model& dense_model, std::span<const Tensorf> calib_batches) {
  require(!calib_batches.empty(), ErrorKind::kArgument, "empty calibration batch");
  std::set<std::string> targets;
  for (std::size_t i : dense_model.prunable_indices()) targets.insert(dense_model.names[i]);
  std::map<std::string, std::vector<Tensorf>> parts;
  for (const auto& batch : calib_batches) {
    auto result = forward_with_capture(dense_model, batch, targets);
    for (auto& [name, act] : result.captured) parts[name].push_back(std::move(act.input));
  }
  DenseInputs inputs;
  for (auto& [name, list] : parts) {
    inputs.emplace(name, list.size() == 1 ? std::move(list.front())
                                          : concat_batch<float>(list));
  }
  return inputs;
}

namespace {

void check_same_structure(const Model& a, const Model& b) {
  require(a.names == b.names, ErrorKind::kStructural, "dense and sparse models differ in layers");
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    require(a.layers[i].kind == b.layers[i].kind &&
                a.layers[i].prunable() == b.layers[i].prunable() &&
                (!a.layers[i].prunable() ||
                 a.layers[i].weights->shape() == b.layers[i].weights->shape()),
            ErrorKind::kStructural, "layer '" + a.names[i] + "' differs between models");
  }
}

}  // namespace

Model correct_activation_bias(const Model& dense_model, const Model& sparse_model,
                              const DenseInputs& dense_inputs) {
  check_same_structure(dense_model, sparse_model);
  Model corrected = sparse_model;
  for (std::size_t i : dense_model.prunable_indices()) {
    const auto& name = dense_model.names[i];
    auto it = dense_inputs.find(name);
    require(it != dense_inputs.end(), ErrorKind::kConfig,
            "no dense calibration inputs for layer '" + name + "'");
    const auto& dense_layer = dense_model.layers[i];
    auto& sparse_layer = corrected.layers[i];
    const Eigen::VectorXd dense_mean = channel_means(linear_forward(dense_layer, it->second));
    const Eigen::VectorXd sparse_mean = channel_means(linear_forward(sparse_layer, it->second));
    Tensorf bias({dense_layer.out_channels()});
    for (std::size_t c = 0; c < bias.size(); ++c) {
      const double b_dense = dense_layer.bias ? static_cast<double>((*dense_layer.bias)[c]) : 0.0;
      const auto k = static_cast<Eigen::Index>(c);
      bias[c] = static_cast<float>(b_dense + dense_mean[k] - sparse_mean[k]);
    }
    sparse_layer.bias = std::move(bias);
  }
  return corrected;
}

Model correct_activation_bias(const Model& dense_model, const Model& sparse_model,
                              std::span<const Tensorf> calib_batches) {
  return correct_activation_bias(dense_model, sparse_model,
                                 capture_dense_inputs(dense_model, calib_batches));
}

Model adapt_batchnorm(const Model& model, std::span<const Tensorf> calib_batches) {
  require(!calib_batches.empty(), ErrorKind::kArgument, "empty calibration batch");
  Model adapted = model;
  adapted.activation_scales.clear();
  bool any_bn = false;
  for (const auto& layer : model.layers) any_bn |= layer.kind == LayerKind::kBatchNorm;
  if (!any_bn) return model;

  std::vector<Tensorf> current(calib_batches.begin(), calib_batches.end());
  std::size_t last_bn = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (model.layers[i].kind == LayerKind::kBatchNorm) last_bn = i;
  }
  for (std::size_t i = 0; i <= last_bn; ++i) {
    auto& layer = adapted.layers[i];
    if (layer.kind == LayerKind::kBatchNorm) {
      const std::size_t channels = layer.bn->gamma.size();
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(channels));
      double count = 0.0;
      for (const auto& t : current) {
        sum += channel_means(t) * static_cast<double>(t.size() / channels);
        count += static_cast<double>(t.size() / channels);
      }
      const Eigen::VectorXd mean = sum / count;
      Eigen::VectorXd sq = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(channels));
      for (const auto& t : current) {
        require(t.rank() >= 2 && t.dim(1) == channels, ErrorKind::kDimension,
                "batchnorm input " + shape_string(t.shape()));
        const std::size_t inner = t.size() / (t.dim(0) * channels);
        const float* p = t.data();
        for (std::size_t n = 0; n < t.dim(0); ++n) {
          for (std::size_t c = 0; c < channels; ++c) {
            const double mu = mean[static_cast<Eigen::Index>(c)];
            double acc = 0.0;
            for (std::size_t k = 0; k < inner; ++k, ++p) {
              const double d = static_cast<double>(*p) - mu;
              acc += d * d;
            }
            sq[static_cast<Eigen::Index>(c)] += acc;
          }
        }
      }
      for (std::size_t c = 0; c < channels; ++c) {
        const auto k = static_cast<Eigen::Index>(c);
        layer.bn->running_mean[c] = static_cast<float>(mean[k]);
        layer.bn->running_var[c] = static_cast<float>(sq[k] / count);
      }
    }
    for (auto& t : current) t = layer_forward(layer, t);
  }
  adapted.activation_scales = model.activation_scales;
  return adapted;
}

}  // namespace sparsekit
