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
#include "sparsekit/model.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "sparsekit/quantization.hpp"

namespace sparsekit {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kFullyConnected: return "fully_connected";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kRelu: return "relu";
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  if (name == "conv2d") return LayerKind::kConv2d;
  if (name == "fully_connected") return LayerKind::kFullyConnected;
  if (name == "batchnorm") return LayerKind::kBatchNorm;
  if (name == "relu") return LayerKind::kRelu;
  throw Error(ErrorKind::kUnknownKind, "'" + std::string(name) + "'");
}

void Model::add(std::string name, LayerSpec layer) {
  names.push_back(std::move(name));
  layers.push_back(std::move(layer));
}

std::optional<std::size_t> Model::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  return std::nullopt;
}

std::vector<std::size_t> Model::prunable_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].prunable()) out.push_back(i);
  }
  return out;
}

std::size_t Model::prunable_weight_count() const {
  std::size_t n = 0;
  for (std::size_t i : prunable_indices()) n += layers[i].weights->size();
  return n;
}

Shape layer_output_shape(const LayerSpec& layer, const Shape& input) {
  require(!input.empty(), ErrorKind::kDimension, "input shape needs a batch axis");
  switch (layer.kind) {
    case LayerKind::kConv2d: {
      const auto& w = *layer.weights;
      require(input.size() == 4 && input[1] == w.dim(1), ErrorKind::kDimension,
              "conv2d with " + std::to_string(w.dim(1)) + " input channels cannot take " +
                  shape_string(input));
      return {input[0], w.dim(0),
              conv_output_extent(input[2], w.dim(2), layer.stride, layer.padding),
              conv_output_extent(input[3], w.dim(3), layer.stride, layer.padding)};
    }
    case LayerKind::kFullyConnected: {
      const std::size_t features = shape_product(input) / input[0];
      require(input.size() >= 2 && features == layer.weights->dim(1), ErrorKind::kDimension,
              "fully_connected with " + std::to_string(layer.weights->dim(1)) +
                  " input features cannot take " + shape_string(input));
      return {input[0], layer.weights->dim(0)};
    }
    case LayerKind::kBatchNorm:
      require(input.size() >= 2 && input[1] == layer.bn->gamma.size(), ErrorKind::kDimension,
              "batchnorm over " + std::to_string(layer.bn->gamma.size()) +
                  " channels cannot take " + shape_string(input));
      return input;
    case LayerKind::kRelu:
      return input;
  }
  throw Error(ErrorKind::kUnsupportedLayer, "unknown layer kind");
}

void Model::validate() const {
  require(names.size() == layers.size(), ErrorKind::kStructural, "layer/name count mismatch");
  std::set<std::string> seen;
  for (const auto& name : names) {
    require(seen.insert(name).second, ErrorKind::kDuplicateName, "'" + name + "'");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    try {
      layers[i].validate();
    } catch (const Error& e) {
      throw Error(e.kind(), "layer '" + names[i] + "': " + e.what());
    }
  }
  if (input_shape.empty()) return;
  Shape shape{1};
  shape.insert(shape.end(), input_shape.begin(), input_shape.end());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    try {
      shape = layer_output_shape(layers[i], shape);
    } catch (const Error& e) {
      throw Error(e.kind(), "layer '" + names[i] + "': " + e.what());
    }
  }
}

ForwardResult forward_with_capture(const Model& model, const Tensorf& batch,
                                   const std::set<std::string>& capture) {
  for (const auto& name : capture) {
    require(model.index_of(name).has_value(), ErrorKind::kName, "no layer named '" + name + "'");
  }
  if (!model.input_shape.empty()) {
    require(batch.rank() == model.input_shape.size() + 1 &&
                std::equal(model.input_shape.begin(), model.input_shape.end(),
                           batch.shape().begin() + 1),
            ErrorKind::kDimension,
            "batch " + shape_string(batch.shape()) + " does not match model input " +
                shape_string(model.input_shape));
  }
  ForwardResult result;
  Tensorf current = batch;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& name = model.names[i];
    if (auto it = model.activation_scales.find(name); it != model.activation_scales.end()) {
      current = fake_quantize(current, QuantParams::per_tensor(it->second));
    }
    Tensorf next = layer_forward(model.layers[i], current);
    if (capture.contains(name)) {
      result.captured.emplace(name, LayerActivations{current, next});
    }
    current = std::move(next);
  }
  result.output = std::move(current);
  return result;
}

Tensorf forward(const Model& model, const Tensorf& batch) {
  return forward_with_capture(model, batch).output;
}

Model fuse_batchnorm(const Model& model) {
  Model fused = model;
  fused.layers.clear();
  fused.names.clear();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    if (layer.kind != LayerKind::kBatchNorm) {
      fused.add(model.names[i], layer);
      continue;
    }
    require(!fused.layers.empty() && fused.layers.back().prunable(), ErrorKind::kStructural,
            "batchnorm '" + model.names[i] +
                "' is not preceded by a conv2d or fully_connected layer");
    auto& linear = fused.layers.back();
    const auto& bn = *layer.bn;
    const std::size_t channels = linear.out_channels();
    require(bn.gamma.size() == channels, ErrorKind::kDimension,
            "batchnorm '" + model.names[i] + "' has " + std::to_string(bn.gamma.size()) +
                " channels, preceding layer has " + std::to_string(channels));
    auto w = linear.weights->leading_matrix();
    Tensorf bias({channels});
    for (std::size_t c = 0; c < channels; ++c) {
      const double scale = static_cast<double>(bn.gamma[c]) /
                           std::sqrt(static_cast<double>(bn.running_var[c]) + bn.eps);
      const auto row = static_cast<Eigen::Index>(c);
      w.row(row) = (w.row(row).cast<double>() * scale).cast<float>();
      const double b = linear.bias ? static_cast<double>((*linear.bias)[c]) : 0.0;
      bias[c] = static_cast<float>((b - static_cast<double>(bn.running_mean[c])) * scale +
                                   static_cast<double>(bn.beta[c]));
    }
    linear.bias = std::move(bias);
    fused.activation_scales.erase(model.names[i]);
  }
  return fused;
}

}  // namespace sparsekit
