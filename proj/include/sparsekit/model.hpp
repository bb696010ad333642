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
#ifndef SPARSEKIT_MODEL_HPP
#define SPARSEKIT_MODEL_HPP

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sparsekit/layer.hpp"
#include "sparsekit/tensor.hpp"

namespace sparsekit {

/// Sequential model. `input_shape` is the per-sample shape (no batch axis);
/// an empty input_shape disables the input check.
struct Model {
  std::vector<LayerSpec> layers;
  std::vector<std::string> names;
  Shape input_shape;
  std::size_t class_count = 0;
  std::map<std::string, std::string> metadata;
  /// Per-layer symmetric input activation scales; present after quantization.
  std::map<std::string, float> activation_scales;

  void add(std::string name, LayerSpec layer);
  std::optional<std::size_t> index_of(const std::string& name) const;
  std::size_t size() const { return layers.size(); }

  /// Indices of conv / fully connected layers with weights, in order.
  std::vector<std::size_t> prunable_indices() const;
  std::size_t prunable_weight_count() const;

  /// Checks per-layer invariants, unique names and shape compatibility of the chain.
  void validate() const;
};

/// Output shape (including batch axis) a layer produces for an input shape.
Shape layer_output_shape(const LayerSpec& layer, const Shape& input);

struct LayerActivations {
  Tensorf input;
  Tensorf output;
};

using CapturedActivations = std::map<std::string, LayerActivations>;

struct ForwardResult {
  Tensorf output;
  CapturedActivations captured;
};

/// Runs the model, recording the input and output of each requested layer.
/// Layers with an activation scale see a fake-quantized input.
ForwardResult forward_with_capture(const Model& model, const Tensorf& batch,
                                   const std::set<std::string>& capture = {});

Tensorf forward(const Model& model, const Tensorf& batch);

/// Folds every batchnorm into the conv / fully connected layer right before it.
Model fuse_batchnorm(const Model& model);

// Bundle persistence: a directory with manifest.json plus one tensor file per
// tensor (magic "SPKTENS0", u32 LE rank, u32 LE extents, f32 LE payload).

void write_tensor_file(const std::filesystem::path& path, const Tensorf& t);
Tensorf read_tensor_file(const std::filesystem::path& path);

Model load_bundle(const std::filesystem::path& dir);
void save_bundle(const Model& model, const std::filesystem::path& dir);

}  // namespace sparsekit

#endif  // SPARSEKIT_MODEL_HPP
