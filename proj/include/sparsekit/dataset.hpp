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
#ifndef SPARSEKIT_DATASET_HPP
#define SPARSEKIT_DATASET_HPP

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sparsekit/model.hpp"

namespace sparsekit {

/// Input preparation shared by real and synthetic images: channel adaptation,
/// area resize to the model's input size, then (x - mean[c]) / std[c].
struct Preprocess {
  std::vector<float> mean;
  std::vector<float> std;

  bool empty() const { return mean.empty() && std.empty(); }
  static Preprocess from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// "preprocess.mean" / "preprocess.std" comma lists in model metadata.
  static Preprocess from_model(const Model& model);
};

/// Area-weighted resampling of a (C, H, W) image.
Tensorf resize_area(const Tensorf& image, std::size_t height, std::size_t width);

/// Image (C, H, W) in [0, 1] -> model input (C', H', W').
Tensorf preprocess_image(const Tensorf& image, const Shape& input_shape, const Preprocess& pre);

struct DatasetSample {
  std::string path;
  std::optional<long> label;
};

/// A directory with manifest.json listing {"path", "label"?} samples. Paths
/// ending in .ppm / .pgm are images; .tens files are model-ready tensors.
struct EvalDataset {
  std::filesystem::path dir;
  std::vector<DatasetSample> samples;
  Preprocess preprocess;

  std::size_t size() const { return samples.size(); }
  bool labeled() const;
};

EvalDataset load_dataset(const std::filesystem::path& dir);

/// Loads and preprocesses samples into an (N, C, H, W) batch.
Tensorf load_inputs(const EvalDataset& dataset, std::span<const std::size_t> indices,
                    const Shape& input_shape, const Preprocess& pre);

/// Splits the leading axis into consecutive batches of at most batch_size rows.
std::vector<Tensorf> split_batches(const Tensorf& pool, std::size_t batch_size);

}  // namespace sparsekit

#endif  // SPARSEKIT_DATASET_HPP
