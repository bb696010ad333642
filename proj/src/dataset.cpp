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
#include "sparsekit/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "sparsekit/syndata.hpp"

namespace sparsekit {

namespace fs = std::filesystem;
using nlohmann::json;

Preprocess Preprocess::from_json(const json& j) {
  Preprocess p;
  if (j.contains("mean")) p.mean = j.at("mean").get<std::vector<float>>();
  if (j.contains("std")) p.std = j.at("std").get<std::vector<float>>();
  require(p.mean.size() == p.std.size(), ErrorKind::kConfig,
          "preprocess mean and std lengths differ");
  for (float s : p.std) require(s > 0.0f, ErrorKind::kConfig, "preprocess std must be positive");
  return p;
}

json Preprocess::to_json() const { return {{"mean", mean}, {"std", std}}; }

Preprocess Preprocess::from_model(const Model& model) {
  auto parse = [&](const char* key) {
    std::vector<float> values;
    auto it = model.metadata.find(key);
    if (it == model.metadata.end()) return values;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(std::stof(item));
    return values;
  };
  json j = {{"mean", parse("preprocess.mean")}, {"std", parse("preprocess.std")}};
  return from_json(j);
}

namespace {

/// Row-stochastic (out x in) matrix of interval overlaps.
Eigen::MatrixXf area_weights(std::size_t out, std::size_t in) {
  Eigen::MatrixXf w = Eigen::MatrixXf::Zero(static_cast<Eigen::Index>(out),
                                            static_cast<Eigen::Index>(in));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double lo = static_cast<double>(o) * ratio;
    const double hi = lo + ratio;
    const auto first = static_cast<std::size_t>(lo);
    for (std::size_t i = first; i < in && static_cast<double>(i) < hi; ++i) {
      const double overlap =
          std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) {
        w(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) =
            static_cast<float>(overlap / ratio);
      }
    }
  }
  return w;
}

}  // namespace

Tensorf resize_area(const Tensorf& image, std::size_t height, std::size_t width) {
  require(image.rank() == 3, ErrorKind::kDimension,
          "resize expects (C, H, W), got " + shape_string(image.shape()));
  if (image.dim(1) == height && image.dim(2) == width) return image;
  const Eigen::MatrixXf rows = area_weights(height, image.dim(1));
  const Eigen::MatrixXf cols = area_weights(width, image.dim(2));
  Tensorf out({image.dim(0), height, width});
  const std::size_t in_plane = image.dim(1) * image.dim(2);
  for (std::size_t c = 0; c < image.dim(0); ++c) {
    Tensorf::ConstMatrixMap src(image.data() + c * in_plane,
                                static_cast<Eigen::Index>(image.dim(1)),
                                static_cast<Eigen::Index>(image.dim(2)));
    Tensorf::MatrixMap dst(out.data() + c * height * width, static_cast<Eigen::Index>(height),
                           static_cast<Eigen::Index>(width));
    dst.noalias() = rows * src * cols.transpose();
  }
  return out;
}

Tensorf preprocess_image(const Tensorf& image, const Shape& input_shape, const Preprocess& pre) {
  require(input_shape.size() == 3, ErrorKind::kConfig,
          "image inputs need a (C, H, W) model input shape, got " + shape_string(input_shape));
  require(image.rank() == 3, ErrorKind::kData, "image must be (C, H, W)");
  const std::size_t channels = input_shape[0];
  Tensorf adapted;
  if (image.dim(0) == channels) {
    adapted = image;
  } else if (image.dim(0) == 1) {
    adapted = Tensorf({channels, image.dim(1), image.dim(2)});
    const std::size_t plane = image.dim(1) * image.dim(2);
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy_n(image.data(), plane, adapted.data() + c * plane);
    }
  } else if (channels == 1) {
    adapted = Tensorf({1, image.dim(1), image.dim(2)});
    adapted.flat() = image.leading_matrix().colwise().mean().transpose();
  } else {
    throw Error(ErrorKind::kData, std::to_string(image.dim(0)) +
                                      "-channel image for a model expecting " +
                                      std::to_string(channels));
  }
  Tensorf out = resize_area(adapted, input_shape[1], input_shape[2]);
  if (pre.empty()) return out;
  require(pre.mean.size() == channels, ErrorKind::kConfig,
          "preprocess has " + std::to_string(pre.mean.size()) + " channels, model expects " +
              std::to_string(channels));
  auto planes = out.leading_matrix();
  for (std::size_t c = 0; c < channels; ++c) {
    const auto r = static_cast<Eigen::Index>(c);
    planes.row(r) = (planes.row(r).array() - pre.mean[c]) / pre.std[c];
  }
  return out;
}

bool EvalDataset::labeled() const {
  return !samples.empty() &&
         std::all_of(samples.begin(), samples.end(), [](const auto& s) { return s.label.has_value(); });
}

EvalDataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  require(in.good(), ErrorKind::kIo, "no manifest.json in '" + dir.string() + "'");
  EvalDataset dataset;
  dataset.dir = dir;
  try {
    const json manifest = json::parse(in);
    for (const auto& entry : manifest.at("samples")) {
      DatasetSample sample{entry.at("path").get<std::string>(), std::nullopt};
      if (entry.contains("label")) sample.label = entry.at("label").get<long>();
      dataset.samples.push_back(std::move(sample));
    }
    if (manifest.contains("preprocess")) {
      dataset.preprocess = Preprocess::from_json(manifest.at("preprocess"));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, "'" + manifest_path.string() + "': " + e.what());
  }
  return dataset;
}

Tensorf load_inputs(const EvalDataset& dataset, std::span<const std::size_t> indices,
                    const Shape& input_shape, const Preprocess& pre) {
  require(!indices.empty(), ErrorKind::kArgument, "no samples requested");
  Shape shape{indices.size()};
  shape.insert(shape.end(), input_shape.begin(), input_shape.end());
  Tensorf batch(shape);
  const std::size_t stride = shape_product(input_shape);
  parallel_for(indices.size(), [&](std::size_t k) {
    require(indices[k] < dataset.size(), ErrorKind::kArgument, "sample index out of range");
    const fs::path path = dataset.dir / dataset.samples[indices[k]].path;
    Tensorf input;
    if (path.extension() == ".tens") {
      input = read_tensor_file(path);
      require(input.shape() == input_shape, ErrorKind::kData,
              "'" + path.string() + "' has shape " + shape_string(input.shape()) +
                  ", model expects " + shape_string(input_shape));
    } else {
      input = preprocess_image(read_pnm(path), input_shape, pre);
    }
    std::copy_n(input.data(), stride, batch.data() + k * stride);
  });
  return batch;
}

std::vector<Tensorf> split_batches(const Tensorf& pool, std::size_t batch_size) {
  require(batch_size > 0, ErrorKind::kArgument, "batch size must be positive");
  std::vector<Tensorf> batches;
  for (std::size_t begin = 0; begin < pool.dim(0); begin += batch_size) {
    batches.push_back(slice_batch(pool, begin, std::min(batch_size, pool.dim(0) - begin)));
  }
  return batches;
}

}  // namespace sparsekit
