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
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "sparsekit/model.hpp"

namespace sparsekit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 8> kTensorMagic = {'S', 'P', 'K', 'T', 'E', 'N', 'S', '0'};
constexpr int kBundleVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::kIo, "short write to '" + path.string() + "'");
}

}  // namespace

void write_tensor_file(const fs::path& path, const Tensorf& t) {
  std::string bytes(kTensorMagic.begin(), kTensorMagic.end());
  put_u32(bytes, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t extent : t.shape()) put_u32(bytes, static_cast<std::uint32_t>(extent));
  for (float v : t.values()) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  write_file(path, bytes);
}

Tensorf read_tensor_file(const fs::path& path) {
  require(fs::exists(path), ErrorKind::kIo, "missing tensor file '" + path.string() + "'");
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), kTensorMagic.data(), 8) == 0,
          ErrorKind::kFormat, "'" + path.string() + "' is not a SPKTENS0 tensor file");
  const std::uint32_t rank = get_u32(p + 8);
  const std::size_t header = 12 + 4 * static_cast<std::size_t>(rank);
  require(bytes.size() >= header, ErrorKind::kByteCount,
          "'" + path.string() + "' truncated inside the shape header");
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = get_u32(p + 12 + 4 * i);
    require(shape[i] > 0, ErrorKind::kFormat, "'" + path.string() + "' has a zero extent");
  }
  const std::size_t count = shape_product(shape);
  require(bytes.size() == header + 4 * count, ErrorKind::kByteCount,
          "'" + path.string() + "' holds " + std::to_string(bytes.size()) + " bytes, shape " +
              shape_string(shape) + " needs " + std::to_string(header + 4 * count));
  Tensorf t(shape);
  for (std::size_t i = 0; i < count; ++i) {
    t[i] = std::bit_cast<float>(get_u32(p + header + 4 * i));
  }
  return t;
}

Model load_bundle(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  require(fs::exists(manifest_path), ErrorKind::kIo,
          "no manifest.json in '" + dir.string() + "'");
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, "'" + manifest_path.string() + "': " + e.what());
  }

  Model model;
  try {
    if (manifest.contains("input_shape")) {
      model.input_shape = manifest.at("input_shape").get<Shape>();
    }
    model.class_count = manifest.value("class_count", std::size_t{0});
    if (manifest.contains("metadata")) {
      model.metadata = manifest.at("metadata").get<std::map<std::string, std::string>>();
    }
    if (manifest.contains("activation_scales")) {
      model.activation_scales = manifest.at("activation_scales").get<std::map<std::string, float>>();
    }
    auto tensor = [&](const json& entry, const char* key) {
      return read_tensor_file(dir / entry.at(key).get<std::string>());
    };
    for (const auto& entry : manifest.at("layers")) {
      const auto name = entry.at("name").get<std::string>();
      LayerSpec layer;
      layer.kind = parse_layer_kind(entry.at("kind").get<std::string>());
      switch (layer.kind) {
        case LayerKind::kConv2d:
        case LayerKind::kFullyConnected:
          layer.weights = tensor(entry, "weights");
          if (entry.contains("bias")) layer.bias = tensor(entry, "bias");
          layer.stride = entry.value("stride", std::size_t{1});
          layer.padding = entry.value("padding", std::size_t{0});
          break;
        case LayerKind::kBatchNorm:
          layer.bn = BatchNormParams<float>{tensor(entry, "gamma"), tensor(entry, "beta"),
                                            tensor(entry, "running_mean"),
                                            tensor(entry, "running_var"),
                                            entry.value("eps", 1e-5)};
          break;
        case LayerKind::kRelu:
          break;
      }
      model.add(name, std::move(layer));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, "'" + manifest_path.string() + "': " + e.what());
  }
  model.validate();
  return model;
}

void save_bundle(const Model& model, const fs::path& dir) {
  model.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create '" + dir.string() + "': " + ec.message());

  json layers = json::array();
  auto store = [&](json& entry, const std::string& layer_name, const char* key, const Tensorf& t) {
    const std::string file = layer_name + "." + key + ".tens";
    write_tensor_file(dir / file, t);
    entry[key] = file;
  };
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    const auto& name = model.names[i];
    json entry = {{"name", name}, {"kind", std::string(to_string(layer.kind))}};
    switch (layer.kind) {
      case LayerKind::kConv2d:
        entry["stride"] = layer.stride;
        entry["padding"] = layer.padding;
        [[fallthrough]];
      case LayerKind::kFullyConnected:
        store(entry, name, "weights", *layer.weights);
        if (layer.bias) store(entry, name, "bias", *layer.bias);
        break;
      case LayerKind::kBatchNorm:
        store(entry, name, "gamma", layer.bn->gamma);
        store(entry, name, "beta", layer.bn->beta);
        store(entry, name, "running_mean", layer.bn->running_mean);
        store(entry, name, "running_var", layer.bn->running_var);
        entry["eps"] = layer.bn->eps;
        break;
      case LayerKind::kRelu:
        break;
    }
    layers.push_back(std::move(entry));
  }
  json manifest = {{"format", "sparsekit-bundle"},
                   {"version", kBundleVersion},
                   {"input_shape", model.input_shape},
                   {"class_count", model.class_count},
                   {"metadata", model.metadata},
                   {"layers", std::move(layers)}};
  if (!model.activation_scales.empty()) manifest["activation_scales"] = model.activation_scales;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace sparsekit
