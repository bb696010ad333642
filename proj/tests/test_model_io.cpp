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
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "sparsekit/model.hpp"
#include "test_util.hpp"

namespace sparsekit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::random_tensor;

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kArgument;
}

void edit_manifest(const fs::path& dir, const std::function<void(json&)>& edit) {
  json j = json::parse(std::ifstream(dir / "manifest.json"));
  edit(j);
  std::ofstream(dir / "manifest.json") << j.dump(2);
}

TEST(Bundle, RoundTripIsBitExact) {
  Rng rng(5);
  Model m = testing::small_cnn(rng);
  m.metadata["note"] = "x";
  const auto dir = testing::scratch_dir("roundtrip");
  save_bundle(m, dir);
  Model back = load_bundle(dir);
  ASSERT_EQ(back.names, m.names);
  EXPECT_EQ(back.input_shape, m.input_shape);
  EXPECT_EQ(back.class_count, m.class_count);
  EXPECT_EQ(back.metadata, m.metadata);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(back.layers[i].kind, m.layers[i].kind);
    if (m.layers[i].weights) EXPECT_EQ(*back.layers[i].weights, *m.layers[i].weights);
    if (m.layers[i].bias) EXPECT_EQ(*back.layers[i].bias, *m.layers[i].bias);
    EXPECT_EQ(back.layers[i].stride, m.layers[i].stride);
    EXPECT_EQ(back.layers[i].padding, m.layers[i].padding);
  }
}

TEST(Bundle, TensorFileLayout) {
  const auto dir = testing::scratch_dir("layout");
  write_tensor_file(dir / "t.tens", Tensorf({2, 1}, {1.0f, -2.0f}));
  std::ifstream in(dir / "t.tens", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ASSERT_EQ(bytes.size(), 8u + 4 + 8 + 8);
  EXPECT_EQ(bytes.substr(0, 8), "SPKTENS0");
  EXPECT_EQ(bytes[8], 2);
  EXPECT_EQ(bytes[12], 2);
  EXPECT_EQ(bytes[16], 1);
  // 1.0f little endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[23]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[22]), 0x80);
}

TEST(Bundle, WrongByteLengthNamesFile) {
  Rng rng(6);
  const auto dir = testing::scratch_dir("bytecount");
  save_bundle(testing::small_cnn(rng), dir);
  fs::resize_file(dir / "conv2.weights.tens", fs::file_size(dir / "conv2.weights.tens") - 4);
  try {
    load_bundle(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kByteCount);
    EXPECT_NE(std::string(e.what()).find("conv2.weights.tens"), std::string::npos);
  }
}

TEST(Bundle, DistinctDiagnostics) {
  Rng rng(7);
  const auto dir = testing::scratch_dir("diag");
  auto fresh = [&] {
    fs::remove_all(dir);
    save_bundle(testing::small_cnn(rng), dir);
  };
  fresh();
  fs::remove(dir / "fc.bias.tens");
  EXPECT_EQ(kind_of([&] { load_bundle(dir); }), ErrorKind::kIo);

  fresh();
  edit_manifest(dir, [](json& j) { j["layers"][3]["name"] = "relu1"; });
  EXPECT_EQ(kind_of([&] { load_bundle(dir); }), ErrorKind::kDuplicateName);

  fresh();
  edit_manifest(dir, [](json& j) { j["layers"][1]["kind"] = "maxpool"; });
  EXPECT_EQ(kind_of([&] { load_bundle(dir); }), ErrorKind::kUnknownKind);

  fresh();
  std::ofstream(dir / "conv1.bias.tens") << "NOTATENSOR!!";
  EXPECT_EQ(kind_of([&] { load_bundle(dir); }), ErrorKind::kFormat);

  EXPECT_EQ(kind_of([&] { load_bundle(dir / "missing"); }), ErrorKind::kIo);
}

TEST(Bundle, ChainShapeMismatchRejected) {
  Model m;
  m.input_shape = {4};
  m.add("a", LayerSpec::fully_connected(Tensorf({3, 4}, 1.0f), std::nullopt));
  m.add("b", LayerSpec::fully_connected(Tensorf({2, 5}, 1.0f), std::nullopt));
  EXPECT_EQ(kind_of([&] { m.validate(); }), ErrorKind::kDimension);
}

TEST(Bundle, EmptyModelIsIdentity) {
  Model m;
  m.input_shape = {2, 3};
  const auto dir = testing::scratch_dir("empty");
  save_bundle(m, dir);
  Model back = load_bundle(dir);
  EXPECT_EQ(back.size(), 0u);
  Rng rng(8);
  Tensorf x = random_tensor({4, 2, 3}, rng);
  EXPECT_EQ(forward(back, x), x);
}

Model conv_bn(const Tensorf& w, const Tensorf& b, BatchNormParams<float> p) {
  Model m;
  m.input_shape = {w.dim(1), 5, 5};
  m.add("conv", LayerSpec::conv2d(w, b, 1, 1));
  m.add("bn", LayerSpec::batchnorm(std::move(p)));
  return m;
}

TEST(FuseBatchNorm, IdentityStatistics) {
  Rng rng(9);
  Tensorf w = random_tensor({2, 1, 3, 3}, rng), b = random_tensor({2}, rng);
  Model fused = fuse_batchnorm(conv_bn(
      w, b, {Tensorf({2}, 1.0f), Tensorf({2}, 0.0f), Tensorf({2}, 0.0f), Tensorf({2}, 1.0f), 0.0}));
  ASSERT_EQ(fused.size(), 1u);
  EXPECT_EQ(*fused.layers[0].weights, w);
  EXPECT_EQ(*fused.layers[0].bias, b);
}

TEST(FuseBatchNorm, HandValues) {
  Model fused = fuse_batchnorm(conv_bn(Tensorf({1, 1, 1, 1}, 1.0f), Tensorf({1}, 0.0f),
                                       {Tensorf({1}, 2.0f), Tensorf({1}, 1.0f), Tensorf({1}, 0.5f),
                                        Tensorf({1}, 3.0f), 1e-5}));
  const double scale = 2.0 / std::sqrt(3.00001);
  EXPECT_NEAR((*fused.layers[0].weights)[0], scale, 1e-6);
  EXPECT_NEAR((*fused.layers[0].bias)[0], -0.5 * scale + 1.0, 1e-6);
  EXPECT_NEAR((*fused.layers[0].weights)[0], 1.1547, 1e-4);
  EXPECT_NEAR((*fused.layers[0].bias)[0], 0.4226, 1e-4);
}

TEST(FuseBatchNorm, OutputEquivalence) {
  Rng rng(10);
  BatchNormParams<float> p{random_tensor({3}, rng, 0.5, 2.0), random_tensor({3}, rng),
                           random_tensor({3}, rng), random_tensor({3}, rng, 0.2, 3.0), 1e-5};
  Model m = conv_bn(random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng), p);
  m.add("relu", LayerSpec::relu());
  Model fused = fuse_batchnorm(m);
  Tensorf x = random_tensor({6, 2, 5, 5}, rng);
  EXPECT_LT(max_abs_diff(forward(m, x), forward(fused, x)), 1e-4f);
}

TEST(FuseBatchNorm, NoPredecessorIsStructural) {
  Model m;
  m.input_shape = {1, 2, 2};
  m.add("relu", LayerSpec::relu());
  m.add("bn", LayerSpec::batchnorm({Tensorf({1}, 1.0f), Tensorf({1}), Tensorf({1}),
                                    Tensorf({1}, 1.0f), 1e-5}));
  EXPECT_EQ(kind_of([&] { fuse_batchnorm(m); }), ErrorKind::kStructural);
}

TEST(FuseBatchNorm, MatchesIndependentlyFusedAsset) {
  const auto dir = testing::asset_dir();
  if (!fs::exists(dir / "desk_cnn_bn")) GTEST_SKIP() << "desk assets not generated";
  Model fused = fuse_batchnorm(load_bundle(dir / "desk_cnn_bn"));
  Model reference = load_bundle(dir / "desk_cnn");
  ASSERT_EQ(fused.names, reference.names);
  for (std::size_t i : reference.prunable_indices()) {
    EXPECT_LT(max_abs_diff(*fused.layers[i].weights, *reference.layers[i].weights), 1e-5f);
    EXPECT_LT(max_abs_diff(*fused.layers[i].bias, *reference.layers[i].bias), 1e-5f);
  }
}

TEST(Capture, EmptySetKeepsOutput) {
  Rng rng(11);
  Model m = testing::small_cnn(rng);
  Tensorf x = random_tensor({2, 3, 8, 8}, rng);
  ForwardResult r = forward_with_capture(m, x);
  EXPECT_TRUE(r.captured.empty());
  EXPECT_EQ(r.output, forward(m, x));
}

TEST(Capture, FirstLayerInputIsRawBatch) {
  Rng rng(12);
  Model m = testing::small_cnn(rng);
  Tensorf x = random_tensor({2, 3, 8, 8}, rng);
  ForwardResult r = forward_with_capture(m, x, {"conv1"});
  EXPECT_EQ(r.captured.at("conv1").input, x);
}

TEST(Capture, Chaining) {
  Rng rng(13);
  Model m;
  m.input_shape = {4};
  m.add("a", LayerSpec::fully_connected(random_tensor({3, 4}, rng), random_tensor({3}, rng)));
  m.add("b", LayerSpec::fully_connected(random_tensor({2, 3}, rng), random_tensor({2}, rng)));
  ForwardResult r = forward_with_capture(m, random_tensor({5, 4}, rng), {"a", "b"});
  EXPECT_EQ(r.captured.at("a").output, r.captured.at("b").input);
  EXPECT_EQ(r.captured.at("b").output, r.output);
}

TEST(Capture, UnknownNameIsNameError) {
  Rng rng(14);
  Model m = testing::small_cnn(rng);
  EXPECT_EQ(kind_of([&] { forward_with_capture(m, Tensorf({1, 3, 8, 8}), {"nope"}); }),
            ErrorKind::kName);
}

TEST(Capture, InputShapeChecked) {
  Rng rng(15);
  Model m = testing::small_cnn(rng);
  EXPECT_EQ(kind_of([&] { forward(m, Tensorf({1, 3, 7, 8})); }), ErrorKind::kDimension);
}

}  // namespace
}  // namespace sparsekit
