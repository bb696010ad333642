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

#include "sparsekit/adam.hpp"
#include "sparsekit/layer.hpp"
#include "test_util.hpp"

namespace sparsekit {
namespace {

using testing::naive_conv;
using testing::random_tensor;

TEST(LayerForward, IdentityKernel) {
  Rng rng(1);
  Tensorf x = random_tensor({2, 1, 5, 4}, rng);
  auto conv = LayerSpec::conv2d(Tensorf({1, 1, 1, 1}, 1.0f), Tensorf({1}, 0.0f));
  EXPECT_EQ(layer_forward(conv, x), x);
}

TEST(LayerForward, ZeroInputGivesBias) {
  auto conv = LayerSpec::conv2d(Tensorf({2, 3, 3, 3}, 0.7f), Tensorf({2}, {0.5f, -1.5f}), 1, 1);
  Tensorf y = layer_forward(conv, Tensorf({2, 3, 4, 4}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_EQ(y[(n * 2 + 0) * 16 + i], 0.5f);
      EXPECT_EQ(y[(n * 2 + 1) * 16 + i], -1.5f);
    }
  auto fc = LayerSpec::fully_connected(Tensorf({2, 4}, 3.0f), Tensorf({2}, {2.0f, 4.0f}));
  Tensorf z = layer_forward(fc, Tensorf({3, 4}));
  for (std::size_t n = 0; n < 3; ++n) {
    EXPECT_EQ(z[n * 2], 2.0f);
    EXPECT_EQ(z[n * 2 + 1], 4.0f);
  }
}

TEST(LayerForward, HandConvolution) {
  auto conv = LayerSpec::conv2d(Tensorf({1, 1, 2, 2}, {1, 0, 0, 1}), std::nullopt);
  Tensorf x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensorf y = layer_forward(conv, x);
  EXPECT_EQ(y, Tensorf({1, 1, 2, 2}, {6, 8, 12, 14}));
}

TEST(LayerForward, MatchesNaiveConvolution) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t cin = 1 + rng.below(4), cout = 1 + rng.below(4), k = 1 + rng.below(3);
    const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
    const std::size_t h = k + rng.below(6), w = k + rng.below(6);
    Tensorf wt = random_tensor({cout, cin, k, k}, rng);
    Tensorf b = random_tensor({cout}, rng);
    Tensorf x = random_tensor({3, cin, h, w}, rng);
    auto conv = LayerSpec::conv2d(wt, b, stride, pad);
    EXPECT_LT(max_abs_diff(layer_forward(conv, x), naive_conv(x, wt, &b, stride, pad)), 1e-5f);
  }
}

TEST(LayerForward, FullyConnectedFlattens) {
  auto fc = LayerSpec::fully_connected(Tensorf({1, 4}, {1, 2, 3, 4}), Tensorf({1}, 1.0f));
  Tensorf y = layer_forward(fc, Tensorf({1, 1, 2, 2}, {1, 1, 1, 1}));
  EXPECT_EQ(y.shape(), (Shape{1, 1}));
  EXPECT_EQ(y[0], 11.0f);
}

TEST(LayerForward, ShapeMismatchIsDimensionError) {
  auto conv = LayerSpec::conv2d(Tensorf({2, 3, 3, 3}), std::nullopt);
  try {
    layer_forward(conv, Tensorf({1, 2, 5, 5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
  auto fc = LayerSpec::fully_connected(Tensorf({2, 5}), std::nullopt);
  EXPECT_THROW(layer_forward(fc, Tensorf({1, 4})), Error);
}

TEST(LayerForward, ReluAndBatchNorm) {
  Tensorf x({1, 2, 1, 2}, {-1, 2, 3, -4});
  EXPECT_EQ(layer_forward(LayerSpec::relu(), x), Tensorf({1, 2, 1, 2}, {0, 2, 3, 0}));
  BatchNormParams<float> p{Tensorf({2}, {2, 1}), Tensorf({2}, {1, 0}), Tensorf({2}, {0, 1}),
                           Tensorf({2}, {1, 4}), 0.0};
  Tensorf y = layer_forward(LayerSpec::batchnorm(p), x);
  EXPECT_FLOAT_EQ(y[0], -1.0f);
  EXPECT_FLOAT_EQ(y[1], 5.0f);
  EXPECT_FLOAT_EQ(y[2], 1.0f);
  EXPECT_FLOAT_EQ(y[3], -2.5f);
}

TEST(LocalGradients, ZeroResidual) {
  Rng rng(2);
  auto conv = LayerSpec::conv2d(random_tensor({2, 2, 3, 3}, rng), random_tensor({2}, rng));
  Tensorf x = random_tensor({4, 2, 6, 6}, rng);
  auto g = layer_local_gradients(conv, x, Tensorf({4, 2, 4, 4}));
  EXPECT_EQ(count_zeros(g.weights), g.weights.size());
  EXPECT_EQ(count_zeros(g.bias), g.bias.size());
}

TEST(LocalGradients, HandFullyConnected) {
  auto fc = LayerSpec::fully_connected(Tensorf({1, 1}, 2.0f), Tensorf({1}, 0.0f));
  Tensorf x({1, 1}, 3.0f);
  Tensorf residual = layer_forward(fc, x);  // target 0
  EXPECT_EQ(residual[0], 6.0f);
  auto g = layer_local_gradients(fc, x, residual);
  EXPECT_FLOAT_EQ(g.weights[0], 36.0f);
  EXPECT_FLOAT_EQ(g.bias[0], 12.0f);
}

TEST(LocalGradients, ResidualShapeChecked) {
  auto fc = LayerSpec::fully_connected(Tensorf({2, 3}, 1.0f), std::nullopt);
  EXPECT_THROW(layer_local_gradients(fc, Tensorf({4, 3}), Tensorf({4, 3})), Error);
}

// Loss sum((f(W, X) + b - Y)^2) against central differences with step 1e-3.
double fd_relative_error(const LayerSpec& layer, const Tensorf& x, const Tensorf& target) {
  auto loss = [&](const LayerSpec& l) {
    Tensorf y = layer_forward(l, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double r = static_cast<double>(y[i]) - target[i];
      s += r * r;
    }
    return s;
  };
  Tensorf residual = layer_forward(layer, x);
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= target[i];
  const auto g = layer_local_gradients(layer, x, residual);
  const float h = 1e-3f;
  double num = 0.0, den = 0.0;
  auto probe = [&](float& param, float analytic) {
    const float saved = param;
    param = saved + h;
    const double up = loss(layer);
    param = saved - h;
    const double down = loss(layer);
    param = saved;
    const double fd = (up - down) / (2.0 * h);
    num += (fd - analytic) * (fd - analytic);
    den += fd * fd;
  };
  LayerSpec& l = const_cast<LayerSpec&>(layer);
  for (std::size_t i = 0; i < l.weights->size(); ++i) probe((*l.weights)[i], g.weights[i]);
  for (std::size_t i = 0; i < l.bias->size(); ++i) probe((*l.bias)[i], g.bias[i]);
  return std::sqrt(num / den);
}

TEST(LocalGradients, FiniteDifferencesConv) {
  Rng rng(11);
  LayerSpec conv = LayerSpec::conv2d(random_tensor({2, 2, 3, 3}, rng), random_tensor({2}, rng));
  Tensorf x = random_tensor({4, 2, 8, 8}, rng);
  Tensorf target = random_tensor({4, 2, 6, 6}, rng);
  EXPECT_LT(fd_relative_error(conv, x, target), 1e-3);
}

TEST(LocalGradients, FiniteDifferencesFullyConnected) {
  Rng rng(12);
  LayerSpec fc = LayerSpec::fully_connected(random_tensor({3, 7}, rng), random_tensor({3}, rng));
  Tensorf x = random_tensor({5, 7}, rng);
  Tensorf target = random_tensor({5, 3}, rng);
  EXPECT_LT(fd_relative_error(fc, x, target), 1e-3);
}

TEST(Adam, ZeroGradientKeepsParam) {
  Tensorf p({3}, {1, -2, 3});
  auto [next, state] = adam_step(p, Tensorf({3}), AdamState<float>::fresh({3}), 1e-2);
  EXPECT_EQ(next, p);
  EXPECT_EQ(state.step_count, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto [next, state] = adam_step(Tensorf({1}, 1.0f), Tensorf({1}, 0.5f),
                                 AdamState<float>::fresh({1}), 0.01);
  EXPECT_NEAR(next[0], 0.99f, 1e-6f);
  // bias-corrected moments equal g and g^2 on the first step
  EXPECT_NEAR(state.first_moment[0], 0.05f, 1e-7f);
  EXPECT_NEAR(state.second_moment[0], 0.00025f, 1e-8f);
}

TEST(Adam, Deterministic) {
  Rng rng(4);
  Tensorf p = random_tensor({16}, rng), g = random_tensor({16}, rng);
  auto a = adam_step(p, g, AdamState<float>::fresh({16}), 1e-3);
  auto b = adam_step(p, g, AdamState<float>::fresh({16}), 1e-3);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second.second_moment, b.second.second_moment);
}

TEST(Adam, NonFiniteGradientRejected) {
  Tensorf g({2}, {1.0f, std::nanf("")});
  try {
    adam_step(Tensorf({2}), g, AdamState<float>::fresh({2}), 1e-3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
  }
}

}  // namespace
}  // namespace sparsekit
