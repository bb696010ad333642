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

#include <vector>

#include "sparsekit/tensor.hpp"
#include "test_util.hpp"

namespace sparsekit {
namespace {

TEST(Tensor, ShapeAndFill) {
  Tensorf t({2, 3, 4}, 1.5f);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.dim(1), 3u);
  for (float v : t.values()) EXPECT_EQ(v, 1.5f);
}

TEST(Tensor, ZeroExtentRejected) {
  EXPECT_THROW(Tensorf({2, 0}), Error);
}

TEST(Tensor, RowMajorMatrixView) {
  Tensorf t({2, 3}, {1, 2, 3, 4, 5, 6});
  auto m = t.matrix(2, 3);
  EXPECT_EQ(m(0, 2), 3.0f);
  EXPECT_EQ(m(1, 0), 4.0f);
  EXPECT_EQ(t.leading_matrix().rows(), 2);
}

TEST(Tensor, ReshapeKeepsOrder) {
  Tensorf t({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensorf r = t.reshaped({3, 2});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(r[4], 5.0f);
  EXPECT_THROW(t.reshaped({4, 2}), Error);
}

TEST(Tensor, BatchSliceGatherConcat) {
  Rng rng(3);
  Tensorf t = testing::random_tensor({5, 2, 2}, rng);
  Tensorf head = slice_batch(t, 0, 2), tail = slice_batch(t, 2, 3);
  std::vector<Tensorf> parts{head, tail};
  EXPECT_EQ(concat_batch<float>(parts), t);
  std::vector<std::size_t> rows{4, 0};
  Tensorf g = gather_batch(t, std::span<const std::size_t>(rows));
  EXPECT_EQ(g[0], t[16]);
  EXPECT_EQ(g[4], t[0]);
}

TEST(Tensor, CountZerosAndDiff) {
  Tensorf a({4}, {0, 1, 0, -2});
  Tensorf b({4}, {0, 1, 0.5f, -2});
  EXPECT_EQ(count_zeros(a), 2u);
  EXPECT_FLOAT_EQ(max_abs_diff(a, b), 0.5f);
}

TEST(Tensor, CastRoundTrip) {
  Tensorf t({3}, {0.25f, -1.0f, 3.0f});
  EXPECT_EQ(t.cast<double>().cast<float>(), t);
}

}  // namespace
}  // namespace sparsekit
