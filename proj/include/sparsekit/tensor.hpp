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
#ifndef SPARSEKIT_TENSOR_HPP
#define SPARSEKIT_TENSOR_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sparsekit/error.hpp"

namespace sparsekit {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense row-major N-dimensional array. Storage is an Eigen column vector so
/// the flat values and any row-major 2-D reshape can be used in Eigen
/// expressions without copying.
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;

  explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    check_extents();
    data_ = Vector::Constant(static_cast<Eigen::Index>(shape_product(shape_)), fill);
  }

  Tensor(Shape shape, std::span<const Scalar> values) : shape_(std::move(shape)) {
    check_extents();
    require(values.size() == shape_product(shape_), ErrorKind::kDimension,
            "value count " + std::to_string(values.size()) + " does not match shape " +
                shape_string(shape_));
    data_ = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape), std::span<const Scalar>(values.begin(), values.size())) {}

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(data_.size()); }
  bool empty() const noexcept { return shape_.empty(); }

  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }
  std::span<Scalar> values() noexcept { return {data_.data(), size()}; }
  std::span<const Scalar> values() const noexcept { return {data_.data(), size()}; }

  Vector& flat() noexcept { return data_; }
  const Vector& flat() const noexcept { return data_; }

  Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
  const Scalar& operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }

  /// Row-major 2-D view; rows * cols must equal size().
  MatrixMap matrix(std::size_t rows, std::size_t cols) {
    check_view(rows, cols);
    return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  ConstMatrixMap matrix(std::size_t rows, std::size_t cols) const {
    check_view(rows, cols);
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows),
                          static_cast<Eigen::Index>(cols));
  }
  /// View with the leading axis as rows (out-channels for weights, batch for activations).
  MatrixMap leading_matrix() { return matrix(shape_.at(0), size() / shape_.at(0)); }
  ConstMatrixMap leading_matrix() const { return matrix(shape_.at(0), size() / shape_.at(0)); }

  Tensor reshaped(Shape shape) const {
    require(shape_product(shape) == size(), ErrorKind::kDimension,
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.flat() = data_.template cast<Other>();
    return out;
  }

  bool all_finite() const { return data_.allFinite(); }

  /// Exact elementwise equality (shape and values).
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    for (std::size_t extent : shape_) {
      require(extent > 0, ErrorKind::kDimension,
              "tensor extents must be positive, got " + shape_string(shape_));
    }
  }
  void check_view(std::size_t rows, std::size_t cols) const {
    require(rows * cols == size(), ErrorKind::kDimension,
            "cannot view " + shape_string(shape_) + " as " + std::to_string(rows) + "x" +
                std::to_string(cols));
  }

  Shape shape_;
  Vector data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

/// Rows [begin, begin + count) of the leading (batch) axis.
template <typename Scalar>
Tensor<Scalar> slice_batch(const Tensor<Scalar>& t, std::size_t begin, std::size_t count) {
  require(t.rank() >= 1 && begin + count <= t.dim(0) && count > 0, ErrorKind::kDimension,
          "batch slice out of range for " + shape_string(t.shape()));
  Shape shape = t.shape();
  shape[0] = count;
  const std::size_t stride = t.size() / t.dim(0);
  return Tensor<Scalar>(shape, t.values().subspan(begin * stride, count * stride));
}

/// Gathers the given batch rows in order.
template <typename Scalar>
Tensor<Scalar> gather_batch(const Tensor<Scalar>& t, std::span<const std::size_t> rows) {
  require(t.rank() >= 1 && !rows.empty(), ErrorKind::kDimension, "empty batch gather");
  Shape shape = t.shape();
  shape[0] = rows.size();
  Tensor<Scalar> out(shape);
  const std::size_t stride = t.size() / t.dim(0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < t.dim(0), ErrorKind::kDimension, "batch row out of range");
    std::copy_n(t.data() + rows[i] * stride, stride, out.data() + i * stride);
  }
  return out;
}

/// Concatenates tensors along the batch axis; trailing extents must agree.
template <typename Scalar>
Tensor<Scalar> concat_batch(std::span<const Tensor<Scalar>> parts) {
  require(!parts.empty(), ErrorKind::kDimension, "nothing to concatenate");
  Shape shape = parts.front().shape();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require(p.rank() == shape.size() &&
                std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1),
            ErrorKind::kDimension,
            "cannot concatenate " + shape_string(p.shape()) + " with " + shape_string(shape));
    rows += p.dim(0);
  }
  shape[0] = rows;
  Tensor<Scalar> out(shape);
  Scalar* dst = out.data();
  for (const auto& p : parts) dst = std::copy_n(p.data(), p.size(), dst);
  return out;
}

template <typename Scalar>
Scalar max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(a.shape() == b.shape(), ErrorKind::kDimension,
          "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  if (a.size() == 0) return Scalar(0);
  return (a.flat() - b.flat()).cwiseAbs().maxCoeff();
}

template <typename Scalar>
std::size_t count_zeros(const Tensor<Scalar>& t) {
  return static_cast<std::size_t>((t.flat().array() == Scalar(0)).count());
}

/// Zeroes entries where mask == 0. Pruned entries become +0.0, never -0.0.
template <typename Scalar, typename MaskScalar>
void apply_mask_in_place(Tensor<Scalar>& t, const Tensor<MaskScalar>& mask) {
  require(t.shape() == mask.shape(), ErrorKind::kDimension,
          "mask " + shape_string(mask.shape()) + " vs tensor " + shape_string(t.shape()));
  t.flat() = (mask.flat().array() == MaskScalar(0)).select(Scalar(0), t.flat().array()).matrix();
}

}  // namespace sparsekit

#endif  // SPARSEKIT_TENSOR_HPP
