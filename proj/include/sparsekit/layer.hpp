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
#ifndef SPARSEKIT_LAYER_HPP
#define SPARSEKIT_LAYER_HPP

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparsekit/error.hpp"
#include "sparsekit/parallel.hpp"
#include "sparsekit/tensor.hpp"

namespace sparsekit {

enum class LayerKind { kConv2d, kFullyConnected, kBatchNorm, kRelu };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

template <typename Scalar>
struct BatchNormParams {
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  double eps = 1e-5;
};

/// One layer of a sequential model. Conv weights are (out, in, k, k); fully
/// connected weights are (out, in). Padding is zero padding.
template <typename Scalar>
struct Layer {
  LayerKind kind = LayerKind::kRelu;
  std::optional<Tensor<Scalar>> weights;
  std::optional<Tensor<Scalar>> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::optional<BatchNormParams<Scalar>> bn;

  static Layer conv2d(Tensor<Scalar> w, std::optional<Tensor<Scalar>> b, std::size_t stride = 1,
                      std::size_t padding = 0) {
    Layer l;
    l.kind = LayerKind::kConv2d;
    l.weights = std::move(w);
    l.bias = std::move(b);
    l.stride = stride;
    l.padding = padding;
    l.validate();
    return l;
  }
  static Layer fully_connected(Tensor<Scalar> w, std::optional<Tensor<Scalar>> b) {
    Layer l;
    l.kind = LayerKind::kFullyConnected;
    l.weights = std::move(w);
    l.bias = std::move(b);
    l.validate();
    return l;
  }
  static Layer batchnorm(BatchNormParams<Scalar> params) {
    Layer l;
    l.kind = LayerKind::kBatchNorm;
    l.bn = std::move(params);
    l.validate();
    return l;
  }
  static Layer relu() { return Layer{}; }

  bool is_linear() const {
    return kind == LayerKind::kConv2d || kind == LayerKind::kFullyConnected;
  }
  /// Conv and fully connected layers with weights are the prunable ones.
  bool prunable() const { return is_linear() && weights.has_value(); }

  std::size_t out_channels() const {
    if (is_linear()) return weights->dim(0);
    if (kind == LayerKind::kBatchNorm) return bn->gamma.size();
    return 0;
  }
  std::size_t kernel_size() const { return kind == LayerKind::kConv2d ? weights->dim(2) : 1; }

  void validate() const {
    switch (kind) {
      case LayerKind::kConv2d:
        require(weights && weights->rank() == 4, ErrorKind::kDimension,
                "conv2d weights must have rank 4 (out, in, k, k)");
        require(weights->dim(2) == weights->dim(3), ErrorKind::kDimension,
                "conv2d kernels must be square");
        require(stride >= 1, ErrorKind::kArgument, "conv2d stride must be positive");
        break;
      case LayerKind::kFullyConnected:
        require(weights && weights->rank() == 2, ErrorKind::kDimension,
                "fully_connected weights must have rank 2 (out, in)");
        break;
      case LayerKind::kBatchNorm: {
        require(bn.has_value(), ErrorKind::kStructural, "batchnorm layer without parameters");
        const std::size_t c = bn->gamma.size();
        require(c > 0 && bn->beta.size() == c && bn->running_mean.size() == c &&
                    bn->running_var.size() == c,
                ErrorKind::kDimension, "batchnorm parameter lengths disagree");
        require((bn->running_var.flat().array() >= Scalar(0)).all(), ErrorKind::kNumeric,
                "batchnorm running_var must be non-negative");
        require(bn->eps >= 0.0, ErrorKind::kNumeric, "batchnorm eps must be non-negative");
        break;
      }
      case LayerKind::kRelu:
        break;
    }
    if (bias) {
      require(is_linear() && bias->size() == weights->dim(0), ErrorKind::kDimension,
              "bias length " + std::to_string(bias->size()) + " does not match " +
                  std::to_string(is_linear() ? weights->dim(0) : 0) + " output channels");
    }
  }
};

using LayerSpec = Layer<float>;

template <typename Scalar>
struct LocalGradients {
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
};

inline std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                      std::size_t padding) {
  require(in + 2 * padding >= kernel, ErrorKind::kDimension,
          "kernel " + std::to_string(kernel) + " larger than padded input " +
              std::to_string(in + 2 * padding));
  return (in + 2 * padding - kernel) / stride + 1;
}

namespace detail {

/// Samples per gradient partial sum. Fixed so the reduction tree never depends
/// on the worker count.
inline constexpr std::size_t kGradientChunk = 8;

template <typename Scalar>
struct ConvGeometry {
  std::size_t batch, in_c, height, width, out_c, kernel, out_h, out_w;
  std::size_t patch() const { return in_c * kernel * kernel; }
  std::size_t positions() const { return out_h * out_w; }
};

template <typename Scalar>
ConvGeometry<Scalar> conv_geometry(const Layer<Scalar>& layer, const Tensor<Scalar>& input) {
  const auto& w = *layer.weights;
  require(input.rank() == 4, ErrorKind::kDimension,
          "conv2d expects (N, C, H, W) input, got " + shape_string(input.shape()));
  require(input.dim(1) == w.dim(1), ErrorKind::kDimension,
          "conv2d input has " + std::to_string(input.dim(1)) + " channels, weights expect " +
              std::to_string(w.dim(1)));
  ConvGeometry<Scalar> g{};
  g.batch = input.dim(0);
  g.in_c = input.dim(1);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.out_c = w.dim(0);
  g.kernel = w.dim(2);
  g.out_h = conv_output_extent(g.height, g.kernel, layer.stride, layer.padding);
  g.out_w = conv_output_extent(g.width, g.kernel, layer.stride, layer.padding);
  return g;
}

/// Patch matrix (C*k*k, out_h*out_w) for one sample, zero-padded.
template <typename Scalar>
void im2col(const Scalar* sample, const ConvGeometry<Scalar>& g, std::size_t stride,
            std::size_t padding, typename Tensor<Scalar>::RowMatrix& cols) {
  cols.resize(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.positions()));
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t c = 0; c < g.in_c; ++c) {
    const Scalar* plane = sample + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const auto row = static_cast<Eigen::Index>((c * g.kernel + ky) * g.kernel + kx);
        Scalar* dst = cols.row(row).data();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                                ix < static_cast<std::ptrdiff_t>(g.width);
            *dst++ = inside ? plane[static_cast<std::size_t>(iy) * g.width +
                                    static_cast<std::size_t>(ix)]
                            : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
std::size_t fc_features(const Layer<Scalar>& layer, const Tensor<Scalar>& input) {
  require(input.rank() >= 2, ErrorKind::kDimension,
          "fully_connected expects (N, features) input, got " + shape_string(input.shape()));
  const std::size_t features = input.size() / input.dim(0);
  require(features == layer.weights->dim(1), ErrorKind::kDimension,
          "fully_connected input has " + std::to_string(features) + " features, weights expect " +
              std::to_string(layer.weights->dim(1)));
  return features;
}

}  // namespace detail

/// f(W, X): the linear part of a conv / fully connected layer, without bias.
template <typename Scalar>
Tensor<Scalar> linear_forward(const Layer<Scalar>& layer, const Tensor<Scalar>& input) {
  require(layer.prunable(), ErrorKind::kUnsupportedLayer,
          std::string(to_string(layer.kind)) + " has no linear part");
  const auto& w = *layer.weights;
  if (layer.kind == LayerKind::kFullyConnected) {
    const std::size_t features = detail::fc_features(layer, input);
    Tensor<Scalar> out({input.dim(0), w.dim(0)});
    out.matrix(input.dim(0), w.dim(0)).noalias() =
        input.matrix(input.dim(0), features) * w.leading_matrix().transpose();
    return out;
  }
  const auto g = detail::conv_geometry(layer, input);
  Tensor<Scalar> out({g.batch, g.out_c, g.out_h, g.out_w});
  const auto wmat = w.leading_matrix();
  const std::size_t in_stride = g.in_c * g.height * g.width;
  const std::size_t out_stride = g.out_c * g.positions();
  parallel_for(g.batch, [&](std::size_t n) {
    typename Tensor<Scalar>::RowMatrix cols;
    detail::im2col(input.data() + n * in_stride, g, layer.stride, layer.padding, cols);
    typename Tensor<Scalar>::MatrixMap dst(out.data() + n * out_stride,
                                           static_cast<Eigen::Index>(g.out_c),
                                           static_cast<Eigen::Index>(g.positions()));
    dst.noalias() = wmat * cols;
  });
  return out;
}

/// Adds a per-output-channel bias in place. Channel axis is 1.
template <typename Scalar>
void add_channel_bias(Tensor<Scalar>& t, const Tensor<Scalar>& bias) {
  require(t.rank() >= 2 && t.dim(1) == bias.size(), ErrorKind::kDimension,
          "bias length " + std::to_string(bias.size()) + " does not match " +
              shape_string(t.shape()));
  const std::size_t channels = t.dim(1);
  const std::size_t inner = t.size() / (t.dim(0) * channels);
  Scalar* p = t.data();
  for (std::size_t n = 0; n < t.dim(0); ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const Scalar b = bias[c];
      for (std::size_t i = 0; i < inner; ++i) *p++ += b;
    }
  }
}

/// Per-channel (axis 1) mean over batch and spatial axes, accumulated in double.
template <typename Scalar>
Eigen::VectorXd channel_means(const Tensor<Scalar>& t) {
  require(t.rank() >= 2, ErrorKind::kDimension, "channel statistics need rank >= 2");
  const std::size_t channels = t.dim(1);
  const std::size_t inner = t.size() / (t.dim(0) * channels);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(channels));
  const Scalar* p = t.data();
  for (std::size_t n = 0; n < t.dim(0); ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < inner; ++i) acc += static_cast<double>(*p++);
      sum[static_cast<Eigen::Index>(c)] += acc;
    }
  }
  return sum / static_cast<double>(t.dim(0) * inner);
}

template <typename Scalar>
Tensor<Scalar> layer_forward(const Layer<Scalar>& layer, const Tensor<Scalar>& input) {
  switch (layer.kind) {
    case LayerKind::kConv2d:
    case LayerKind::kFullyConnected: {
      auto out = linear_forward(layer, input);
      if (layer.bias) add_channel_bias(out, *layer.bias);
      return out;
    }
    case LayerKind::kBatchNorm: {
      const auto& bn = *layer.bn;
      require(input.rank() >= 2 && input.dim(1) == bn.gamma.size(), ErrorKind::kDimension,
              "batchnorm over " + std::to_string(bn.gamma.size()) + " channels got input " +
                  shape_string(input.shape()));
      Tensor<Scalar> out = input;
      const std::size_t channels = input.dim(1);
      const std::size_t inner = input.size() / (input.dim(0) * channels);
      std::vector<Scalar> scale(channels), shift(channels);
      for (std::size_t c = 0; c < channels; ++c) {
        const double s = static_cast<double>(bn.gamma[c]) /
                         std::sqrt(static_cast<double>(bn.running_var[c]) + bn.eps);
        scale[c] = static_cast<Scalar>(s);
        shift[c] = static_cast<Scalar>(static_cast<double>(bn.beta[c]) -
                                       s * static_cast<double>(bn.running_mean[c]));
      }
      Scalar* p = out.data();
      for (std::size_t n = 0; n < input.dim(0); ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < inner; ++i, ++p) *p = *p * scale[c] + shift[c];
        }
      }
      return out;
    }
    case LayerKind::kRelu: {
      Tensor<Scalar> out = input;
      out.flat() = out.flat().cwiseMax(Scalar(0));
      return out;
    }
  }
  throw Error(ErrorKind::kUnsupportedLayer, "unknown layer kind");
}

/// Gradients of sum((f(W, X) + b - target)^2) w.r.t. W and b, given the
/// residual (prediction - target) and the layer input X.
template <typename Scalar>
LocalGradients<Scalar> layer_local_gradients(const Layer<Scalar>& layer,
                                             const Tensor<Scalar>& input,
                                             const Tensor<Scalar>& residual) {
  require(layer.prunable(), ErrorKind::kUnsupportedLayer,
          std::string(to_string(layer.kind)) + " has no local gradients");
  const auto& w = *layer.weights;
  LocalGradients<Scalar> grads{Tensor<Scalar>(w.shape()), Tensor<Scalar>({w.dim(0)})};

  if (layer.kind == LayerKind::kFullyConnected) {
    const std::size_t features = detail::fc_features(layer, input);
    const std::size_t n = input.dim(0);
    require(residual.shape() == Shape({n, w.dim(0)}), ErrorKind::kDimension,
            "residual shape " + shape_string(residual.shape()) + " does not match output (" +
                std::to_string(n) + ", " + std::to_string(w.dim(0)) + ")");
    const auto r = residual.matrix(n, w.dim(0));
    grads.weights.leading_matrix().noalias() =
        Scalar(2) * (r.transpose() * input.matrix(n, features));
    grads.bias.flat() = Scalar(2) * r.colwise().sum().transpose();
    return grads;
  }

  const auto g = detail::conv_geometry(layer, input);
  require(residual.shape() == Shape({g.batch, g.out_c, g.out_h, g.out_w}), ErrorKind::kDimension,
          "residual shape " + shape_string(residual.shape()) + " does not match conv output");
  using RowMatrix = typename Tensor<Scalar>::RowMatrix;
  using Vector = typename Tensor<Scalar>::Vector;
  const std::size_t chunks = (g.batch + detail::kGradientChunk - 1) / detail::kGradientChunk;
  std::vector<RowMatrix> partial_w(chunks);
  std::vector<Vector> partial_b(chunks);
  const std::size_t in_stride = g.in_c * g.height * g.width;
  const std::size_t out_stride = g.out_c * g.positions();
  parallel_for(chunks, [&](std::size_t chunk) {
    RowMatrix acc = RowMatrix::Zero(static_cast<Eigen::Index>(g.out_c),
                                    static_cast<Eigen::Index>(g.patch()));
    Vector acc_b = Vector::Zero(static_cast<Eigen::Index>(g.out_c));
    RowMatrix cols;
    const std::size_t end = std::min(g.batch, (chunk + 1) * detail::kGradientChunk);
    for (std::size_t n = chunk * detail::kGradientChunk; n < end; ++n) {
      detail::im2col(input.data() + n * in_stride, g, layer.stride, layer.padding, cols);
      typename Tensor<Scalar>::ConstMatrixMap r(residual.data() + n * out_stride,
                                                static_cast<Eigen::Index>(g.out_c),
                                                static_cast<Eigen::Index>(g.positions()));
      acc.noalias() += r * cols.transpose();
      acc_b += r.rowwise().sum();
    }
    partial_w[chunk] = std::move(acc);
    partial_b[chunk] = std::move(acc_b);
  });
  auto gw = grads.weights.leading_matrix();
  for (std::size_t c = 0; c < chunks; ++c) {
    gw += partial_w[c];
    grads.bias.flat() += partial_b[c];
  }
  grads.weights.flat() *= Scalar(2);
  grads.bias.flat() *= Scalar(2);
  return grads;
}

}  // namespace sparsekit

#endif  // SPARSEKIT_LAYER_HPP
