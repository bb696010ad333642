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
#ifndef SPARSEKIT_ADAM_HPP
#define SPARSEKIT_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <utility>

#include "sparsekit/error.hpp"
#include "sparsekit/tensor.hpp"

namespace sparsekit {

template <typename Scalar>
struct AdamState {
  Tensor<Scalar> first_moment;
  Tensor<Scalar> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState fresh(const Shape& shape) {
    return AdamState{Tensor<Scalar>(shape), Tensor<Scalar>(shape)};
  }
};

/// One bias-corrected Adam update. No weight decay term.
template <typename Scalar>
std::pair<Tensor<Scalar>, AdamState<Scalar>> adam_step(Tensor<Scalar> param,
                                                        const Tensor<Scalar>& grad,
                                                        AdamState<Scalar> state,
                                                        double learning_rate) {
  require(param.shape() == grad.shape() && param.shape() == state.first_moment.shape() &&
              param.shape() == state.second_moment.shape(),
          ErrorKind::kDimension,
          "adam shapes disagree: param " + shape_string(param.shape()) + ", grad " +
              shape_string(grad.shape()));
  require(grad.all_finite(), ErrorKind::kNumeric, "non-finite gradient");

  state.step_count += 1;
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  const auto t = static_cast<double>(state.step_count);
  const auto correction1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, t));
  const auto correction2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, t));
  const auto lr = static_cast<Scalar>(learning_rate);
  const auto eps = static_cast<Scalar>(state.eps);

  auto m = state.first_moment.flat().array();
  auto v = state.second_moment.flat().array();
  const auto g = grad.flat().array();
  m = b1 * m + (Scalar(1) - b1) * g;
  v = b2 * v + (Scalar(1) - b2) * g.square();
  // Coordinates with an exactly zero gradient keep their value, so masked
  // weights and converged parameters never drift on stale momentum.
  param.flat().array() -= (g != Scalar(0))
                              .select(lr * (m / correction1) / ((v / correction2).sqrt() + eps),
                                      Scalar(0));
  return {std::move(param), std::move(state)};
}

}  // namespace sparsekit

#endif  // SPARSEKIT_ADAM_HPP
