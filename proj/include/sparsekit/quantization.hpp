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
#ifndef SPARSEKIT_QUANTIZATION_HPP
#define SPARSEKIT_QUANTIZATION_HPP

#include <map>
#include <span>
#include <string>
#include <vector>

#include "sparsekit/tensor.hpp"

namespace sparsekit {

struct Model;
struct LayerActivations;

inline constexpr int kQuantMax = 127;
inline constexpr float kMinQuantScale = 1e-9f;

/// Symmetric 8-bit grid. One scale means per-tensor; otherwise one scale per
/// slice of the leading axis.
struct QuantParams {
  std::vector<float> scales;
  int bit_width = 8;

  static QuantParams per_tensor(float scale) { return QuantParams{{scale}}; }
  bool is_per_tensor() const { return scales.size() == 1; }
};

/// Per output channel: max |w| / 127, with 1e-9 for all-zero channels.
QuantParams weight_qparams(const Tensorf& w);

/// Per-tensor scale from the max |input| seen by `layer` over all captured batches.
QuantParams activation_qparams(std::span<const std::map<std::string, LayerActivations>> captured,
                               const std::string& layer);

/// Integer codes clamp(round_half_even(t / scale), -127, 127).
Tensor<int> quantize_codes(const Tensorf& t, const QuantParams& q);

Tensorf fake_quantize(const Tensorf& t, const QuantParams& q);

/// Fake-quantizes every conv / fully connected weight per channel and records
/// a per-tensor input scale for each of those layers, calibrated on the float
/// model with the given input batches. Layers that already carry an input
/// scale keep it.
Model quantize_model(const Model& model, std::span<const Tensorf> calib_batches);

}  // namespace sparsekit

#endif  // SPARSEKIT_QUANTIZATION_HPP
