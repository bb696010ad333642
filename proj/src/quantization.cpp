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
#include "sparsekit/quantization.hpp"

#include <algorithm>
#include <cmath>

#include "sparsekit/model.hpp"

namespace sparsekit {

namespace {

float scale_from_max(double max_abs) {
  if (max_abs == 0.0) return kMinQuantScale;
  return static_cast<float>(max_abs / kQuantMax);
}

// std::nearbyint honours the default FE_TONEAREST mode: ties go to even.
int code_of(float value, float scale) {
  const double q = std::nearbyint(static_cast<double>(value) / static_cast<double>(scale));
  return static_cast<int>(std::clamp(q, -double(kQuantMax), double(kQuantMax)));
}

std::size_t channel_count(const Tensorf& t, const QuantParams& q) {
  require(!q.scales.empty(), ErrorKind::kArgument, "quantization parameters without scales");
  for (float s : q.scales) {
    require(s > 0.0f && std::isfinite(s), ErrorKind::kNumeric, "quantization scale must be positive");
  }
  if (q.is_per_tensor()) return 1;
  require(t.rank() >= 1 && t.dim(0) == q.scales.size(), ErrorKind::kDimension,
          std::to_string(q.scales.size()) + " channel scales for tensor " + shape_string(t.shape()));
  return q.scales.size();
}

}  // namespace

QuantParams weight_qparams(const Tensorf& w) {
  require(w.rank() >= 2, ErrorKind::kDimension,
          "per-channel weight quantization needs rank >= 2, got " + shape_string(w.shape()));
  const auto m = w.leading_matrix();
  QuantParams q;
  q.scales.reserve(w.dim(0));
  for (Eigen::Index c = 0; c < m.rows(); ++c) {
    q.scales.push_back(scale_from_max(static_cast<double>(m.row(c).cwiseAbs().maxCoeff())));
  }
  return q;
}

QuantParams activation_qparams(std::span<const CapturedActivations> captured,
                               const std::string& layer) {
  double max_abs = 0.0;
  bool seen = false;
  for (const auto& batch : captured) {
    auto it = batch.find(layer);
    if (it == batch.end()) continue;
    seen = true;
    if (it->second.input.size() > 0) {
      max_abs = std::max(max_abs,
                         static_cast<double>(it->second.input.flat().cwiseAbs().maxCoeff()));
    }
  }
  require(seen, ErrorKind::kConfig, "no captured activations for layer '" + layer + "'");
  return QuantParams::per_tensor(scale_from_max(max_abs));
}

Tensor<int> quantize_codes(const Tensorf& t, const QuantParams& q) {
  const std::size_t channels = channel_count(t, q);
  Tensor<int> codes(t.shape());
  const std::size_t inner = t.size() / channels;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = c * inner; i < (c + 1) * inner; ++i) codes[i] = code_of(t[i], q.scales[c]);
  }
  return codes;
}

Tensorf fake_quantize(const Tensorf& t, const QuantParams& q) {
  const std::size_t channels = channel_count(t, q);
  Tensorf out(t.shape());
  const std::size_t inner = t.size() / channels;
  for (std::size_t c = 0; c < channels; ++c) {
    const float scale = q.scales[c];
    for (std::size_t i = c * inner; i < (c + 1) * inner; ++i) {
      out[i] = static_cast<float>(code_of(t[i], scale)) * scale;
    }
  }
  return out;
}

Model quantize_model(const Model& model, std::span<const Tensorf> calib_batches) {
  require(!calib_batches.empty(), ErrorKind::kArgument, "empty calibration pool");
  Model float_model = model;
  float_model.activation_scales.clear();

  std::set<std::string> targets;
  for (std::size_t i : model.prunable_indices()) targets.insert(model.names[i]);
  std::vector<CapturedActivations> captured;
  captured.reserve(calib_batches.size());
  for (const auto& batch : calib_batches) {
    captured.push_back(forward_with_capture(float_model, batch, targets).captured);
  }

  Model quantized = float_model;
  for (std::size_t i : model.prunable_indices()) {
    auto& w = *quantized.layers[i].weights;
    w = fake_quantize(w, weight_qparams(w));
    // an already calibrated layer keeps its scale, so requantizing is a no-op
    const auto existing = model.activation_scales.find(model.names[i]);
    quantized.activation_scales[model.names[i]] =
        existing != model.activation_scales.end()
            ? existing->second
            : activation_qparams(captured, model.names[i]).scales.front();
  }
  return quantized;
}

}  // namespace sparsekit
