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
#ifndef SPARSEKIT_SYNDATA_HPP
#define SPARSEKIT_SYNDATA_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sparsekit/tensor.hpp"

namespace sparsekit {

/// (x, y) -> (a x + b y + e, c x + d y + f)
struct AffineMap {
  double a = 0, b = 0, c = 0, d = 0, e = 0, f = 0;
  double det() const { return a * d - b * c; }
};

/// Iterated function system; map probabilities proportional to |det|.
struct IFSSystem {
  std::vector<AffineMap> maps;
  std::vector<double> probabilities;

  static IFSSystem from_maps(std::vector<AffineMap> maps);
};

inline constexpr std::size_t kBurnInPoints = 100;
inline constexpr std::size_t kBoundsPilotPoints = 20000;
inline constexpr double kDivergenceLimit = 1e6;
inline constexpr double kMinFillRate = 0.05;
inline constexpr double kMaxFillRate = 0.4;
inline constexpr std::size_t kMaxIfsAttempts = 1000;

struct FractalOptions {
  std::size_t size = 512;
  std::size_t n_points = 100000;
};

/// Chaos-game render of a 1-channel (1, size, size) image in [0, 1]. The view
/// is the bounding box (plus 5% margin) of a fixed-length pilot orbit, so
/// renders with more points only add to a prefix of the same point stream.
Tensorf render_fractal(const IFSSystem& sys, std::size_t size, std::size_t n_points,
                       std::uint64_t seed);

/// Fraction of non-zero pixels over all channels.
double fill_rate(const Tensorf& image);

/// Random system (2..8 maps, coefficients in [-1, 1]) whose render with
/// (opts, seed) has a fill rate within [0.05, 0.4]; rejection-sampled.
IFSSystem sample_ifs(std::uint64_t seed, const FractalOptions& opts = {});

struct ColorizeRanges {
  double alpha_min = 0.5, alpha_max = 1.5;
  double beta_min = -0.2, beta_max = 0.2;
};

/// out_c = clamp(alpha_c * img + beta_c, 0, 1) for three channels.
Tensorf colorize(const Tensorf& gray, const std::array<double, 3>& alpha,
                 const std::array<double, 3>& beta);
Tensorf colorize_random(const Tensorf& gray, std::uint64_t seed, const ColorizeRanges& ranges = {});

/// I.i.d. uniform bytes 0..255, stored as value / 255.
Tensorf white_noise_image(std::size_t channels, std::size_t height, std::size_t width,
                          std::uint64_t seed);

enum class SyntheticKind { kFractalColored, kFractalGray, kWhiteNoise };

std::string_view to_string(SyntheticKind kind);
SyntheticKind parse_synthetic_kind(std::string_view name);

struct SyntheticOptions {
  std::size_t size = 512;
  std::size_t n_points = 100000;
  ColorizeRanges color;
};

struct SyntheticImage {
  Tensorf image;
  double fill_rate = 0.0;
};

/// One image of the given kind, fully determined by (kind, seed, options).
SyntheticImage synthetic_image(SyntheticKind kind, std::uint64_t seed,
                               const SyntheticOptions& opts = {});

/// Per-image seed derived from the dataset root seed.
std::uint64_t image_seed(std::uint64_t root_seed, std::size_t index);

struct GeneratedSample {
  std::string path;
  std::uint64_t seed = 0;
  double fill_rate = 0.0;
};

/// Writes `count` images (PPM for 3 channels, PGM for 1) plus manifest.json.
std::vector<GeneratedSample> generate_dataset(SyntheticKind kind, std::size_t count,
                                              std::uint64_t root_seed,
                                              const std::filesystem::path& out_dir,
                                              const SyntheticOptions& opts = {});

// Binary PNM (P5 / P6, maxval 255) for (C, H, W) tensors in [0, 1].
void write_pnm(const std::filesystem::path& path, const Tensorf& image);
Tensorf read_pnm(const std::filesystem::path& path);

}  // namespace sparsekit

#endif  // SPARSEKIT_SYNDATA_HPP
