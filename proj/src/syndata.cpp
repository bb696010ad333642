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
#include "sparsekit/syndata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "sparsekit/parallel.hpp"
#include "sparsekit/rng.hpp"

namespace sparsekit {

namespace fs = std::filesystem;

IFSSystem IFSSystem::from_maps(std::vector<AffineMap> maps) {
  require(maps.size() >= 2 && maps.size() <= 8, ErrorKind::kArgument,
          "an IFS needs 2..8 maps, got " + std::to_string(maps.size()));
  double total = 0.0;
  bool contributes = false;
  for (const auto& m : maps) {
    total += std::abs(m.det());
    contributes |= std::abs(m.det()) > 1e-6;
  }
  require(contributes, ErrorKind::kGeneration, "every map of the IFS is degenerate");
  IFSSystem sys;
  sys.probabilities.reserve(maps.size());
  for (const auto& m : maps) sys.probabilities.push_back(std::abs(m.det()) / total);
  sys.maps = std::move(maps);
  return sys;
}

namespace {

class ChaosGame {
 public:
  ChaosGame(const IFSSystem& sys, std::uint64_t seed) : sys_(sys), rng_(seed) {
    cumulative_.reserve(sys.probabilities.size());
    double acc = 0.0;
    for (double p : sys.probabilities) cumulative_.push_back(acc += p);
  }

  void step() {
    const double u = rng_.uniform() * cumulative_.back();
    const auto pick = static_cast<std::size_t>(
        std::upper_bound(cumulative_.begin(), cumulative_.end(), u) - cumulative_.begin());
    const AffineMap& m = sys_.maps[std::min(pick, sys_.maps.size() - 1)];
    const double nx = m.a * x_ + m.b * y_ + m.e;
    const double ny = m.c * x_ + m.d * y_ + m.f;
    x_ = nx;
    y_ = ny;
    if (!(std::abs(x_) <= kDivergenceLimit && std::abs(y_) <= kDivergenceLimit)) {
      throw Error(ErrorKind::kNumeric, "numerically unstable IFS: orbit left |x|,|y| <= 1e6");
    }
  }

  double x() const { return x_; }
  double y() const { return y_; }

 private:
  const IFSSystem& sys_;
  Rng rng_;
  std::vector<double> cumulative_;
  double x_ = 0.0;
  double y_ = 0.0;
};

}  // namespace

Tensorf render_fractal(const IFSSystem& sys, std::size_t size, std::size_t n_points,
                       std::uint64_t seed) {
  require(size >= 32, ErrorKind::kArgument, "fractal size must be >= 32");
  require(n_points >= 1000, ErrorKind::kArgument, "fractal needs >= 1000 points");
  require(sys.maps.size() == sys.probabilities.size() && !sys.maps.empty(), ErrorKind::kArgument,
          "malformed IFS");

  ChaosGame pilot(sys, derive_seed(seed, 1));
  for (std::size_t i = 0; i < kBurnInPoints; ++i) pilot.step();
  double x0 = pilot.x(), x1 = pilot.x(), y0 = pilot.y(), y1 = pilot.y();
  for (std::size_t i = 0; i < kBoundsPilotPoints; ++i) {
    pilot.step();
    x0 = std::min(x0, pilot.x());
    x1 = std::max(x1, pilot.x());
    y0 = std::min(y0, pilot.y());
    y1 = std::max(y1, pilot.y());
  }
  const double extent = std::max({x1 - x0, y1 - y0, 1e-12});
  const double margin = 0.05 * extent;
  const double scale = static_cast<double>(size) / (extent + 2.0 * margin);
  const double cx = 0.5 * (x0 + x1);
  const double cy = 0.5 * (y0 + y1);
  const double half = 0.5 * static_cast<double>(size);

  std::vector<std::uint32_t> density(size * size, 0);
  ChaosGame game(sys, derive_seed(seed, 2));
  for (std::size_t i = 0; i < kBurnInPoints; ++i) game.step();
  const auto last = static_cast<std::ptrdiff_t>(size) - 1;
  for (std::size_t i = 0; i < n_points; ++i) {
    game.step();
    const double fx = std::floor((game.x() - cx) * scale + half);
    const double fy = std::floor(half - (game.y() - cy) * scale);
    if (fx < -1.0 || fy < -1.0 || fx > static_cast<double>(size) || fy > static_cast<double>(size)) {
      continue;
    }
    const auto px = static_cast<std::ptrdiff_t>(fx);
    const auto py = static_cast<std::ptrdiff_t>(fy);
    for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
      for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
        const std::ptrdiff_t r = py + dy;
        const std::ptrdiff_t c = px + dx;
        if (r < 0 || c < 0 || r > last || c > last) continue;
        ++density[static_cast<std::size_t>(r) * size + static_cast<std::size_t>(c)];
      }
    }
  }
  const std::uint32_t peak = *std::max_element(density.begin(), density.end());
  Tensorf image({1, size, size});
  if (peak == 0) return image;
  // Log scaling keeps thin structure visible next to dense fixed points.
  const double norm = std::log1p(static_cast<double>(peak));
  for (std::size_t i = 0; i < density.size(); ++i) {
    image[i] = static_cast<float>(std::log1p(static_cast<double>(density[i])) / norm);
  }
  return image;
}

double fill_rate(const Tensorf& image) {
  if (image.size() == 0) return 0.0;
  return 1.0 - static_cast<double>(count_zeros(image)) / static_cast<double>(image.size());
}

IFSSystem sample_ifs(std::uint64_t seed, const FractalOptions& opts) {
  Rng rng(derive_seed(seed, 0));
  for (std::size_t attempt = 0; attempt < kMaxIfsAttempts; ++attempt) {
    const std::size_t count = 2 + rng.below(7);
    std::vector<AffineMap> maps(count);
    bool contributes = false;
    for (auto& m : maps) {
      m = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
           rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      contributes |= std::abs(m.det()) > 1e-6;
    }
    if (!contributes) continue;
    IFSSystem sys = IFSSystem::from_maps(std::move(maps));
    try {
      const double rate = fill_rate(render_fractal(sys, opts.size, opts.n_points, seed));
      if (rate >= kMinFillRate && rate <= kMaxFillRate) return sys;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumeric) throw;
    }
  }
  throw Error(ErrorKind::kGeneration, "no IFS within the fill-rate window after " +
                                          std::to_string(kMaxIfsAttempts) + " attempts (seed " +
                                          std::to_string(seed) + ")");
}

Tensorf colorize(const Tensorf& gray, const std::array<double, 3>& alpha,
                 const std::array<double, 3>& beta) {
  require(gray.rank() == 3 && gray.dim(0) == 1, ErrorKind::kDimension,
          "colorize expects a (1, H, W) image, got " + shape_string(gray.shape()));
  const std::size_t plane = gray.dim(1) * gray.dim(2);
  Tensorf out({3, gray.dim(1), gray.dim(2)});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = alpha[c] * static_cast<double>(gray[i]) + beta[c];
      out[c * plane + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

Tensorf colorize_random(const Tensorf& gray, std::uint64_t seed, const ColorizeRanges& ranges) {
  Rng rng(derive_seed(seed, 3));
  std::array<double, 3> alpha{};
  std::array<double, 3> beta{};
  for (std::size_t c = 0; c < 3; ++c) {
    alpha[c] = rng.uniform(ranges.alpha_min, ranges.alpha_max);
    beta[c] = rng.uniform(ranges.beta_min, ranges.beta_max);
  }
  return colorize(gray, alpha, beta);
}

Tensorf white_noise_image(std::size_t channels, std::size_t height, std::size_t width,
                          std::uint64_t seed) {
  Tensorf out({channels, height, width});
  Rng rng(derive_seed(seed, 4));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(rng.byte()) / 255.0f;
  }
  return out;
}

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::kFractalColored: return "fractal_colored";
    case SyntheticKind::kFractalGray: return "fractal_gray";
    case SyntheticKind::kWhiteNoise: return "white_noise";
  }
  return "unknown";
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "fractal_colored") return SyntheticKind::kFractalColored;
  if (name == "fractal_gray") return SyntheticKind::kFractalGray;
  if (name == "white_noise") return SyntheticKind::kWhiteNoise;
  throw Error(ErrorKind::kConfig, "unknown synthetic data kind '" + std::string(name) + "'");
}

SyntheticImage synthetic_image(SyntheticKind kind, std::uint64_t seed,
                               const SyntheticOptions& opts) {
  if (kind == SyntheticKind::kWhiteNoise) {
    return {white_noise_image(3, opts.size, opts.size, seed), 1.0};
  }
  const FractalOptions fractal{opts.size, opts.n_points};
  const IFSSystem sys = sample_ifs(seed, fractal);
  Tensorf gray = render_fractal(sys, opts.size, opts.n_points, seed);
  const double rate = fill_rate(gray);
  if (kind == SyntheticKind::kFractalGray) return {std::move(gray), rate};
  return {colorize_random(gray, seed, opts.color), rate};
}

std::uint64_t image_seed(std::uint64_t root_seed, std::size_t index) {
  return derive_seed(root_seed, 0x1000 + index);
}

std::vector<GeneratedSample> generate_dataset(SyntheticKind kind, std::size_t count,
                                              std::uint64_t root_seed, const fs::path& out_dir,
                                              const SyntheticOptions& opts) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create '" + out_dir.string() + "': " + ec.message());
  const char* ext = kind == SyntheticKind::kFractalGray ? ".pgm" : ".ppm";
  std::vector<GeneratedSample> samples(count);
  parallel_for(count, [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05zu%s", i, ext);
    const std::uint64_t seed = image_seed(root_seed, i);
    const SyntheticImage img = synthetic_image(kind, seed, opts);
    write_pnm(out_dir / name, img.image);
    samples[i] = {name, seed, img.fill_rate};
  });

  nlohmann::json manifest = {{"kind", std::string(to_string(kind))},
                             {"root_seed", root_seed},
                             {"count", count},
                             {"size", opts.size},
                             {"samples", nlohmann::json::array()}};
  if (kind != SyntheticKind::kWhiteNoise) manifest["n_points"] = opts.n_points;
  for (const auto& s : samples) {
    nlohmann::json entry = {{"path", s.path}, {"seed", s.seed}};
    if (kind != SyntheticKind::kWhiteNoise) entry["fill_rate"] = s.fill_rate;
    manifest["samples"].push_back(std::move(entry));
  }
  std::ofstream out(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write manifest in '" + out_dir.string() + "'");
  out << manifest.dump(2) << '\n';
  return samples;
}

void write_pnm(const fs::path& path, const Tensorf& image) {
  require(image.rank() == 3 && (image.dim(0) == 1 || image.dim(0) == 3), ErrorKind::kDimension,
          "PNM needs a (1|3, H, W) image, got " + shape_string(image.shape()));
  const std::size_t channels = image.dim(0);
  const std::size_t h = image.dim(1);
  const std::size_t w = image.dim(2);
  std::string bytes = (channels == 3 ? "P6\n" : "P5\n") + std::to_string(w) + " " +
                      std::to_string(h) + "\n255\n";
  const std::size_t header = bytes.size();
  bytes.resize(header + channels * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = std::clamp(static_cast<double>(image[(c * h + y) * w + x]), 0.0, 1.0);
        bytes[header + (y * w + x) * channels + c] =
            static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Tensorf read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open '" + path.string() + "'");
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  require(in.good() && (magic == "P5" || magic == "P6") && maxval == 255 && w > 0 && h > 0,
          ErrorKind::kFormat, "'" + path.string() + "' is not an 8-bit binary PGM/PPM");
  in.get();  // single whitespace before the raster
  const std::size_t channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> raster(channels * w * h);
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  require(static_cast<std::size_t>(in.gcount()) == raster.size(), ErrorKind::kByteCount,
          "'" + path.string() + "' raster is truncated");
  Tensorf image({channels, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        image[(c * h + y) * w + x] = static_cast<float>(raster[(y * w + x) * channels + c]) / 255.0f;
      }
    }
  }
  return image;
}

}  // namespace sparsekit
