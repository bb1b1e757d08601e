// Copyright 2026 The rrseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rrseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rrseg/stats.hpp"

namespace rrseg::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                          std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(base) ^ tag) ^ index);
}

enum SeedTag : std::uint64_t {
  kTagPrototypes = 1,
  kTagAssign = 2,
  kTagPlace = 3,
  kTagFeatures = 4,
};

double position(const SceneSpec& spec, int cls) {
  if (spec.num_classes == 1) return 0.0;
  return std::pow(static_cast<double>(cls) / (spec.num_classes - 1),
                  spec.head_tail_exponent);
}

struct Rect {
  int cls, top, left, h, w;
};

// Rectangles of one image in draw order, or empty if some class ended up
// fully hidden after `max_tries` redraws.
std::vector<Rect> place(const SceneSpec& spec, const std::vector<int>& classes,
                        const std::vector<double>& area, std::mt19937_64& rng,
                        SegMap& out) {
  const int hh = spec.height, ww = spec.width;
  std::uniform_real_distribution<double> jitter(0.5, 1.5);
  std::uniform_real_distribution<double> log_aspect(-0.7, 0.7);
  constexpr int kMaxTries = 200;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    std::vector<Rect> rects;
    std::fill(out.labels.begin(), out.labels.end(), Label{0});
    for (int cls : classes) {
      const double a = std::clamp(area[cls] * jitter(rng), 1.0,
                                  static_cast<double>(hh) * ww);
      const double aspect = std::exp(log_aspect(rng));
      const int h = std::clamp(static_cast<int>(std::lround(std::sqrt(a * aspect))), 1, hh);
      const int w = std::clamp(static_cast<int>(std::lround(a / h)), 1, ww);
      const int top = std::uniform_int_distribution<int>(0, hh - h)(rng);
      const int left = std::uniform_int_distribution<int>(0, ww - w)(rng);
      rects.push_back({cls, top, left, h, w});
      for (int r = top; r < top + h; ++r) {
        for (int c = left; c < left + w; ++c) out.at(r, c) = static_cast<Label>(cls);
      }
    }
    std::vector<bool> seen(spec.num_classes, false);
    for (Label l : out.labels) seen[l] = true;
    // The background is planned into every image as well.
    bool ok = seen[0];
    for (int cls : classes) ok = ok && seen[cls];
    if (ok) return rects;
  }
  return {};
}

}  // namespace

void validate(const SceneSpec& spec) {
  auto fail = [](const std::string& m) { throw ConfigError("scene: " + m); };
  if (spec.num_classes < 1 || spec.num_classes >= kIgnoreLabel) fail("num_classes out of range");
  if (spec.height < 1 || spec.width < 1) fail("image size must be positive");
  if (spec.num_images < 1) fail("num_images must be positive");
  if (spec.feature_dim < 1) fail("feature_dim must be positive");
  if (!(spec.head_tail_exponent > 0.0)) fail("head_tail_exponent must be positive");
  if (!(spec.target_pif >= 1.0) || !(spec.target_rif >= 1.0)) {
    fail("target_pif and target_rif must be >= 1");
  }
  if (spec.target_rif > spec.num_images) fail("target_rif exceeds num_images");
  if (!(spec.prototype_separation >= 0.0)) fail("prototype_separation must be >= 0");
  if (!(spec.region_noise_share >= 0.0 && spec.region_noise_share <= 1.0)) {
    fail("region_noise_share must lie in [0, 1]");
  }
  if (!(spec.tolerance > 0.0)) fail("tolerance must be positive");
  if (spec.max_attempts < 1) fail("max_attempts must be positive");
  for (const auto& p : spec.confusable_pairs) {
    if (p.a < 0 || p.b < 0 || p.a >= spec.num_classes || p.b >= spec.num_classes ||
        p.a == p.b) {
      fail("confusable pair (" + std::to_string(p.a) + ", " + std::to_string(p.b) +
           ") is not a pair of distinct classes");
    }
    if (!(p.overlap >= 0.0 && p.overlap < 1.0)) {
      fail("confusable overlap must lie in [0, 1)");
    }
  }
}

std::vector<std::uint64_t> planned_region_counts(const SceneSpec& spec) {
  std::vector<std::uint64_t> f(spec.num_classes);
  for (int i = 0; i < spec.num_classes; ++i) {
    const double v = spec.num_images * std::pow(spec.target_rif, -position(spec, i));
    f[i] = std::clamp<std::uint64_t>(static_cast<std::uint64_t>(std::llround(v)), 1,
                                     static_cast<std::uint64_t>(spec.num_images));
  }
  return f;
}

Matrix prototypes(const SceneSpec& spec) {
  const int c = spec.num_classes, d = spec.feature_dim;
  std::mt19937_64 rng(derive_seed(spec.seed, kTagPrototypes, 0));
  std::normal_distribution<double> normal;
  Matrix p(c, d);
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < d; ++j) p(i, j) = normal(rng);
  }
  if (d >= c) {
    // Orthonormal rows scaled by sep / sqrt(2): every pair sits exactly
    // `separation` apart.
    for (int i = 0; i < c; ++i) {
      for (int k = 0; k < i; ++k) p.row(i) -= p.row(i).dot(p.row(k)) * p.row(k);
      p.row(i).normalize();
    }
  } else {
    p.rowwise().normalize();
  }
  return p * (spec.prototype_separation / std::sqrt(2.0));
}

GenerateResult generate(const SceneSpec& spec) {
  validate(spec);
  const int c = spec.num_classes;
  const int n = spec.num_images;
  const double pixels_per_image = static_cast<double>(spec.height) * spec.width;
  const auto regions = planned_region_counts(spec);

  // Pixel budget per class along the same head-to-tail curve, normalized
  // to the total pixel count; class 0 absorbs whatever is left uncovered.
  std::vector<double> pixel_target(c);
  for (int i = 0; i < c; ++i) pixel_target[i] = std::pow(spec.target_pif, -position(spec, i));
  const double norm = std::accumulate(pixel_target.begin(), pixel_target.end(), 0.0);
  for (double& v : pixel_target) v *= n * pixels_per_image / norm;
  std::vector<double> area(c, 0.0);
  for (int i = 1; i < c; ++i) area[i] = pixel_target[i] / static_cast<double>(regions[i]);

  // Which images contain which foreground classes.
  std::vector<std::vector<int>> image_classes(n);
  {
    std::mt19937_64 rng(derive_seed(spec.seed, kTagAssign, 0));
    std::vector<int> idx(n);
    for (int i = 1; i < c; ++i) {
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::uint64_t j = 0; j < regions[i]; ++j) image_classes[idx[j]].push_back(i);
    }
  }

  GenerateResult result;
  data::Dataset& ds = result.dataset;
  ds.num_classes = c;
  std::vector<std::vector<Rect>> layouts(n);
  bool accepted = false;
  for (int attempt = 0; attempt < spec.max_attempts && !accepted; ++attempt) {
    result.attempts = attempt + 1;
    ds.labels.assign(n, SegMap(spec.height, spec.width));
    for (int img = 0; img < n; ++img) {
      std::mt19937_64 rng(derive_seed(spec.seed, kTagPlace,
                                      (static_cast<std::uint64_t>(attempt) << 32) | img));
      layouts[img] = place(spec, image_classes[img], area, rng, ds.labels[img]);
      if (layouts[img].empty() && !image_classes[img].empty()) {
        throw DataError("scene: cannot place the classes of image " +
                        std::to_string(img) + " without hiding one of them");
      }
    }
    ds.frequencies = stats::profile(ds.labels, c);
    result.pif = stats::imbalance_factor(ds.frequencies.pixel_freq).value_or(1.0);
    result.rif = stats::imbalance_factor(ds.frequencies.region_freq).value_or(1.0);
    accepted = std::abs(result.pif / spec.target_pif - 1.0) <= spec.tolerance &&
               std::abs(result.rif / spec.target_rif - 1.0) <= spec.tolerance;
    if (accepted) break;
    // Occlusion eats into the earlier (head) rectangles; rescale each
    // class's area by its planned / realized pixel ratio and redraw.
    for (int i = 1; i < c; ++i) {
      const double realized = static_cast<double>(ds.frequencies.pixel_freq[i]);
      const double ratio = realized > 0.0 ? pixel_target[i] / realized : 2.0;
      area[i] = std::min(area[i] * std::clamp(ratio, 0.5, 2.0), pixels_per_image);
    }
  }
  if (!accepted) {
    throw DataError("scene: realized PIF " + std::to_string(result.pif) + " / RIF " +
                    std::to_string(result.rif) + " outside tolerance after " +
                    std::to_string(spec.max_attempts) + " attempts");
  }

  // Features: prototype (possibly pulled towards a confusable partner) +
  // shared per-region noise + per-pixel noise.
  const Matrix proto = prototypes(spec);
  const int d = spec.feature_dim;
  const double sigma =
      spec.noise_scale < 0.0 ? 0.5 * spec.prototype_separation : spec.noise_scale;
  const double share = spec.region_noise_share;
  std::vector<std::vector<std::pair<int, double>>> partners(c);
  for (const auto& p : spec.confusable_pairs) {
    partners[p.a].push_back({p.b, p.overlap});
    partners[p.b].push_back({p.a, p.overlap});
  }
  ds.images.assign(n, FeatureImage(spec.height, spec.width, d));
  std::vector<double> region_noise(static_cast<std::size_t>(c) * d);
  for (int img = 0; img < n; ++img) {
    std::mt19937_64 rng(derive_seed(spec.seed, kTagFeatures, img));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (double& v : region_noise) v = normal(rng);
    const SegMap& lab = ds.labels[img];
    FeatureImage& out = ds.images[img];
    for (std::size_t px = 0; px < lab.size(); ++px) {
      const int cls = lab.labels[px];
      int partner = -1;
      double pull = 0.0;
      const auto& ps = partners[cls];
      if (!ps.empty()) {
        const auto& choice =
            ps.size() == 1 ? ps[0]
                           : ps[std::uniform_int_distribution<std::size_t>(0, ps.size() - 1)(rng)];
        partner = choice.first;
        pull = choice.second * unit(rng);
      }
      float* f = out.pixel(px);
      for (int j = 0; j < d; ++j) {
        double v = proto(cls, j);
        if (partner >= 0) v += pull * (proto(partner, j) - proto(cls, j));
        v += sigma * (share * region_noise[static_cast<std::size_t>(cls) * d + j] +
                      (1.0 - share) * normal(rng));
        f[j] = static_cast<float>(v);
      }
    }
  }
  return result;
}

}  // namespace rrseg::synth
