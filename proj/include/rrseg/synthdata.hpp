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

#ifndef RRSEG_SYNTHDATA_HPP_
#define RRSEG_SYNTHDATA_HPP_

#include <cstdint>
#include <vector>

#include "rrseg/common.hpp"
#include "rrseg/dataset.hpp"

namespace rrseg::synth {

// Two classes whose pixels locally resemble each other. Each pixel of
// either class is pulled towards the partner prototype by a uniformly
// drawn fraction of `overlap`; region means stay apart while overlap < 1.
struct ConfusablePair {
  int a = 0;
  int b = 0;
  double overlap = 0.0;
};

struct SceneSpec {
  int num_classes = 12;
  int height = 32;
  int width = 32;
  int num_images = 2000;
  // Shape of the head-to-tail decay: class i sits at position
  // (i / (C-1))^exponent between the head and tail frequencies.
  double head_tail_exponent = 1.0;
  double target_pif = 100.0;
  double target_rif = 15.0;
  int feature_dim = 16;
  double prototype_separation = 4.0;
  std::vector<ConfusablePair> confusable_pairs;
  // 1 = every pixel of a region shares one noise draw; 0 = i.i.d. pixels.
  double region_noise_share = 0.5;
  // Spherical noise standard deviation; negative = 0.5 * separation.
  double noise_scale = -1.0;
  std::uint64_t seed = 0;
  // Accepted relative deviation of the realized PIF / RIF.
  double tolerance = 0.1;
  int max_attempts = 12;
};

// Throws ConfigError on an invalid spec.
void validate(const SceneSpec& spec);

struct GenerateResult {
  data::Dataset dataset;  // dataset.frequencies is the realized table
  double pif = 1.0;       // 1 when fewer than two classes are populated
  double rif = 1.0;
  int attempts = 0;
};

// Class 0 fills every image as background; every other class i is drawn
// as one axis-aligned rectangle in F(i) images, head classes first so the
// rarer classes occlude them. Placement is retried with corrected areas
// until the realized PIF and RIF are within tolerance. Deterministic in
// the spec. Throws DataError when the spec cannot be met.
GenerateResult generate(const SceneSpec& spec);

// Class prototypes (C x D). Pairwise distance equals the separation
// whenever D >= C.
Matrix prototypes(const SceneSpec& spec);

// Planned per-class region counts F(i).
std::vector<std::uint64_t> planned_region_counts(const SceneSpec& spec);

}  // namespace rrseg::synth

#endif  // RRSEG_SYNTHDATA_HPP_
