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

#ifndef RRSEG_LOSSES_HPP_
#define RRSEG_LOSSES_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rrseg/common.hpp"

namespace rrseg::losses {

// Loss value plus gradient with respect to the logits (same shape). Rows
// whose target is the ignore label get a zero gradient row.
struct LossResult {
  double loss = 0.0;
  Matrix grad;
};

// Mean of -log softmax(logits)[target] over non-ignored rows.
// Throws PreconditionError if every target is ignored or a target is out
// of range.
LossResult softmax_ce(const Matrix& logits, std::span<const Label> targets,
                      Label ignore_label = kIgnoreLabel);

// Cross-entropy on logits shifted by log(prior):
//   -log( p_y e^{z_y} / sum_k p_k e^{z_k} )
// Throws PreconditionError on a non-positive prior.
LossResult balanced_softmax_ce(const Matrix& logits,
                               std::span<const Label> targets,
                               std::span<const double> priors,
                               Label ignore_label = kIgnoreLabel);

// sum_i w[t_i] CE_i / sum_i w[t_i]. Throws PreconditionError on a
// non-positive weight.
LossResult reweighted_ce(const Matrix& logits, std::span<const Label> targets,
                         std::span<const double> weights,
                         Label ignore_label = kIgnoreLabel);

// 1 / n_y rescaled to mean 1 over populated classes. Unpopulated classes
// receive the largest populated weight so every weight stays positive.
std::vector<double> inverse_frequency_weights(
    std::span<const std::uint64_t> counts);

// Treatment of classes whose region prior is zero.
enum class ZeroPriorPolicy {
  kDrop,     // remove the class from the softmax denominator
  kEpsilon,  // substitute LossConfig::epsilon for the prior
};

// Pixel features for a batch of images: one row per pixel, image-major,
// then row-major inside an image.
struct FeatureBatch {
  int batch = 0;
  int height = 0;
  int width = 0;
  Matrix values;
  Matrix grad;

  FeatureBatch() = default;
  FeatureBatch(int b, int h, int w, int dim);

  int dim() const { return static_cast<int>(values.cols()); }
  Eigen::Index pixels_per_image() const {
    return static_cast<Eigen::Index>(height) * width;
  }
  void zero_grad() { grad.setZero(values.rows(), values.cols()); }
};

// One region per (image, class present in that image's ground truth). The
// pooled feature is the arithmetic mean of the member pixels.
struct RegionBatch {
  Matrix features;                       // M x D
  std::vector<Label> labels;             // M
  std::vector<int> image;                // M, source image index
  std::vector<std::vector<Eigen::Index>> members;  // row indices into the pixel matrix

  int size() const { return static_cast<int>(labels.size()); }
};

// `pixel_features` rows follow the FeatureBatch layout for `gt`. Ignored
// pixels are excluded; an image with only ignored pixels contributes no
// region. Throws DataError on shape mismatch or out-of-range labels.
RegionBatch region_pool(const Matrix& pixel_features,
                        std::span<const SegMap> gt, int num_classes,
                        Label ignore_label = kIgnoreLabel);
RegionBatch region_pool(const FeatureBatch& features,
                        std::span<const SegMap> gt, int num_classes,
                        Label ignore_label = kIgnoreLabel);

// Scatters region gradients back to member pixels: each member receives
// g / |members|. Accumulates into `pixel_grad`.
void region_pool_backward(const RegionBatch& regions, const Matrix& region_grad,
                          Matrix& pixel_grad);

// Affine classifier: logits = features * weight + bias.
struct LinearHead {
  Matrix weight;  // D x C
  Vector bias;    // C

  LinearHead() = default;
  LinearHead(int in_dim, int num_classes)
      : weight(Matrix::Zero(in_dim, num_classes)),
        bias(Vector::Zero(num_classes)) {}

  Matrix forward(const Matrix& features) const;
  int in_dim() const { return static_cast<int>(weight.rows()); }
  int num_classes() const { return static_cast<int>(weight.cols()); }
};

struct RegionLossResult {
  double loss = 0.0;
  Matrix grad_weight;    // D x C
  Vector grad_bias;      // C
  Matrix grad_features;  // M x D
};

// Frequency-balanced region classification loss:
//   1/|R| sum_r -log( F(r^y) e^{r_y} / sum_k F(k) e^{r_k} )
// with region logits r = head(pooled feature). Zero priors follow
// `policy`. Throws PreconditionError on an empty batch, a negative prior,
// or a region whose class has a dropped prior.
RegionLossResult region_loss(const RegionBatch& regions, const LinearHead& head,
                             std::span<const double> region_priors,
                             ZeroPriorPolicy policy = ZeroPriorPolicy::kDrop,
                             double epsilon = 1e-12);

enum class Variant { kPixelCe, kReweight, kBalancedPixel, kRegionRebalance };

std::string to_string(Variant v);
// Accepts pixel_ce / baseline, reweight, balanced_pixel, region_rebalance.
Variant parse_variant(const std::string& name);

enum class PriorSource { kPixel, kRegion };

struct LossConfig {
  Variant variant = Variant::kPixelCe;
  double lambda = 0.3;
  // balanced_pixel: per-class prior (pixel or region counts, per
  // `prior_source`); reweight: class weights; region_rebalance: region
  // frequencies F. Empty means "derive from the training split".
  std::vector<double> priors;
  PriorSource prior_source = PriorSource::kPixel;
  ZeroPriorPolicy zero_prior = ZeroPriorPolicy::kDrop;
  Label ignore_label = kIgnoreLabel;
  double epsilon = 1e-12;
};

// Validates the invariants of LossConfig (lambda >= 0, priors usable for
// the variant). Throws ConfigError.
void validate(const LossConfig& cfg, int num_classes);

struct BranchResult {
  double loss = 0.0;
  Matrix feature_grad;
};

// L_pixel + lambda * L_region, with feature gradients combined the same
// way. Throws PreconditionError on lambda < 0 or mismatched shapes.
BranchResult combined_loss(const BranchResult& pixel,
                           const BranchResult& region, double lambda);

// Full training objective over shared pixel features: the pixel head
// always sees every pixel; the region head only exists for
// region_rebalance and is never needed at inference time.
struct ObjectiveResult {
  double loss = 0.0;
  double pixel_loss = 0.0;
  double region_loss = 0.0;
  Matrix feature_grad;
  LinearHead pixel_head_grad;
  LinearHead region_head_grad;  // zero unless variant is region_rebalance
};

ObjectiveResult evaluate_objective(const Matrix& features,
                                   std::span<const SegMap> gt,
                                   const LinearHead& pixel_head,
                                   const LinearHead& region_head,
                                   const LossConfig& cfg);

}  // namespace rrseg::losses

#endif  // RRSEG_LOSSES_HPP_
