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

#include "rrseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rrseg::losses {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_targets(const Matrix& logits, std::span<const Label> targets,
                   Label ignore_label) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw PreconditionError("targets do not match the number of logit rows");
  }
  const auto c = logits.cols();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] != ignore_label && targets[i] >= c) {
      throw PreconditionError("target " + std::to_string(targets[i]) +
                              " at row " + std::to_string(i) +
                              " is out of range");
    }
  }
}

// Weighted cross-entropy on logits + shift, where shift[k] = -inf removes
// class k from the normalizer. Empty `shift`/`weights` mean zero / one.
LossResult shifted_ce(const Matrix& logits, std::span<const Label> targets,
                      std::span<const double> shift,
                      std::span<const double> weights, Label ignore_label) {
  check_targets(logits, targets, ignore_label);
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();
  LossResult out;
  out.grad = Matrix::Zero(n, c);
  std::vector<double> z(c), p(c);
  double total_weight = 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Label t = targets[i];
    if (t == ignore_label) continue;
    double m = kNegInf;
    for (Eigen::Index k = 0; k < c; ++k) {
      z[k] = logits(i, k) + (shift.empty() ? 0.0 : shift[k]);
      m = std::max(m, z[k]);
    }
    if (z[t] == kNegInf) {
      throw PreconditionError("target class " + std::to_string(t) +
                              " has a zero prior");
    }
    double s = 0.0;
    for (Eigen::Index k = 0; k < c; ++k) {
      p[k] = std::exp(z[k] - m);
      s += p[k];
    }
    const double lse = m + std::log(s);
    const double w = weights.empty() ? 1.0 : weights[t];
    total += w * (lse - z[t]);
    total_weight += w;
    for (Eigen::Index k = 0; k < c; ++k) out.grad(i, k) = w * p[k] / s;
    out.grad(i, t) -= w;
  }
  if (total_weight == 0.0) {
    throw PreconditionError("every target is ignored");
  }
  out.loss = total / total_weight;
  out.grad /= total_weight;
  return out;
}

std::vector<double> log_priors(std::span<const double> priors, Eigen::Index c,
                               ZeroPriorPolicy policy, double epsilon,
                               bool allow_zero) {
  if (static_cast<Eigen::Index>(priors.size()) != c) {
    throw PreconditionError("prior vector does not match the class count");
  }
  std::vector<double> shift(c);
  for (Eigen::Index k = 0; k < c; ++k) {
    const double p = priors[k];
    if (!std::isfinite(p) || p < 0.0 || (!allow_zero && p == 0.0)) {
      throw PreconditionError("prior for class " + std::to_string(k) +
                              " must be positive");
    }
    if (p == 0.0 && policy == ZeroPriorPolicy::kDrop) {
      shift[k] = kNegInf;
    } else {
      shift[k] = std::log(std::max(p, epsilon));
    }
  }
  return shift;
}

}  // namespace

LossResult softmax_ce(const Matrix& logits, std::span<const Label> targets,
                      Label ignore_label) {
  return shifted_ce(logits, targets, {}, {}, ignore_label);
}

LossResult balanced_softmax_ce(const Matrix& logits,
                               std::span<const Label> targets,
                               std::span<const double> priors,
                               Label ignore_label) {
  const auto shift = log_priors(priors, logits.cols(), ZeroPriorPolicy::kDrop,
                                0.0, /*allow_zero=*/false);
  return shifted_ce(logits, targets, shift, {}, ignore_label);
}

LossResult reweighted_ce(const Matrix& logits, std::span<const Label> targets,
                         std::span<const double> weights, Label ignore_label) {
  if (static_cast<Eigen::Index>(weights.size()) != logits.cols()) {
    throw PreconditionError("weight vector does not match the class count");
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw PreconditionError("class weights must be positive");
    }
  }
  return shifted_ce(logits, targets, {}, weights, ignore_label);
}

std::vector<double> inverse_frequency_weights(
    std::span<const std::uint64_t> counts) {
  std::vector<double> w(counts.size(), 0.0);
  double sum = 0.0, top = 0.0;
  int populated = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) continue;
    w[k] = 1.0 / static_cast<double>(counts[k]);
    sum += w[k];
    top = std::max(top, w[k]);
    ++populated;
  }
  if (populated == 0) {
    throw PreconditionError("no populated class to derive weights from");
  }
  const double mean = sum / populated;
  for (double& x : w) x = (x == 0.0 ? top : x) / mean;
  return w;
}

FeatureBatch::FeatureBatch(int b, int h, int w, int dim)
    : batch(b),
      height(h),
      width(w),
      values(Matrix::Zero(static_cast<Eigen::Index>(b) * h * w, dim)),
      grad(Matrix::Zero(static_cast<Eigen::Index>(b) * h * w, dim)) {}

RegionBatch region_pool(const Matrix& pixel_features,
                        std::span<const SegMap> gt, int num_classes,
                        Label ignore_label) {
  Eigen::Index expected = 0;
  for (const auto& m : gt) expected += static_cast<Eigen::Index>(m.size());
  if (expected != pixel_features.rows()) {
    throw DataError("ground truth covers " + std::to_string(expected) +
                    " pixels but the feature matrix has " +
                    std::to_string(pixel_features.rows()) + " rows");
  }
  const Eigen::Index d = pixel_features.cols();
  RegionBatch out;
  std::vector<std::vector<Eigen::Index>> by_class(num_classes);
  std::vector<Matrix> means;
  Eigen::Index offset = 0;
  for (std::size_t img = 0; img < gt.size(); ++img) {
    for (auto& v : by_class) v.clear();
    const SegMap& m = gt[img];
    for (std::size_t p = 0; p < m.size(); ++p) {
      const Label l = m.labels[p];
      if (l == ignore_label) continue;
      if (l >= num_classes) {
        throw DataError("label " + std::to_string(l) + " out of range in image " +
                        std::to_string(img));
      }
      by_class[l].push_back(offset + static_cast<Eigen::Index>(p));
    }
    for (int k = 0; k < num_classes; ++k) {
      if (by_class[k].empty()) continue;
      out.labels.push_back(static_cast<Label>(k));
      out.image.push_back(static_cast<int>(img));
      out.members.push_back(by_class[k]);
    }
    offset += static_cast<Eigen::Index>(m.size());
  }
  out.features = Matrix::Zero(out.size(), d);
  for (int r = 0; r < out.size(); ++r) {
    auto row = out.features.row(r);
    for (Eigen::Index idx : out.members[r]) row += pixel_features.row(idx);
    row /= static_cast<double>(out.members[r].size());
  }
  return out;
}

RegionBatch region_pool(const FeatureBatch& features,
                        std::span<const SegMap> gt, int num_classes,
                        Label ignore_label) {
  return region_pool(features.values, gt, num_classes, ignore_label);
}

void region_pool_backward(const RegionBatch& regions, const Matrix& region_grad,
                          Matrix& pixel_grad) {
  if (region_grad.rows() != regions.size() ||
      region_grad.cols() != pixel_grad.cols()) {
    throw PreconditionError("region gradient has the wrong shape");
  }
  for (int r = 0; r < regions.size(); ++r) {
    const double inv = 1.0 / static_cast<double>(regions.members[r].size());
    for (Eigen::Index idx : regions.members[r]) {
      pixel_grad.row(idx) += inv * region_grad.row(r);
    }
  }
}

Matrix LinearHead::forward(const Matrix& features) const {
  Matrix out = features * weight;
  out.rowwise() += bias.transpose();
  return out;
}

RegionLossResult region_loss(const RegionBatch& regions, const LinearHead& head,
                             std::span<const double> region_priors,
                             ZeroPriorPolicy policy, double epsilon) {
  if (regions.size() == 0) throw PreconditionError("empty region batch");
  const Matrix logits = head.forward(regions.features);
  const auto shift = log_priors(region_priors, logits.cols(), policy, epsilon,
                                /*allow_zero=*/true);
  const LossResult ce = shifted_ce(logits, regions.labels, shift, {},
                                   kIgnoreLabel);
  RegionLossResult out;
  out.loss = ce.loss;
  out.grad_weight = regions.features.transpose() * ce.grad;
  out.grad_bias = ce.grad.colwise().sum().transpose();
  out.grad_features = ce.grad * head.weight.transpose();
  return out;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kPixelCe: return "pixel_ce";
    case Variant::kReweight: return "reweight";
    case Variant::kBalancedPixel: return "balanced_pixel";
    case Variant::kRegionRebalance: return "region_rebalance";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  if (name == "pixel_ce" || name == "baseline") return Variant::kPixelCe;
  if (name == "reweight") return Variant::kReweight;
  if (name == "balanced_pixel") return Variant::kBalancedPixel;
  if (name == "region_rebalance") return Variant::kRegionRebalance;
  throw ConfigError("unknown loss variant '" + name + "'");
}

void validate(const LossConfig& cfg, int num_classes) {
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) {
    throw ConfigError("lambda must be a finite non-negative number");
  }
  if (!(cfg.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (cfg.priors.empty()) return;
  if (static_cast<int>(cfg.priors.size()) != num_classes) {
    throw ConfigError("priors list has " + std::to_string(cfg.priors.size()) +
                      " entries, expected " + std::to_string(num_classes));
  }
  const bool zero_ok = cfg.variant == Variant::kRegionRebalance;
  for (double p : cfg.priors) {
    if (!std::isfinite(p) || p < 0.0 || (p == 0.0 && !zero_ok)) {
      throw ConfigError("priors must be positive for " + to_string(cfg.variant));
    }
  }
}

BranchResult combined_loss(const BranchResult& pixel, const BranchResult& region,
                           double lambda) {
  if (!(lambda >= 0.0)) throw PreconditionError("lambda must be non-negative");
  if (pixel.feature_grad.rows() != region.feature_grad.rows() ||
      pixel.feature_grad.cols() != region.feature_grad.cols()) {
    throw PreconditionError("branch gradients differ in shape");
  }
  BranchResult out;
  out.loss = pixel.loss + lambda * region.loss;
  out.feature_grad = pixel.feature_grad + lambda * region.feature_grad;
  return out;
}

ObjectiveResult evaluate_objective(const Matrix& features,
                                   std::span<const SegMap> gt,
                                   const LinearHead& pixel_head,
                                   const LinearHead& region_head,
                                   const LossConfig& cfg) {
  const int c = pixel_head.num_classes();
  if (features.cols() != pixel_head.in_dim()) {
    throw PreconditionError("pixel head input width does not match features");
  }
  std::vector<Label> targets;
  targets.reserve(features.rows());
  for (const auto& m : gt) targets.insert(targets.end(), m.labels.begin(), m.labels.end());
  if (static_cast<Eigen::Index>(targets.size()) != features.rows()) {
    throw DataError("ground truth does not cover the feature rows");
  }

  const Matrix logits = pixel_head.forward(features);
  LossResult pixel;
  switch (cfg.variant) {
    case Variant::kPixelCe:
    case Variant::kRegionRebalance:
      pixel = softmax_ce(logits, targets, cfg.ignore_label);
      break;
    case Variant::kReweight:
      if (cfg.priors.empty()) throw PreconditionError("reweight needs class weights");
      pixel = reweighted_ce(logits, targets, cfg.priors, cfg.ignore_label);
      break;
    case Variant::kBalancedPixel:
      if (cfg.priors.empty()) throw PreconditionError("balanced_pixel needs priors");
      pixel = balanced_softmax_ce(logits, targets, cfg.priors, cfg.ignore_label);
      break;
  }

  ObjectiveResult out;
  out.pixel_loss = pixel.loss;
  out.pixel_head_grad.weight = features.transpose() * pixel.grad;
  out.pixel_head_grad.bias = pixel.grad.colwise().sum().transpose();
  out.region_head_grad = LinearHead(region_head.in_dim(), region_head.num_classes());
  BranchResult pixel_branch{pixel.loss, pixel.grad * pixel_head.weight.transpose()};

  if (cfg.variant != Variant::kRegionRebalance) {
    out.loss = pixel_branch.loss;
    out.feature_grad = std::move(pixel_branch.feature_grad);
    return out;
  }

  if (cfg.priors.empty()) throw PreconditionError("region_rebalance needs region priors");
  if (region_head.in_dim() != features.cols() || region_head.num_classes() != c) {
    throw PreconditionError("region head shape does not match the pixel head");
  }
  const RegionBatch regions = region_pool(features, gt, c, cfg.ignore_label);
  const RegionLossResult reg =
      region_loss(regions, region_head, cfg.priors, cfg.zero_prior, cfg.epsilon);
  BranchResult region_branch{reg.loss, Matrix::Zero(features.rows(), features.cols())};
  region_pool_backward(regions, reg.grad_features, region_branch.feature_grad);

  BranchResult total = combined_loss(pixel_branch, region_branch, cfg.lambda);
  out.loss = total.loss;
  out.region_loss = reg.loss;
  out.feature_grad = std::move(total.feature_grad);
  out.region_head_grad.weight = cfg.lambda * reg.grad_weight;
  out.region_head_grad.bias = cfg.lambda * reg.grad_bias;
  return out;
}

}  // namespace rrseg::losses
