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

#ifndef RRSEG_MODEL_HPP_
#define RRSEG_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "rrseg/common.hpp"
#include "rrseg/dataset.hpp"
#include "rrseg/losses.hpp"
#include "rrseg/metrics.hpp"
#include "rrseg/stats.hpp"

namespace rrseg::model {

// Per-pixel two-layer perceptron. `region_head` is an auxiliary training
// branch; nothing on the inference path reads it.
struct PixelClassifier {
  losses::LinearHead hidden;       // D_in x D_h, followed by ReLU
  losses::LinearHead output;       // D_h x C
  losses::LinearHead region_head;  // D_h x C
  bool mean_filter = false;        // append 3x3 neighbourhood means to the input

  int input_dim() const { return hidden.in_dim(); }
  int hidden_dim() const { return hidden.num_classes(); }
  int num_classes() const { return output.num_classes(); }

  // Glorot-uniform weights, zero biases, drawn in declaration order.
  static PixelClassifier init(int input_dim, int hidden_dim, int num_classes,
                              bool mean_filter, std::uint64_t seed);

  Matrix hidden_features(const Matrix& inputs) const;
  Matrix logits(const Matrix& inputs) const;
  // Argmax over pixel logits; ties go to the lower class index.
  SegMap predict(const FeatureImage& image) const;

  bool operator==(const PixelClassifier& o) const;
};

// Input rows for one image: the raw features, plus their 3x3 means
// (clipped at the border) when `mean_filter` is set.
Matrix pixel_inputs(const FeatureImage& image, bool mean_filter);
int input_dim(int feature_dim, bool mean_filter);

struct TrainConfig {
  double lr0 = 1e-2;
  double power = 0.9;
  int total_iters = 1000;
  int batch_size = 8;
  std::uint64_t seed = 0;
  losses::LossConfig loss;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  int hidden_dim = 32;
  bool mean_filter = true;
  double val_fraction = 0.2;
  // Seeds the train/val split; kept apart from `seed` so several training
  // seeds can share one validation set.
  std::uint64_t split_seed = 0;
};

// Throws ConfigError on invalid settings.
void validate(const TrainConfig& cfg);

// lr0 * (1 - iter / total_iters)^power.
double poly_lr(int iter, const TrainConfig& cfg);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Deterministic shuffle-and-cut; both parts sorted ascending.
Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed);

// Fills empty cfg.priors from the training-split statistics: pixel (or
// region) counts for balanced_pixel, inverse-pixel-frequency weights for
// reweight, region counts for region_rebalance.
losses::LossConfig resolve_priors(const losses::LossConfig& cfg,
                                  const stats::FrequencyTable& train_table);

struct TrainResult {
  PixelClassifier model;
  std::vector<double> loss_curve;
  metrics::EvalReport report;  // on the validation split
  stats::FrequencyTable train_table;
  Split split;
};

// SGD with momentum, poly schedule and weight decay. Throws NumericError
// if the loss becomes non-finite.
TrainResult train(const data::Dataset& ds, const TrainConfig& cfg);

// One optimizer-free step helper: objective value and parameter gradients
// for a batch of images.
struct BatchGradients {
  losses::ObjectiveResult objective;
  losses::LinearHead hidden_grad;
};
BatchGradients batch_gradients(const PixelClassifier& model,
                               std::span<const FeatureImage> images,
                               std::span<const SegMap> labels,
                               const losses::LossConfig& loss);

// Confusion matrix of the model's predictions on the listed images (all
// images when `indices` is empty). Throws PreconditionError if nothing
// is evaluated.
metrics::ConfusionMatrix confusion(const PixelClassifier& model,
                                   const data::Dataset& ds,
                                   std::span<const std::size_t> indices = {},
                                   unsigned threads = 1);
metrics::EvalReport evaluate(const PixelClassifier& model, const data::Dataset& ds,
                             std::span<const std::size_t> indices = {},
                             unsigned threads = 1);

// Checkpoint: "RRSEGCKP", u32 version, u32 input_dim, hidden_dim,
// num_classes, mean_filter, then little-endian float64 blocks hidden.W,
// hidden.b, output.W, output.b, region.W, region.b (row-major).
void save_checkpoint(const std::filesystem::path& path, const PixelClassifier& m);
PixelClassifier load_checkpoint(const std::filesystem::path& path);

}  // namespace rrseg::model

#endif  // RRSEG_MODEL_HPP_
