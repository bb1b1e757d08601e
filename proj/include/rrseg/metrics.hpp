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

#ifndef RRSEG_METRICS_HPP_
#define RRSEG_METRICS_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rrseg/common.hpp"

namespace rrseg::metrics {

// C x C pixel counts. Rows index the ground-truth class, columns the
// predicted class. Pixels whose ground truth is the ignore label land in
// ignored_pixels() and in no cell.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes, Label ignore_label = kIgnoreLabel);

  int num_classes() const { return num_classes_; }
  Label ignore_label() const { return ignore_label_; }
  std::uint64_t ignored_pixels() const { return ignored_; }

  std::uint64_t at(int gt, int pred) const {
    return counts_[static_cast<std::size_t>(gt) * num_classes_ + pred];
  }
  std::uint64_t& at(int gt, int pred) {
    return counts_[static_cast<std::size_t>(gt) * num_classes_ + pred];
  }
  std::uint64_t total() const;

  // Adds one count per non-ignored pixel at [gt][pred]. Throws DataError on
  // a shape mismatch or on a label outside [0, C) that is not the ignore
  // label; the matrix is left untouched in that case.
  void accumulate(const SegMap& gt, const SegMap& pred);

  // Entrywise sum. Both matrices must agree on C and the ignore label.
  void merge(const ConfusionMatrix& other);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int num_classes_;
  Label ignore_label_;
  std::uint64_t ignored_ = 0;
  std::vector<std::uint64_t> counts_;
};

// Value-returning form of ConfusionMatrix::accumulate.
ConfusionMatrix accumulate(ConfusionMatrix cm, const SegMap& gt,
                           const SegMap& pred);

// Accumulates disjoint shards on up to `threads` workers, then merges.
// The result is identical to a sequential pass.
ConfusionMatrix accumulate_all(int num_classes, std::span<const SegMap> gts,
                               std::span<const SegMap> preds,
                               unsigned threads = 1,
                               Label ignore_label = kIgnoreLabel);

struct ClassCounts {
  std::uint64_t tp = 0;
  std::uint64_t fn = 0;
  std::uint64_t fp = 0;

  std::uint64_t gt_pixels() const { return tp + fn; }
  bool operator==(const ClassCounts&) const = default;
};

ClassCounts class_counts(const ConfusionMatrix& cm, int cls);

// nullopt signals an absent class (zero denominator).
std::optional<double> iou(const ClassCounts& c);
std::optional<double> acc(const ClassCounts& c);

// Per-class metrics of one evaluated model. Classes that never occur in
// the ground truth are marked invalid, carry zeros, and are left out of
// the means.
struct EvalReport {
  std::vector<ClassCounts> counts;
  std::vector<double> per_class_iou;
  std::vector<double> per_class_acc;
  std::vector<bool> valid;
  double miou = 0.0;
  double macc = 0.0;

  int num_classes() const { return static_cast<int>(valid.size()); }
  bool operator==(const EvalReport&) const = default;
};

EvalReport make_report(const ConfusionMatrix& cm);

// Builds a report from per-class counts alone (e.g. counts read back from
// a CSV report).
EvalReport make_report(std::vector<ClassCounts> counts);

// Mean IoU / Acc over a subset of classes, restricted to valid ones.
// Returns nullopt when no listed class is valid.
std::optional<double> mean_iou_over(const EvalReport& r,
                                    std::span<const int> classes);
std::optional<double> mean_acc_over(const EvalReport& r,
                                    std::span<const int> classes);

// Rebalance diagnostic for a single class: the class went from `before`
// to `after` counts on the same ground truth, with accuracy scaled by
// (1 + k_factor).
struct RebalanceScenario {
  ClassCounts before;
  ClassCounts after;
  double k_factor = 0.0;
};

// Derives K = Acc_after / Acc_before - 1 from the counts. Requires
// before.tp > 0 and equal ground-truth pixel totals.
RebalanceScenario make_scenario(const ClassCounts& before,
                                const ClassCounts& after);

struct FpBudgetResult {
  bool condition_holds = false;  // FP_after - (1+K) FP_before <= K n_y
  bool iou_improved = false;     // IoU_after >= IoU_before
  double margin = 0.0;           // K n_y - (FP_after - (1+K) FP_before)
};

// Evaluates the IoU-improvement condition for an accuracy gain of factor
// (1 + K). Both booleans come from exact integer arithmetic on the counts;
// `margin` is reported in floating point from the supplied K.
//
// Throws PreconditionError when K < 0, when before.tp == 0, when the two
// count sets disagree on n_y = tp + fn, or when Acc_after deviates from
// (1 + K) Acc_before by more than 1e-9 relative.
FpBudgetResult fp_budget_check(const RebalanceScenario& s);

struct DeltaReport {
  std::vector<int> order;  // class indices, display order
  std::vector<double> delta_iou;  // indexed by position in `order`
  std::vector<double> delta_acc;
};

// Per-class rebalanced - baseline differences for IoU and Acc. With
// `pixel_freq` the classes are listed by descending pixel count (ties by
// index); otherwise in index order.
DeltaReport delta_report(const EvalReport& baseline,
                         const EvalReport& rebalanced,
                         std::span<const std::uint64_t> pixel_freq = {});

struct SweepPoint {
  double b = 0.0;    // FP / TP
  double acc = 0.0;
  double iou = 0.0;  // 1 / (1 / acc + b)
};

// IoU as a function of Acc at fixed FP/TP ratios b, one point per
// (b, acc) pair, b-major.
std::vector<SweepPoint> fp_tp_sweep(std::span<const double> b_values,
                                    std::span<const double> acc_grid);

// Evenly spaced accuracy grid (1/steps, 2/steps, ..., 1).
std::vector<double> acc_grid(int steps);

}  // namespace rrseg::metrics

#endif  // RRSEG_METRICS_HPP_
