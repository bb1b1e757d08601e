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

#include "rrseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>

namespace rrseg::metrics {

ConfusionMatrix::ConfusionMatrix(int num_classes, Label ignore_label)
    : num_classes_(num_classes), ignore_label_(ignore_label) {
  if (num_classes <= 0) {
    throw PreconditionError("confusion matrix needs at least one class");
  }
  if (ignore_label < num_classes) {
    throw PreconditionError("ignore label collides with a class index");
  }
  counts_.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::accumulate(const SegMap& gt, const SegMap& pred) {
  if (gt.height != pred.height || gt.width != pred.width ||
      gt.size() != pred.size()) {
    throw DataError("shape mismatch: gt " + std::to_string(gt.height) + "x" +
                    std::to_string(gt.width) + " vs pred " +
                    std::to_string(pred.height) + "x" +
                    std::to_string(pred.width));
  }
  // Validate first so a bad map never leaves a half-applied update.
  auto check = [&](const SegMap& m, const char* what, std::size_t i,
                   bool allow_ignore) {
    const Label l = m.labels[i];
    if (l < num_classes_ || (allow_ignore && l == ignore_label_)) return;
    throw DataError(std::string("label ") + std::to_string(l) + " out of range in " +
                    what + " at (row " + std::to_string(i / m.width) +
                    ", col " + std::to_string(i % m.width) + ")");
  };
  for (std::size_t i = 0; i < gt.size(); ++i) {
    check(gt, "ground truth", i, true);
    if (gt.labels[i] != ignore_label_) check(pred, "prediction", i, false);
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Label g = gt.labels[i];
    if (g == ignore_label_) {
      ++ignored_;
      continue;
    }
    ++at(g, pred.labels[i]);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_ ||
      other.ignore_label_ != ignore_label_) {
    throw PreconditionError("cannot merge confusion matrices of different shape");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  ignored_ += other.ignored_;
}

ConfusionMatrix accumulate(ConfusionMatrix cm, const SegMap& gt,
                           const SegMap& pred) {
  cm.accumulate(gt, pred);
  return cm;
}

ConfusionMatrix accumulate_all(int num_classes, std::span<const SegMap> gts,
                               std::span<const SegMap> preds, unsigned threads,
                               Label ignore_label) {
  if (gts.size() != preds.size()) {
    throw DataError("ground truth and prediction lists differ in length");
  }
  const std::size_t n = gts.size();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  std::vector<ConfusionMatrix> shards(threads,
                                      ConfusionMatrix(num_classes, ignore_label));
  auto work = [&](unsigned t) {
    const std::size_t lo = n * t / threads;
    const std::size_t hi = n * (t + 1) / threads;
    for (std::size_t i = lo; i < hi; ++i) shards[t].accumulate(gts[i], preds[i]);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  ConfusionMatrix out(num_classes, ignore_label);
  for (const auto& s : shards) out.merge(s);
  return out;
}

ClassCounts class_counts(const ConfusionMatrix& cm, int cls) {
  const int c = cm.num_classes();
  if (cls < 0 || cls >= c) {
    throw PreconditionError("class index " + std::to_string(cls) +
                            " out of range [0, " + std::to_string(c) + ")");
  }
  ClassCounts out;
  out.tp = cm.at(cls, cls);
  for (int k = 0; k < c; ++k) {
    if (k == cls) continue;
    out.fn += cm.at(cls, k);
    out.fp += cm.at(k, cls);
  }
  return out;
}

std::optional<double> iou(const ClassCounts& c) {
  const std::uint64_t denom = c.tp + c.fn + c.fp;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

std::optional<double> acc(const ClassCounts& c) {
  const std::uint64_t denom = c.tp + c.fn;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

EvalReport make_report(std::vector<ClassCounts> counts) {
  EvalReport r;
  const std::size_t c = counts.size();
  r.per_class_iou.assign(c, 0.0);
  r.per_class_acc.assign(c, 0.0);
  r.valid.assign(c, false);
  double iou_sum = 0.0, acc_sum = 0.0;
  std::size_t n_valid = 0;
  for (std::size_t k = 0; k < c; ++k) {
    if (counts[k].gt_pixels() == 0) continue;
    r.valid[k] = true;
    r.per_class_iou[k] = *iou(counts[k]);
    r.per_class_acc[k] = *acc(counts[k]);
    iou_sum += r.per_class_iou[k];
    acc_sum += r.per_class_acc[k];
    ++n_valid;
  }
  if (n_valid > 0) {
    r.miou = iou_sum / static_cast<double>(n_valid);
    r.macc = acc_sum / static_cast<double>(n_valid);
  }
  r.counts = std::move(counts);
  return r;
}

EvalReport make_report(const ConfusionMatrix& cm) {
  std::vector<ClassCounts> counts;
  counts.reserve(cm.num_classes());
  for (int k = 0; k < cm.num_classes(); ++k) counts.push_back(class_counts(cm, k));
  return make_report(std::move(counts));
}

namespace {

std::optional<double> mean_over(const EvalReport& r,
                                const std::vector<double>& values,
                                std::span<const int> classes) {
  double sum = 0.0;
  int n = 0;
  for (int k : classes) {
    if (k < 0 || k >= r.num_classes()) {
      throw PreconditionError("class index out of range");
    }
    if (!r.valid[k]) continue;
    sum += values[k];
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

std::optional<double> mean_iou_over(const EvalReport& r,
                                    std::span<const int> classes) {
  return mean_over(r, r.per_class_iou, classes);
}

std::optional<double> mean_acc_over(const EvalReport& r,
                                    std::span<const int> classes) {
  return mean_over(r, r.per_class_acc, classes);
}

RebalanceScenario make_scenario(const ClassCounts& before,
                                const ClassCounts& after) {
  if (before.tp == 0) {
    throw PreconditionError("baseline accuracy is zero; K is undefined");
  }
  if (before.gt_pixels() != after.gt_pixels()) {
    throw PreconditionError("scenarios must share the ground truth (n_y differs)");
  }
  RebalanceScenario s{before, after, 0.0};
  s.k_factor = static_cast<double>(after.tp) / static_cast<double>(before.tp) - 1.0;
  return s;
}

FpBudgetResult fp_budget_check(const RebalanceScenario& s) {
  const ClassCounts& b = s.before;
  const ClassCounts& a = s.after;
  const double k = s.k_factor;
  if (!(k >= 0.0)) throw PreconditionError("K must be non-negative");
  if (b.tp == 0) throw PreconditionError("baseline accuracy is zero");
  const std::uint64_t n = b.gt_pixels();
  if (a.gt_pixels() != n) {
    throw PreconditionError("scenarios must share the ground truth (n_y differs)");
  }
  const double acc_b = *acc(b);
  const double acc_a = *acc(a);
  const double expected = (1.0 + k) * acc_b;
  if (std::abs(acc_a - expected) > 1e-9 * expected) {
    throw PreconditionError("Acc_after is inconsistent with (1 + K) * Acc_before");
  }

  // With a shared n_y the premise pins K = tp_a / tp_b - 1 exactly, so
  // multiplying the condition through by tp_b gives an integer inequality:
  //   fp_a * tp_b - tp_a * fp_b <= (tp_a - tp_b) * n
  using i128 = __int128;
  const i128 tp_a = a.tp, tp_b = b.tp, fp_a = a.fp, fp_b = b.fp, nn = n;
  FpBudgetResult r;
  r.condition_holds = fp_a * tp_b - tp_a * fp_b <= (tp_a - tp_b) * nn;
  // IoU_a >= IoU_b  <=>  tp_a (n + fp_b) >= tp_b (n + fp_a)
  r.iou_improved = tp_a * (nn + fp_b) >= tp_b * (nn + fp_a);
  r.margin = k * static_cast<double>(n) -
             (static_cast<double>(a.fp) - (1.0 + k) * static_cast<double>(b.fp));
  return r;
}

DeltaReport delta_report(const EvalReport& baseline, const EvalReport& rebalanced,
                         std::span<const std::uint64_t> pixel_freq) {
  const int c = baseline.num_classes();
  if (rebalanced.num_classes() != c) {
    throw PreconditionError("reports differ in class count");
  }
  if (baseline.valid != rebalanced.valid) {
    throw PreconditionError("reports differ in valid-class masks");
  }
  if (!pixel_freq.empty() && pixel_freq.size() != static_cast<std::size_t>(c)) {
    throw PreconditionError("frequency table does not match the class count");
  }
  DeltaReport d;
  d.order.resize(c);
  std::iota(d.order.begin(), d.order.end(), 0);
  if (!pixel_freq.empty()) {
    std::stable_sort(d.order.begin(), d.order.end(), [&](int x, int y) {
      return pixel_freq[x] > pixel_freq[y];
    });
  }
  for (int k : d.order) {
    d.delta_iou.push_back(rebalanced.per_class_iou[k] - baseline.per_class_iou[k]);
    d.delta_acc.push_back(rebalanced.per_class_acc[k] - baseline.per_class_acc[k]);
  }
  return d;
}

std::vector<SweepPoint> fp_tp_sweep(std::span<const double> b_values,
                                    std::span<const double> acc_grid) {
  for (double a : acc_grid) {
    if (!(a > 0.0) || a > 1.0) {
      throw PreconditionError("accuracy grid values must lie in (0, 1]");
    }
  }
  for (double b : b_values) {
    if (!(b >= 0.0) || !std::isfinite(b)) {
      throw PreconditionError("FP/TP ratios must be finite and non-negative");
    }
  }
  std::vector<SweepPoint> out;
  out.reserve(b_values.size() * acc_grid.size());
  for (double b : b_values) {
    // acc / (1 + acc b) == 1 / (1/acc + b), and exact at b = 0.
    for (double a : acc_grid) out.push_back({b, a, a / (1.0 + a * b)});
  }
  return out;
}

std::vector<double> acc_grid(int steps) {
  if (steps <= 0) throw PreconditionError("accuracy grid needs at least one step");
  std::vector<double> g(steps);
  for (int i = 0; i < steps; ++i) g[i] = static_cast<double>(i + 1) / steps;
  return g;
}

}  // namespace rrseg::metrics
