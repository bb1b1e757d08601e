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

#ifndef RRSEG_EXPERIMENT_HPP_
#define RRSEG_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rrseg/config.hpp"
#include "rrseg/dataset.hpp"
#include "rrseg/metrics.hpp"
#include "rrseg/model.hpp"
#include "rrseg/stats.hpp"

namespace rrseg::experiment {

// One training configuration, repeated over every seed.
struct RunSpec {
  std::string label;  // file-name safe
  losses::Variant variant = losses::Variant::kPixelCe;
  double lambda = 0.0;
  bool operator==(const RunSpec&) const = default;
};

// Runs implied by the config: one per variant, or in lambda-grid mode the
// baseline followed by region_rebalance at each lambda.
std::vector<RunSpec> plan_runs(const config::ExperimentConfig& cfg);

struct RunResult {
  RunSpec spec;
  std::uint64_t seed = 0;
  metrics::EvalReport report;
  std::vector<double> loss_curve;
};

struct Summary {
  RunSpec spec;
  double miou = 0.0, macc = 0.0;            // means over seeds
  double tail_miou = 0.0, tail_macc = 0.0;  // means over seeds
  metrics::EvalReport pooled;               // counts summed over seeds
};

// Per-class outcome of the improvement condition, pooled counts of the
// baseline (before) against a rebalanced run (after).
enum class FpBudgetStatus {
  kBaselineZeroAcc,  // before.tp == 0: K undefined
  kAccDecreased,     // K < 0: outside the condition's premise
  kHolds,
  kViolation,
};
std::string to_string(FpBudgetStatus s);

struct FpBudgetRow {
  int cls = 0;
  metrics::ClassCounts before, after;
  double k_factor = 0.0;
  double margin = 0.0;
  bool iou_improved = false;
  FpBudgetStatus status = FpBudgetStatus::kHolds;
};

std::vector<FpBudgetRow> fp_budget_rows(const metrics::EvalReport& baseline,
                                     const metrics::EvalReport& rebalanced,
                                     std::span<const int> classes);

// Directional outcome of the four-variant comparison.
struct DirectionalCheck {
  double tail_macc_gain_balanced = 0.0;  // tail mAcc(balanced) - tail mAcc(baseline)
  double tail_dmiou_balanced = 0.0;      // tail mIoU(balanced) - tail mIoU(baseline)
  double tail_dmiou_region = 0.0;        // tail mIoU(region) - tail mIoU(baseline)
  double miou_baseline = 0.0, miou_region = 0.0;
  std::vector<int> balanced_violations;  // tail classes
  std::vector<int> region_violations;    // of those same classes
  bool a = false, b = false, c = false;
  bool passed() const { return a && b && c; }
};

struct ExperimentResult {
  stats::FrequencyTable frequencies;  // whole dataset
  std::vector<int> tail;
  std::vector<RunResult> runs;  // plan order, seeds inner
  std::vector<Summary> summaries;
  // Present when baseline, balanced_pixel and region_rebalance all ran.
  std::optional<DirectionalCheck> directional;
};

// Trains every planned run on `ds`. With parallel > 1, runs are spread
// over that many threads; results do not depend on it.
ExperimentResult run_experiment(const config::ExperimentConfig& cfg, const data::Dataset& ds,
                                unsigned parallel = 1);

// Writes the result tree into `dir` (created if needed):
//   config.txt, frequencies.txt, summary.csv, directional.csv,
//   lambda_ablation.csv (grid mode), reports/<label>_seed<s>.csv,
//   losses/<label>_seed<s>.csv, compare_pooled_<label>.csv,
//   fp_budget_<label>.csv
// Byte-deterministic in (cfg, dataset).
void write_outputs(const std::filesystem::path& dir, const config::ExperimentConfig& cfg,
                   const data::Dataset& ds, const ExperimentResult& result);

}  // namespace rrseg::experiment

#endif  // RRSEG_EXPERIMENT_HPP_
