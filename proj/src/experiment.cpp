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

#include "rrseg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "rrseg/report_io.hpp"

namespace rrseg::experiment {

namespace {

std::string lambda_tag(double lam) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", lam);
  return buf;
}

const Summary* find(const std::vector<Summary>& s, losses::Variant v) {
  for (const auto& x : s) {
    if (x.spec.variant == v) return &x;
  }
  return nullptr;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

double tail_or_zero(std::optional<double> v) { return v.value_or(0.0); }

}  // namespace

std::vector<RunSpec> plan_runs(const config::ExperimentConfig& cfg) {
  const double lam = cfg.train.loss.lambda;
  std::vector<RunSpec> out;
  if (!cfg.lambda_grid.empty()) {
    out.push_back({"pixel_ce", losses::Variant::kPixelCe, 0.0});
    for (double g : cfg.lambda_grid) {
      out.push_back({"region_rebalance_lambda_" + lambda_tag(g),
                     losses::Variant::kRegionRebalance, g});
    }
    return out;
  }
  for (auto v : cfg.variants) {
    RunSpec r{losses::to_string(v), v, v == losses::Variant::kRegionRebalance ? lam : 0.0};
    if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
  }
  return out;
}

std::string to_string(FpBudgetStatus s) {
  switch (s) {
    case FpBudgetStatus::kBaselineZeroAcc: return "baseline_zero_acc";
    case FpBudgetStatus::kAccDecreased: return "acc_decreased";
    case FpBudgetStatus::kHolds: return "holds";
    case FpBudgetStatus::kViolation: return "violation";
  }
  return "?";
}

std::vector<FpBudgetRow> fp_budget_rows(const metrics::EvalReport& baseline,
                                     const metrics::EvalReport& rebalanced,
                                     std::span<const int> classes) {
  if (baseline.num_classes() != rebalanced.num_classes()) {
    throw PreconditionError("fp_budget_rows: reports differ in class count");
  }
  std::vector<FpBudgetRow> out;
  for (int k : classes) {
    if (k < 0 || k >= baseline.num_classes()) {
      throw PreconditionError("fp_budget_rows: class " + std::to_string(k) + " out of range");
    }
    FpBudgetRow row;
    row.cls = k;
    row.before = baseline.counts[k];
    row.after = rebalanced.counts[k];
    if (row.before.gt_pixels() != row.after.gt_pixels()) {
      throw PreconditionError("fp_budget_rows: class " + std::to_string(k) +
                              " has different ground-truth pixel counts");
    }
    if (row.before.gt_pixels() == 0) continue;  // absent from the evaluated set
    const auto ia = metrics::iou(row.after), ib = metrics::iou(row.before);
    row.iou_improved = ia.value_or(0.0) >= ib.value_or(0.0);
    if (row.before.tp == 0) {
      row.status = FpBudgetStatus::kBaselineZeroAcc;
    } else if (row.after.tp < row.before.tp) {
      row.status = FpBudgetStatus::kAccDecreased;
      row.k_factor = static_cast<double>(row.after.tp) / static_cast<double>(row.before.tp) - 1.0;
    } else {
      const auto s = metrics::make_scenario(row.before, row.after);
      const auto r = metrics::fp_budget_check(s);
      row.k_factor = s.k_factor;
      row.margin = r.margin;
      row.iou_improved = r.iou_improved;
      row.status = r.condition_holds ? FpBudgetStatus::kHolds : FpBudgetStatus::kViolation;
    }
    out.push_back(row);
  }
  return out;
}

ExperimentResult run_experiment(const config::ExperimentConfig& cfg, const data::Dataset& ds,
                                unsigned parallel) {
  if (ds.num_classes != cfg.scene.num_classes && !cfg.dataset) {
    throw ConfigError("dataset has " + std::to_string(ds.num_classes) +
                      " classes, config expects " + std::to_string(cfg.scene.num_classes));
  }
  losses::validate(cfg.train.loss, ds.num_classes);

  ExperimentResult res;
  res.frequencies = ds.frequencies;
  res.tail = stats::tail_classes(ds.frequencies, cfg.tail_fraction);

  const auto plan = plan_runs(cfg);
  for (const auto& spec : plan) {
    for (auto seed : cfg.seeds) res.runs.push_back({spec, seed, {}, {}});
  }

  auto run_one = [&](RunResult& r) {
    model::TrainConfig tc = cfg.train;
    tc.seed = r.seed;
    tc.loss.variant = r.spec.variant;
    tc.loss.lambda = r.spec.lambda;
    auto t = model::train(ds, tc);
    r.report = std::move(t.report);
    r.loss_curve = std::move(t.loss_curve);
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(parallel, res.runs.size()));
  if (workers == 1) {
    for (auto& r : res.runs) run_one(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < res.runs.size();) {
          try {
            run_one(res.runs[i]);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  const int c = ds.num_classes;
  const double n = static_cast<double>(cfg.seeds.size());
  for (std::size_t p = 0; p < plan.size(); ++p) {
    Summary s;
    s.spec = plan[p];
    std::vector<metrics::ClassCounts> pooled(c);
    for (std::size_t j = 0; j < cfg.seeds.size(); ++j) {
      const auto& rep = res.runs[p * cfg.seeds.size() + j].report;
      s.miou += rep.miou / n;
      s.macc += rep.macc / n;
      s.tail_miou += tail_or_zero(metrics::mean_iou_over(rep, res.tail)) / n;
      s.tail_macc += tail_or_zero(metrics::mean_acc_over(rep, res.tail)) / n;
      for (int k = 0; k < c; ++k) {
        pooled[k].tp += rep.counts[k].tp;
        pooled[k].fn += rep.counts[k].fn;
        pooled[k].fp += rep.counts[k].fp;
      }
    }
    s.pooled = metrics::make_report(std::move(pooled));
    res.summaries.push_back(std::move(s));
  }

  const Summary* base = find(res.summaries, losses::Variant::kPixelCe);
  const Summary* bal = find(res.summaries, losses::Variant::kBalancedPixel);
  const Summary* rr = find(res.summaries, losses::Variant::kRegionRebalance);
  if (base && bal && rr && cfg.lambda_grid.empty()) {
    DirectionalCheck d;
    d.tail_macc_gain_balanced = bal->tail_macc - base->tail_macc;
    d.tail_dmiou_balanced = bal->tail_miou - base->tail_miou;
    d.tail_dmiou_region = rr->tail_miou - base->tail_miou;
    d.miou_baseline = base->miou;
    d.miou_region = rr->miou;
    for (const auto& row : fp_budget_rows(base->pooled, bal->pooled, res.tail)) {
      if (row.status == FpBudgetStatus::kViolation) d.balanced_violations.push_back(row.cls);
    }
    for (const auto& row : fp_budget_rows(base->pooled, rr->pooled, d.balanced_violations)) {
      if (row.status == FpBudgetStatus::kViolation) d.region_violations.push_back(row.cls);
    }
    d.a = d.tail_macc_gain_balanced >= 0.02 && d.tail_dmiou_balanced < d.tail_dmiou_region;
    d.b = d.miou_region >= d.miou_baseline;
    d.c = !d.balanced_violations.empty() && d.region_violations.empty();
    res.directional = d;
  }
  return res;
}

void write_outputs(const std::filesystem::path& dir, const config::ExperimentConfig& cfg,
                   const data::Dataset& ds, const ExperimentResult& res) {
  namespace fs = std::filesystem;
  using report::full;
  using report::pct;
  fs::create_directories(dir / "reports");
  fs::create_directories(dir / "losses");

  open_out(dir / "config.txt") << config::to_text(cfg);

  std::vector<std::string> files;
  for (std::size_t i = 0; i < ds.size(); ++i) files.push_back("labels/" + data::stem(i) + ".pgm");
  stats::write_frequency_cache(dir / "frequencies.txt",
                               {res.frequencies, stats::file_list_checksum(files)});

  // Class order of every per-class table: descending pixel frequency.
  std::vector<int> order(res.frequencies.num_classes());
  for (int k = 0; k < res.frequencies.num_classes(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return res.frequencies.pixel_freq[a] > res.frequencies.pixel_freq[b];
  });

  const std::size_t ns = cfg.seeds.size();
  const std::size_t nplan = res.summaries.size();
  const Summary* base = find(res.summaries, losses::Variant::kPixelCe);
  for (std::size_t p = 0; p < nplan; ++p) {
    for (std::size_t j = 0; j < ns; ++j) {
      const auto& r = res.runs[p * ns + j];
      const std::string tag = r.spec.label + "_seed" + std::to_string(r.seed);
      const metrics::EvalReport* b =
          base && r.spec.variant != losses::Variant::kPixelCe ? &res.runs[j].report : nullptr;
      report::write_report_csv(dir / "reports" / (tag + ".csv"),
                               {&r.report, &res.frequencies, b, {}, order});
      auto lo = open_out(dir / "losses" / (tag + ".csv"));
      lo << "iter,lr,loss\n";
      model::TrainConfig tc = cfg.train;
      for (std::size_t it = 0; it < r.loss_curve.size(); ++it) {
        lo << it << "," << full(model::poly_lr(static_cast<int>(it), tc)) << ","
           << full(r.loss_curve[it]) << "\n";
      }
    }
  }

  {
    auto out = open_out(dir / "summary.csv");
    out << "label,variant,lambda,seed,miou,macc,tail_miou,tail_macc,"
           "miou_pct,macc_pct,tail_miou_pct,tail_macc_pct\n";
    auto row = [&](const RunSpec& s, const std::string& seed, double mi, double ma, double tmi,
                   double tma) {
      out << s.label << "," << losses::to_string(s.variant) << "," << full(s.lambda) << ","
          << seed << "," << full(mi) << "," << full(ma) << "," << full(tmi) << "," << full(tma)
          << "," << pct(mi) << "," << pct(ma) << "," << pct(tmi) << "," << pct(tma) << "\n";
    };
    for (std::size_t p = 0; p < nplan; ++p) {
      for (std::size_t j = 0; j < ns; ++j) {
        const auto& r = res.runs[p * ns + j];
        row(r.spec, std::to_string(r.seed), r.report.miou, r.report.macc,
            tail_or_zero(metrics::mean_iou_over(r.report, res.tail)),
            tail_or_zero(metrics::mean_acc_over(r.report, res.tail)));
      }
      const auto& s = res.summaries[p];
      row(s.spec, "mean", s.miou, s.macc, s.tail_miou, s.tail_macc);
    }
  }

  if (base) {
    for (const auto& s : res.summaries) {
      if (&s == base) continue;
      report::write_report_csv(dir / ("compare_pooled_" + s.spec.label + ".csv"),
                               {&s.pooled, &res.frequencies, &base->pooled, {}, order});
      auto out = open_out(dir / ("fp_budget_" + s.spec.label + ".csv"));
      out << "class,pixel_freq,base_tp,base_fn,base_fp,tp,fn,fp,k_factor,margin,"
             "iou_improved,status\n";
      for (const auto& r : fp_budget_rows(base->pooled, s.pooled, res.tail)) {
        out << r.cls << "," << res.frequencies.pixel_freq[r.cls] << "," << r.before.tp << ","
            << r.before.fn << "," << r.before.fp << "," << r.after.tp << "," << r.after.fn
            << "," << r.after.fp << "," << full(r.k_factor) << "," << full(r.margin) << ","
            << (r.iou_improved ? 1 : 0) << "," << to_string(r.status) << "\n";
      }
    }
  }

  if (!cfg.lambda_grid.empty()) {
    auto out = open_out(dir / "lambda_ablation.csv");
    out << "lambda,miou,macc,tail_miou,tail_macc,miou_pct,macc_pct\n";
    for (const auto& s : res.summaries) {
      if (s.spec.variant != losses::Variant::kRegionRebalance) continue;
      out << full(s.spec.lambda) << "," << full(s.miou) << "," << full(s.macc) << ","
          << full(s.tail_miou) << "," << full(s.tail_macc) << "," << pct(s.miou) << ","
          << pct(s.macc) << "\n";
    }
  }

  if (res.directional) {
    const auto& d = *res.directional;
    auto list = [](const std::vector<int>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
      return s;
    };
    auto out = open_out(dir / "directional.csv");
    out << "check,value,reference,pass\n";
    out << "a_tail_macc_gain_balanced," << full(d.tail_macc_gain_balanced) << ",0.02,"
        << (d.tail_macc_gain_balanced >= 0.02) << "\n";
    out << "a_tail_dmiou_balanced_lt_region," << full(d.tail_dmiou_balanced) << ","
        << full(d.tail_dmiou_region) << "," << (d.tail_dmiou_balanced < d.tail_dmiou_region)
        << "\n";
    out << "b_miou_region_ge_baseline," << full(d.miou_region) << "," << full(d.miou_baseline)
        << "," << d.b << "\n";
    out << "c_balanced_violations," << list(d.balanced_violations) << ",,"
        << !d.balanced_violations.empty() << "\n";
    out << "c_region_violations_same_classes," << list(d.region_violations) << ",,"
        << d.region_violations.empty() << "\n";
    out << "all,,," << d.passed() << "\n";
  }
}

}  // namespace rrseg::experiment
