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

#include "rrseg/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "rrseg/config.hpp"
#include "rrseg/dataset.hpp"
#include "rrseg/experiment.hpp"
#include "rrseg/metrics.hpp"
#include "rrseg/model.hpp"
#include "rrseg/report_io.hpp"
#include "rrseg/stats.hpp"
#include "rrseg/synthdata.hpp"

namespace rrseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Refuses to clobber an existing file or non-empty directory.
void guard(const fs::path& p, bool force) {
  if (force || !fs::exists(p)) return;
  if (fs::is_directory(p) && fs::is_empty(p)) return;
  throw ConfigError(p.string() + " already exists; pass --force to overwrite");
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  return f;
}

json opt(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

config::ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? config::default_experiment_config()
                      : config::load_experiment_config(path);
}

// --- profile --------------------------------------------------------------

struct ProfileArgs {
  std::string dir;
  std::string out = "profile";
  std::string accuracy;
  int num_classes = 0;
  bool force = false;
};

void cmd_profile(const ProfileArgs& a, std::ostream& out) {
  data::ReadOptions ro;
  ro.features = false;
  if (a.num_classes > 0) ro.num_classes = a.num_classes;
  const auto ds = data::read_dataset(a.dir, ro);
  const auto& t = ds.frequencies;

  const fs::path dir = resolve_output(a.out);
  const fs::path cache = dir / "frequencies.txt";
  const fs::path summary = dir / "summary.json";
  guard(cache, a.force);
  guard(summary, a.force);

  json j;
  j["num_images"] = t.num_images;
  j["num_classes"] = t.num_classes();
  j["pixel_freq"] = t.pixel_freq;
  j["region_freq"] = t.region_freq;
  j["pif"] = opt(stats::imbalance_factor(t.pixel_freq));
  j["rif"] = opt(stats::imbalance_factor(t.region_freq));
  j["meta_checked"] = fs::exists(fs::path(a.dir) / "meta.txt");
  j["cache"] = cache.string();
  if (!a.accuracy.empty()) {
    const auto rep = report::read_report_csv(a.accuracy);
    if (rep.report.num_classes() != t.num_classes()) {
      throw DataError(a.accuracy + ": report has " + std::to_string(rep.report.num_classes()) +
                      " classes, dataset has " + std::to_string(t.num_classes()));
    }
    // vector<bool> has no contiguous storage to span over.
    const std::size_t n = rep.report.valid.size();
    auto valid = std::make_unique<bool[]>(n);
    for (std::size_t k = 0; k < n; ++k) valid[k] = rep.report.valid[k];
    const std::span<const bool> vs(valid.get(), n);
    auto corr = [&](const std::vector<std::uint64_t>& f, stats::FrequencyScale s) {
      return opt(stats::accuracy_frequency_correlation(rep.report.per_class_acc, vs, f, s));
    };
    j["pearson"] = {
        {"pixel_raw", corr(t.pixel_freq, stats::FrequencyScale::kRaw)},
        {"pixel_log", corr(t.pixel_freq, stats::FrequencyScale::kLog)},
        {"region_raw", corr(t.region_freq, stats::FrequencyScale::kRaw)},
        {"region_log", corr(t.region_freq, stats::FrequencyScale::kLog)},
    };
  }

  fs::create_directories(dir);
  stats::write_frequency_cache(
      cache, {t, stats::file_list_checksum(data::list_label_files(a.dir))});
  open_out(summary) << j.dump(2) << "\n";
  out << j.dump(2) << "\n";
}

// --- generate -------------------------------------------------------------

void cmd_generate(const std::string& cfg_path, const std::string& out_dir, bool force,
                  std::ostream& out) {
  const auto cfg = config_or_default(cfg_path);
  const fs::path dir = resolve_output(out_dir);
  guard(dir, force);
  const auto g = synth::generate(cfg.scene);
  data::write_dataset(dir, g.dataset, true);
  out << "wrote " << g.dataset.size() << " images to " << dir.string() << " (pif "
      << report::full(g.pif) << ", rif " << report::full(g.rif) << ", attempts " << g.attempts
      << ")\n";
}

// --- train / evaluate -----------------------------------------------------

void cmd_train(const std::string& data_dir, const std::string& cfg_path,
               const std::string& out_dir, bool force, std::ostream& out) {
  const auto cfg = config_or_default(cfg_path);
  const auto ds = data::read_dataset(data_dir);
  const fs::path dir = resolve_output(out_dir);
  guard(dir, force);
  const auto r = model::train(ds, cfg.train);
  fs::create_directories(dir);
  model::save_checkpoint(dir / "checkpoint.bin", r.model);
  report::write_report_csv(dir / "report.csv", {&r.report, &ds.frequencies, nullptr, {}, {}});
  auto lo = open_out(dir / "loss.csv");
  lo << "iter,lr,loss\n";
  for (std::size_t i = 0; i < r.loss_curve.size(); ++i) {
    lo << i << "," << report::full(model::poly_lr(static_cast<int>(i), cfg.train)) << ","
       << report::full(r.loss_curve[i]) << "\n";
  }
  out << "variant " << losses::to_string(cfg.train.loss.variant) << ": val mIoU "
      << report::pct(r.report.miou) << " mAcc " << report::pct(r.report.macc) << "\n";
}

void cmd_evaluate(const std::string& data_dir, const std::string& ckpt, const std::string& out_path,
                  unsigned threads, bool force, std::ostream& out) {
  const auto m = model::load_checkpoint(ckpt);
  const auto ds = data::read_dataset(data_dir, {true, m.num_classes()});
  const auto rep = model::evaluate(m, ds, {}, threads);
  const report::ReportRows rows{&rep, &ds.frequencies, nullptr, {}, {}};
  if (out_path.empty()) {
    report::write_report_csv(out, rows);
    return;
  }
  const fs::path p = resolve_output(out_path);
  guard(p, force);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  report::write_report_csv(p, rows);
  out << "mIoU " << report::pct(rep.miou) << " mAcc " << report::pct(rep.macc) << "\n";
}

// --- compare --------------------------------------------------------------

void cmd_compare(const std::string& a_path, const std::string& b_path, const std::string& out_path,
                 bool force, std::ostream& out) {
  const auto a = report::read_report_csv(a_path);
  const auto b = report::read_report_csv(b_path);
  const stats::FrequencyTable* freq = a.frequencies ? &*a.frequencies
                                      : b.frequencies ? &*b.frequencies
                                                      : nullptr;
  // Validates class counts and masks.
  const auto d = metrics::delta_report(
      a.report, b.report,
      freq ? std::span<const std::uint64_t>(freq->pixel_freq) : std::span<const std::uint64_t>());
  const report::ReportRows rows{&b.report, freq, &a.report, a.names, d.order};
  if (out_path.empty()) {
    report::write_report_csv(out, rows);
  } else {
    const fs::path p = resolve_output(out_path);
    guard(p, force);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    report::write_report_csv(p, rows);
    out << "mIoU " << report::pct(a.report.miou) << " -> " << report::pct(b.report.miou)
        << ", mAcc " << report::pct(a.report.macc) << " -> " << report::pct(b.report.macc)
        << "\n";
  }
}

// --- sweep ----------------------------------------------------------------

void cmd_sweep(const std::vector<double>& b, int acc_steps, const std::vector<double>& acc,
               const std::string& out_path, bool force, std::ostream& out) {
  const auto grid = acc.empty() ? metrics::acc_grid(acc_steps) : acc;
  const auto pts = metrics::fp_tp_sweep(b, grid);
  auto write = [&](std::ostream& o) {
    o << "b,acc,iou,iou_pct\n";
    for (const auto& p : pts) {
      o << report::full(p.b) << "," << report::full(p.acc) << "," << report::full(p.iou) << ","
        << report::pct(p.iou) << "\n";
    }
  };
  if (out_path.empty()) {
    write(out);
    return;
  }
  const fs::path p = resolve_output(out_path);
  guard(p, force);
  auto f = open_out(p);
  write(f);
}

// --- experiment -----------------------------------------------------------

void cmd_experiment(const std::string& cfg_path, const std::string& out_dir, unsigned parallel,
                    bool force, std::ostream& out) {
  const auto cfg = config_or_default(cfg_path);
  const fs::path dir = resolve_output(out_dir);
  guard(dir, force);

  data::Dataset ds;
  if (cfg.dataset) {
    ds = data::read_dataset(*cfg.dataset);
  } else {
    auto g = synth::generate(cfg.scene);
    out << "generated " << g.dataset.size() << " images: pif " << report::full(g.pif)
        << ", rif " << report::full(g.rif) << "\n";
    ds = std::move(g.dataset);
  }
  const auto res = experiment::run_experiment(cfg, ds, parallel);
  experiment::write_outputs(dir, cfg, ds, res);

  for (const auto& s : res.summaries) {
    out << s.spec.label << ": mIoU " << report::pct(s.miou) << " mAcc " << report::pct(s.macc)
        << " tail mIoU " << report::pct(s.tail_miou) << " tail mAcc "
        << report::pct(s.tail_macc) << "\n";
  }
  if (res.directional) {
    const auto& d = *res.directional;
    out << "directional checks: a=" << (d.a ? "pass" : "fail") << " b=" << (d.b ? "pass" : "fail")
        << " c=" << (d.c ? "pass" : "fail") << "\n";
  }
  out << "results in " << dir.string() << "\n";
}

}  // namespace

fs::path resolve_output(const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return fs::path(root) / p;
  return p;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Long-tail segmentation diagnostics and region-rebalance experiments", "rrseg"};
  app.require_subcommand(1);

  ProfileArgs pa;
  auto* profile = app.add_subcommand("profile", "Pixel/region frequencies and imbalance factors");
  profile->add_option("dir", pa.dir, "Dataset directory")->required();
  profile->add_option("--out", pa.out, "Output directory for frequencies.txt and summary.json");
  profile->add_option("--accuracy", pa.accuracy, "Report CSV for accuracy-frequency correlation");
  profile->add_option("--num-classes", pa.num_classes, "Override the class count");
  profile->add_flag("--force", pa.force, "Overwrite existing outputs");

  std::string cfg_path, out_dir, data_dir, ckpt;
  bool force = false;
  unsigned parallel = 1, threads = 1;

  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  generate->add_option("--config", cfg_path, "Config file ([scene] section)");
  generate->add_option("--out", out_dir, "Dataset directory")->required();
  generate->add_flag("--force", force, "Overwrite existing outputs");

  auto* train = app.add_subcommand("train", "Train one model on a dataset directory");
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--config", cfg_path, "Config file ([train] and [loss] sections)");
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_flag("--force", force, "Overwrite existing outputs");

  std::string report_out;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  evaluate->add_option("--data", data_dir, "Dataset directory")->required();
  evaluate->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  evaluate->add_option("--out", report_out, "Report CSV (stdout when omitted)");
  evaluate->add_option("--threads", threads, "Evaluation threads")->check(CLI::PositiveNumber);
  evaluate->add_flag("--force", force, "Overwrite existing outputs");

  std::string rep_a, rep_b;
  auto* compare = app.add_subcommand("compare", "Per-class IoU/Acc deltas of B against A");
  compare->add_option("reportA", rep_a, "Baseline report CSV")->required();
  compare->add_option("reportB", rep_b, "Rebalanced report CSV")->required();
  compare->add_option("--out", report_out, "Output CSV (stdout when omitted)");
  compare->add_flag("--force", force, "Overwrite existing outputs");

  std::vector<double> b_values{0, 1, 3, 5}, acc_values;
  int acc_steps = 100;
  auto* sweep = app.add_subcommand("sweep", "IoU as a function of Acc and FP/TP");
  sweep->add_option("--b", b_values, "FP/TP ratios")->delimiter(',');
  sweep->add_option("--acc-steps", acc_steps, "Accuracy grid 1/n .. 1")->check(CLI::PositiveNumber);
  sweep->add_option("--acc", acc_values, "Explicit accuracy values")->delimiter(',');
  sweep->add_option("--out", report_out, "Output CSV (stdout when omitted)");
  sweep->add_flag("--force", force, "Overwrite existing outputs");

  auto* exp = app.add_subcommand("experiment", "Train and compare the loss variants");
  exp->add_option("--config", cfg_path, "Config file (defaults when omitted)");
  exp->add_option("--out", out_dir, "Results directory")->default_val("experiment");
  exp->add_option("--parallel", parallel, "Concurrent runs")->check(CLI::PositiveNumber);
  exp->add_flag("--force", force, "Overwrite existing outputs");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*profile) cmd_profile(pa, out);
    else if (*generate) cmd_generate(cfg_path, out_dir, force, out);
    else if (*train) cmd_train(data_dir, cfg_path, out_dir, force, out);
    else if (*evaluate) cmd_evaluate(data_dir, ckpt, report_out, threads, force, out);
    else if (*compare) cmd_compare(rep_a, rep_b, report_out, force, out);
    else if (*sweep) cmd_sweep(b_values, acc_steps, acc_values, report_out, force, out);
    else if (*exp) cmd_experiment(cfg_path, out_dir, parallel, force, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}

}  // namespace rrseg::cli
