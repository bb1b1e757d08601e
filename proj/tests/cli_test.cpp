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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include "json.hpp"
#include <sstream>

#include "rrseg/config.hpp"
#include "rrseg/dataset.hpp"
#include "rrseg/experiment.hpp"
#include "rrseg/report_io.hpp"
#include "rrseg/synthdata.hpp"

namespace rrseg {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rrseg_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Invocation {
  int code = -1;
  std::string out, err;
};

Invocation invoke(std::vector<std::string> args) {
  std::ostringstream o, e;
  Invocation r;
  r.code = cli::run(args, o, e);
  r.out = o.str();
  r.err = e.str();
  return r;
}

config::ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return config::parse_experiment_config(in, "test.cfg");
}

// A small scene that trains in well under a second per run.
config::ExperimentConfig tiny_config() {
  auto c = parse(
      "[scene]\n"
      "num_classes = 4\nheight = 10\nwidth = 10\nnum_images = 40\n"
      "target_pif = 8\ntarget_rif = 3\nfeature_dim = 4\nconfusable_pairs = 1:3:0.5\nseed = 2\n"
      "[train]\ntotal_iters = 20\nbatch_size = 2\nhidden_dim = 6\n"
      "[experiment]\nseeds = 1, 2\n");
  return c;
}

// --- config ---------------------------------------------------------------

TEST(ConfigTest, EmptyFileGivesDefaults) {
  const auto c = parse("# nothing\n\n");
  EXPECT_EQ(config::to_text(c), config::to_text(config::default_experiment_config()));
  EXPECT_EQ(c.scene.num_classes, 12);
  EXPECT_EQ(c.train.lr0, 1e-2);
  EXPECT_EQ(c.train.power, 0.9);
  EXPECT_EQ(c.variants.size(), 4u);
}

TEST(ConfigTest, ParsesSectionsAndLists) {
  const auto c = parse(
      "[scene]\nnum_classes = 6\nconfusable_pairs = 1:5:0.25, 2:4:0.5\n"
      "[train]\nmean_filter = false\nlr0 = 0.05\n"
      "[loss]\nvariant = region_rebalance\nlambda = 0.7\n"
      "[experiment]\nvariants = pixel_ce, region_rebalance\nlambda_grid = 0, 0.5\n"
      "seeds = 7\n");
  EXPECT_EQ(c.scene.num_classes, 6);
  ASSERT_EQ(c.scene.confusable_pairs.size(), 2u);
  EXPECT_EQ(c.scene.confusable_pairs[1].b, 4);
  EXPECT_EQ(c.scene.confusable_pairs[0].overlap, 0.25);
  EXPECT_FALSE(c.train.mean_filter);
  EXPECT_EQ(c.train.lr0, 0.05);
  EXPECT_EQ(c.train.loss.variant, losses::Variant::kRegionRebalance);
  EXPECT_EQ(c.train.loss.lambda, 0.7);
  EXPECT_EQ(c.lambda_grid, (std::vector<double>{0.0, 0.5}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7}));
  EXPECT_EQ(c.variants.size(), 2u);
}

TEST(ConfigTest, InlineComments) {
  const auto c = parse("[train]  # optimizer\nlr0 = 0.02   # initial rate\n# lr0 = 5\n");
  EXPECT_EQ(c.train.lr0, 0.02);
}

TEST(ConfigTest, TextRoundTrip) {
  const auto c = tiny_config();
  const auto text = config::to_text(c);
  EXPECT_EQ(config::to_text(parse(text)), text);
}

TEST(ConfigTest, UnknownKeyNamesFileAndLine) {
  try {
    parse("[train]\nlr0 = 0.1\n\nlearning_rate = 0.1\n");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("test.cfg:4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("train.learning_rate"), std::string::npos) << msg;
  }
}

TEST(ConfigTest, MalformedInputsAreConfigErrors) {
  for (const char* text : {
           "lr0 = 1\n",                                   // key before any section
           "[train]\nlr0\n",                              // missing '='
           "[train]\nlr0 = 1\nlr0 = 2\n",                 // duplicate
           "[train]\nlr0 = fast\n",                       // not a number
           "[train]\nlr0 = -1\n",                         // invalid value
           "[train]\ntotal_iters = 2.5\n",                // not an integer
           "[train]\nmean_filter = maybe\n",              // not a bool
           "[loss]\nvariant = dice\n",                    // unknown variant
           "[loss]\nlambda = -0.1\n",                     // negative weight
           "[scene]\nconfusable_pairs = 1:2\n",           // malformed pair
           "[scene]\nconfusable_pairs = 1:20:0.5\n",      // class out of range
           "[experiment]\ntail_fraction = 0\n",           // empty tail
           "[experiment]\nseeds =\n",                     // empty list
       }) {
    EXPECT_THROW(parse(text), ConfigError) << text;
  }
  EXPECT_THROW(config::load_experiment_config(scratch("missing.cfg")), ConfigError);
}

// --- report files ---------------------------------------------------------

TEST(ReportIoTest, CsvRoundTrip) {
  const auto rep = metrics::make_report(std::vector<metrics::ClassCounts>{
      {90, 10, 5}, {3, 7, 20}, {0, 0, 4}, {0, 6, 0}});
  stats::FrequencyTable t(4);
  t.pixel_freq = {100, 10, 0, 6};
  t.region_freq = {9, 4, 0, 2};
  t.num_images = 9;
  const fs::path p = scratch("report.csv");
  report::write_report_csv(p, {&rep, &t, nullptr, {}, {}});
  const auto back = report::read_report_csv(p);
  EXPECT_EQ(back.report, rep);
  ASSERT_TRUE(back.frequencies.has_value());
  EXPECT_EQ(back.frequencies->pixel_freq, t.pixel_freq);
  EXPECT_EQ(back.frequencies->region_freq, t.region_freq);
  fs::remove(p);
}

TEST(ReportIoTest, MalformedCsvIsDataError) {
  const fs::path p = scratch("bad.csv");
  {
    std::ofstream o(p);
    o << "class,tp\n0,1\n";
  }
  EXPECT_THROW(report::read_report_csv(p), DataError);
  EXPECT_THROW(report::read_report_csv(scratch("none.csv")), DataError);
  fs::remove(p);
}

// --- experiment planning and diagnostics ----------------------------------

TEST(PlanTest, VariantsAndLambdaGrid) {
  auto c = tiny_config();
  auto runs = experiment::plan_runs(c);
  ASSERT_EQ(runs.size(), 4u);
  EXPECT_EQ(runs[0].label, "pixel_ce");
  EXPECT_EQ(runs[3].label, "region_rebalance");
  EXPECT_EQ(runs[3].lambda, c.train.loss.lambda);
  EXPECT_EQ(runs[0].lambda, 0.0);

  c.lambda_grid = {0.0, 0.1, 0.25};
  runs = experiment::plan_runs(c);
  ASSERT_EQ(runs.size(), 4u);
  EXPECT_EQ(runs[0].variant, losses::Variant::kPixelCe);
  EXPECT_EQ(runs[1].label, "region_rebalance_lambda_0");
  EXPECT_EQ(runs[3].label, "region_rebalance_lambda_0.25");
  EXPECT_EQ(runs[2].lambda, 0.1);
}

TEST(FpBudgetRowsTest, Statuses) {
  using C = metrics::ClassCounts;
  const auto base = metrics::make_report(std::vector<C>{{0, 10, 0}, {5, 5, 0}, {5, 5, 0}, {5, 5, 0}, {0, 0, 0}});
  const auto after = metrics::make_report(std::vector<C>{{4, 6, 1}, {3, 7, 0}, {8, 2, 3}, {8, 2, 40}, {0, 0, 2}});
  const std::vector<int> classes{0, 1, 2, 3, 4};
  const auto rows = experiment::fp_budget_rows(base, after, classes);
  ASSERT_EQ(rows.size(), 4u);  // class 4 has no pixels
  EXPECT_EQ(rows[0].status, experiment::FpBudgetStatus::kBaselineZeroAcc);
  EXPECT_EQ(rows[1].status, experiment::FpBudgetStatus::kAccDecreased);
  EXPECT_EQ(rows[2].status, experiment::FpBudgetStatus::kHolds);
  EXPECT_TRUE(rows[2].iou_improved);
  EXPECT_EQ(rows[3].status, experiment::FpBudgetStatus::kViolation);
  EXPECT_FALSE(rows[3].iou_improved);
  EXPECT_DOUBLE_EQ(rows[2].k_factor, 0.6);

  const auto other = metrics::make_report(std::vector<C>{{1, 1, 0}, {5, 5, 0}, {5, 5, 0}, {5, 5, 0}, {0, 0, 0}});
  EXPECT_THROW(experiment::fp_budget_rows(base, other, classes), PreconditionError);
}

TEST(ExperimentTest, LambdaGridAblation) {
  auto c = tiny_config();
  c.lambda_grid = {0.0, 0.1, 0.2, 0.3, 0.4};
  const auto ds = synth::generate(c.scene).dataset;
  const auto res = experiment::run_experiment(c, ds);
  ASSERT_EQ(res.summaries.size(), 6u);
  EXPECT_FALSE(res.directional.has_value());
  // lambda = 0 trains exactly the baseline
  const auto& base = res.summaries[0];
  const auto& zero = res.summaries[1];
  EXPECT_EQ(zero.spec.lambda, 0.0);
  EXPECT_EQ(zero.pooled, base.pooled);
  EXPECT_EQ(zero.miou, base.miou);
  for (std::size_t s = 0; s < c.seeds.size(); ++s) {
    EXPECT_EQ(res.runs[c.seeds.size() + s].loss_curve, res.runs[s].loss_curve);
  }

  const fs::path dir = scratch("ablation");
  experiment::write_outputs(dir, c, ds, res);
  std::ifstream in(dir / "lambda_ablation.csv");
  std::string line;
  int rows = 0;
  std::getline(in, line);
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);
  fs::remove_all(dir);
}

TEST(ExperimentTest, OutputsAreByteIdenticalAcrossRunsAndThreads) {
  const auto c = tiny_config();
  const auto ds = synth::generate(c.scene).dataset;
  const fs::path a = scratch("rep_a"), b = scratch("rep_b");
  experiment::write_outputs(a, c, ds, experiment::run_experiment(c, ds, 1));
  experiment::write_outputs(b, c, ds, experiment::run_experiment(c, ds, 3));
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++files;
  }
  EXPECT_GE(files, 10);
  EXPECT_TRUE(fs::exists(a / "summary.csv"));
  EXPECT_TRUE(fs::exists(a / "directional.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

// --- command line ---------------------------------------------------------

TEST(CliTest, SweepReferenceValue) {
  const auto r = invoke({"sweep", "--b", "3", "--acc", "0.6"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string header, b, acc, iou;
  std::getline(in, header);
  std::getline(in, b, ',');
  std::getline(in, acc, ',');
  std::getline(in, iou, ',');
  EXPECT_EQ(std::stod(b), 3.0);
  EXPECT_EQ(std::stod(acc), 0.6);
  EXPECT_NEAR(std::stod(iou), 0.2142857142857143, 1e-12);
}

TEST(CliTest, SweepGridIsMonotone) {
  const auto r = invoke({"sweep", "--acc-steps", "50"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "b,acc,iou,iou_pct");
  std::map<double, std::vector<double>> by_b;
  while (std::getline(in, line)) {
    double b, acc, iou;
    char c;
    std::istringstream ls(line);
    ls >> b >> c >> acc >> c >> iou;
    by_b[b].push_back(iou);
  }
  EXPECT_EQ(by_b.size(), 4u);
  for (const auto& [b, ious] : by_b) {
    EXPECT_EQ(ious.size(), 50u);
    for (std::size_t i = 1; i < ious.size(); ++i) EXPECT_GT(ious[i], ious[i - 1]);
  }
}

TEST(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"bogus"}).code, 2);
  EXPECT_EQ(invoke({"sweep", "--acc-steps", "0"}).code, 2);
  EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST(CliTest, ProfileEmptyDirectoryIsDataError) {
  const fs::path dir = scratch("empty");
  fs::create_directories(dir);
  const auto r = invoke({"profile", dir.string(), "--out", (dir / "p").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("no images"), std::string::npos) << r.err;
  EXPECT_EQ(invoke({"profile", scratch("absent").string()}).code, 3);
  fs::remove_all(dir);
}

TEST(CliTest, ProfileSingleUniformImageHasUndefinedFactors) {
  const fs::path dir = scratch("uniform");
  fs::create_directories(dir / "labels");
  data::write_pgm16(dir / "labels" / "0000.pgm", SegMap(4, 4, 2));
  const auto r = invoke({"profile", dir.string(), "--out", (dir / "p").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_TRUE(j["pif"].is_null());
  EXPECT_TRUE(j["rif"].is_null());
  EXPECT_EQ(j["pixel_freq"][2], 16);
  EXPECT_EQ(j["region_freq"][2], 1);
  fs::remove_all(dir);
}

TEST(CliTest, GenerateProfileTrainEvaluateCompare) {
  const fs::path root = scratch("pipeline");
  fs::create_directories(root);
  const auto c = tiny_config();
  {
    std::ofstream o(root / "run.cfg");
    o << config::to_text(c);
  }
  const std::string data = (root / "data").string(), cfg = (root / "run.cfg").string();
  auto r = invoke({"generate", "--config", cfg, "--out", data});
  ASSERT_EQ(r.code, 0) << r.err;

  // refuses to overwrite without --force
  r = invoke({"generate", "--config", cfg, "--out", data});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(invoke({"generate", "--config", cfg, "--out", data, "--force"}).code, 0);

  r = invoke({"train", "--data", data, "--config", cfg, "--out", (root / "base").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  {
    std::ofstream o(root / "rr.cfg", std::ios::trunc);
    auto rc = c;
    rc.train.loss.variant = losses::Variant::kRegionRebalance;
    o << config::to_text(rc);
  }
  r = invoke({"train", "--data", data, "--config", (root / "rr.cfg").string(), "--out",
              (root / "rr").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(root / "rr" / "loss.csv"));

  // the profile equals the generator's realized table
  r = invoke({"profile", data, "--out", (root / "prof").string(), "--accuracy",
              (root / "base" / "report.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  const auto g = synth::generate(c.scene);
  EXPECT_EQ(j["pixel_freq"].get<std::vector<std::uint64_t>>(), g.dataset.frequencies.pixel_freq);
  EXPECT_EQ(j["region_freq"].get<std::vector<std::uint64_t>>(), g.dataset.frequencies.region_freq);
  EXPECT_EQ(j["pif"].get<double>(), g.pif);
  EXPECT_TRUE(j["meta_checked"].get<bool>());
  EXPECT_TRUE(j.contains("pearson"));
  const auto cache = stats::read_frequency_cache(root / "prof" / "frequencies.txt");
  EXPECT_EQ(cache.table, g.dataset.frequencies);

  r = invoke({"evaluate", "--data", data, "--checkpoint", (root / "base" / "checkpoint.bin").string(),
              "--out", (root / "eval.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ev = report::read_report_csv(root / "eval.csv");
  EXPECT_EQ(ev.report.num_classes(), 4);

  r = invoke({"compare", (root / "base" / "report.csv").string(),
              (root / "rr" / "report.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("delta"), std::string::npos) << r.out;

  EXPECT_EQ(invoke({"evaluate", "--data", data, "--checkpoint", (root / "nope.bin").string()}).code,
            3);
  fs::remove_all(root);
}

TEST(CliTest, OutputRootEnvironment) {
  const fs::path root = scratch("envroot");
  fs::create_directories(root);
  ::setenv(cli::kOutputRootEnv, root.c_str(), 1);
  EXPECT_EQ(cli::resolve_output("a/b.csv"), root / "a/b.csv");
  EXPECT_EQ(cli::resolve_output("/abs/x"), fs::path("/abs/x"));
  ::unsetenv(cli::kOutputRootEnv);
  EXPECT_EQ(cli::resolve_output("a/b.csv"), fs::path("a/b.csv"));
  fs::remove_all(root);
}

}  // namespace
}  // namespace rrseg
