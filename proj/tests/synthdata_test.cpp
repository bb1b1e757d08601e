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

#include "rrseg/synthdata.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "rrseg/dataset.hpp"
#include "rrseg/metrics.hpp"
#include "rrseg/stats.hpp"

namespace rrseg::synth {
namespace {

namespace fs = std::filesystem;

SceneSpec small_spec() {
  SceneSpec s;
  s.num_classes = 6;
  s.height = 16;
  s.width = 16;
  s.num_images = 120;
  s.target_pif = 20.0;
  s.target_rif = 6.0;
  s.feature_dim = 8;
  s.confusable_pairs = {{1, 5, 0.5}};
  s.seed = 9;
  return s;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rrseg_test_" + name);
  fs::remove_all(p);
  return p;
}

TEST(GenerateTest, DeterministicInSpec) {
  const auto a = generate(small_spec());
  const auto b = generate(small_spec());
  EXPECT_EQ(a.dataset, b.dataset);
  auto other = small_spec();
  other.seed = 10;
  EXPECT_NE(generate(other).dataset.labels, a.dataset.labels);
}

TEST(GenerateTest, RealizedTableEqualsProfile) {
  const auto g = generate(small_spec());
  EXPECT_EQ(g.dataset.frequencies, stats::profile(g.dataset.labels, 6));
  const auto s = stats::imbalance(g.dataset.frequencies);
  EXPECT_EQ(s.pif, g.pif);
  EXPECT_EQ(s.rif, g.rif);
  EXPECT_EQ(g.dataset.size(), 120u);
  EXPECT_EQ(g.dataset.images.size(), 120u);
  EXPECT_EQ(g.dataset.feature_dim(), 8);
}

TEST(GenerateTest, MeetsImbalanceTargetsWithinTenPercent) {
  SceneSpec s;  // 12 classes, 2000 images of 32x32
  s.target_pif = 100.0;
  s.target_rif = 20.0;
  s.seed = 3;
  const auto g = generate(s);
  const auto t = stats::imbalance(stats::profile(g.dataset.labels, s.num_classes));
  EXPECT_NEAR(t.pif, 100.0, 10.0);
  EXPECT_NEAR(t.rif, 20.0, 2.0);
  // background in every image, every class present somewhere
  EXPECT_EQ(g.dataset.frequencies.region_freq[0], 2000u);
  for (auto f : g.dataset.frequencies.region_freq) EXPECT_GT(f, 0u);
}

TEST(GenerateTest, PlannedRegionCountsFollowPowerLaw) {
  SceneSpec s;
  s.num_images = 2000;
  s.target_rif = 15.0;
  const auto f = planned_region_counts(s);
  EXPECT_EQ(f.front(), 2000u);
  EXPECT_EQ(f.back(), static_cast<std::uint64_t>(std::llround(2000 / 15.0)));
  for (std::size_t i = 1; i < f.size(); ++i) EXPECT_LE(f[i], f[i - 1]);
}

TEST(GenerateTest, FullyCorrelatedRegions) {
  auto s = small_spec();
  s.confusable_pairs.clear();
  s.region_noise_share = 1.0;
  const auto g = generate(s);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& lab = g.dataset.labels[i];
    const auto& img = g.dataset.images[i];
    std::vector<const float*> first(6, nullptr);
    for (std::size_t p = 0; p < lab.size(); ++p) {
      const float* v = img.pixel(p);
      const float*& f = first[lab.labels[p]];
      if (!f) {
        f = v;
        continue;
      }
      for (int d = 0; d < img.dim; ++d) ASSERT_EQ(v[d], f[d]) << "image " << i << " pixel " << p;
    }
  }
}

TEST(GenerateTest, OneClassOneImage) {
  SceneSpec s;
  s.num_classes = 1;
  s.num_images = 1;
  s.target_pif = 1.0;
  s.target_rif = 1.0;
  s.height = 4;
  s.width = 4;
  s.feature_dim = 2;
  const auto g = generate(s);
  EXPECT_EQ(g.pif, 1.0);
  EXPECT_EQ(g.rif, 1.0);
  EXPECT_EQ(g.dataset.frequencies.pixel_freq[0], 16u);
}

TEST(GenerateTest, SeparableSceneIsNearlyPerfectForALinearRule) {
  auto s = small_spec();
  s.confusable_pairs.clear();
  s.prototype_separation = 20.0;
  s.noise_scale = 1.0;
  const auto g = generate(s);
  const Matrix proto = prototypes(s);
  // nearest prototype == argmax of x.p_k - |p_k|^2 / 2, a linear rule
  metrics::ConfusionMatrix cm(s.num_classes);
  for (std::size_t i = 0; i < g.dataset.size(); ++i) {
    const auto& img = g.dataset.images[i];
    SegMap pred(img.height, img.width);
    for (std::size_t p = 0; p < pred.size(); ++p) {
      const float* v = img.pixel(p);
      double best = -1e300;
      for (int k = 0; k < s.num_classes; ++k) {
        double score = -0.5 * proto.row(k).squaredNorm();
        for (int d = 0; d < img.dim; ++d) score += v[d] * proto(k, d);
        if (score > best) {
          best = score;
          pred.labels[p] = static_cast<Label>(k);
        }
      }
    }
    cm.accumulate(g.dataset.labels[i], pred);
  }
  EXPECT_GE(metrics::make_report(cm).miou, 0.99);
}

TEST(GenerateTest, PrototypesAreEquidistant) {
  SceneSpec s;
  s.num_classes = 5;
  s.feature_dim = 7;
  s.prototype_separation = 3.0;
  const Matrix p = prototypes(s);
  for (int a = 0; a < 5; ++a) {
    for (int b = a + 1; b < 5; ++b) EXPECT_NEAR((p.row(a) - p.row(b)).norm(), 3.0, 1e-12);
  }
}

TEST(GenerateTest, InvalidAndUnsatisfiableSpecs) {
  auto s = small_spec();
  s.region_noise_share = 1.5;
  EXPECT_THROW(generate(s), ConfigError);
  s = small_spec();
  s.confusable_pairs = {{1, 1, 0.2}};
  EXPECT_THROW(generate(s), ConfigError);
  s = small_spec();
  s.confusable_pairs = {{1, 2, 1.0}};
  EXPECT_THROW(generate(s), ConfigError);
  s = small_spec();
  s.target_rif = 1000.0;
  EXPECT_THROW(generate(s), ConfigError);
  // twelve classes cannot all be visible in a 2x2 image
  s = SceneSpec{};
  s.height = 2;
  s.width = 2;
  s.num_images = 20;
  s.target_rif = 2.0;
  EXPECT_THROW(generate(s), DataError);
}

// --- on-disk layout -------------------------------------------------------

TEST(DatasetIoTest, Pgm16RoundTripWithIgnore) {
  const fs::path p = scratch("a.pgm");
  SegMap m(3, 5, 7);
  m.at(1, 2) = kIgnoreLabel;
  m.at(2, 4) = 300;
  data::write_pgm16(p, m);
  EXPECT_EQ(data::read_pgm(p), m);
  fs::remove(p);
}

TEST(DatasetIoTest, ReadsEightBitPgmWithComment) {
  const fs::path p = scratch("b.pgm");
  {
    std::ofstream o(p, std::ios::binary);
    o << "P5\n# made by hand\n3 1\n255\n";
    o.put(0).put(2).put(1);
  }
  const auto m = data::read_pgm(p);
  EXPECT_EQ(m.labels, (std::vector<Label>{0, 2, 1}));
  fs::remove(p);
}

TEST(DatasetIoTest, MalformedPgmIsDataError) {
  const fs::path p = scratch("c.pgm");
  {
    std::ofstream o(p, std::ios::binary);
    o << "P5\n4 4\n65535\n";
    o.put(0);
  }
  EXPECT_THROW(data::read_pgm(p), DataError);
  {
    std::ofstream o(p, std::ios::binary);
    o << "P2\n1 1\n255\n0\n";
  }
  EXPECT_THROW(data::read_pgm(p), DataError);
  EXPECT_THROW(data::read_pgm(scratch("missing.pgm")), DataError);
  fs::remove(p);
}

TEST(DatasetIoTest, FeatureRoundTripAndBadMagic) {
  const fs::path p = scratch("f.bin");
  FeatureImage img(2, 3, 4);
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = 0.25f * i - 1.0f;
  data::write_features(p, img);
  EXPECT_EQ(data::read_features(p), img);
  {
    std::ofstream o(p, std::ios::binary);
    o << "XXXX";
  }
  EXPECT_THROW(data::read_features(p), DataError);
  fs::remove(p);
}

TEST(DatasetIoTest, DirectoryRoundTrip) {
  const fs::path dir = scratch("ds");
  auto s = small_spec();
  s.num_images = 30;
  s.target_rif = 3.0;
  const auto g = generate(s);
  data::write_dataset(dir, g.dataset);
  EXPECT_TRUE(fs::exists(dir / "labels" / "0000.pgm"));
  EXPECT_TRUE(fs::exists(dir / "features" / "0029.bin"));
  EXPECT_TRUE(fs::exists(dir / "meta.txt"));
  EXPECT_EQ(data::read_dataset(dir), g.dataset);
  EXPECT_THROW(data::write_dataset(dir, g.dataset), ConfigError);
  EXPECT_NO_THROW(data::write_dataset(dir, g.dataset, true));

  // labels that disagree with meta.txt are caught
  SegMap m = data::read_pgm(dir / "labels" / "0003.pgm");
  m.labels[0] = m.labels[0] == 1 ? 2 : 1;
  data::write_pgm16(dir / "labels" / "0003.pgm", m);
  EXPECT_THROW(data::read_dataset(dir), DataError);
  fs::remove_all(dir);
}

TEST(DatasetIoTest, LabelOnlyDirectoryInfersClassCount) {
  const fs::path dir = scratch("labels_only");
  fs::create_directories(dir / "labels");
  SegMap m(2, 2, 0);
  m.at(1, 1) = 4;
  data::write_pgm16(dir / "labels" / "0000.pgm", m);
  data::ReadOptions ro;
  ro.features = false;
  const auto ds = data::read_dataset(dir, ro);
  EXPECT_EQ(ds.num_classes, 5);
  EXPECT_EQ(ds.frequencies.pixel_freq[4], 1u);
  ro.num_classes = 8;
  EXPECT_EQ(data::read_dataset(dir, ro).num_classes, 8);
  fs::remove_all(dir);
}

TEST(DatasetIoTest, EmptyDirectoryHasNoImages) {
  const fs::path dir = scratch("empty");
  fs::create_directories(dir);
  try {
    data::read_dataset(dir);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no images"), std::string::npos);
  }
  fs::remove_all(dir);
}

}  // namespace
}  // namespace rrseg::synth
