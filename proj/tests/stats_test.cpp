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

#include "rrseg/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "oracles.hpp"

namespace rrseg::stats {
namespace {

namespace fs = std::filesystem;

FrequencyTable brute_profile(const std::vector<SegMap>& maps, int c) {
  FrequencyTable t(c);
  t.num_images = maps.size();
  for (const auto& m : maps) {
    std::set<int> present;
    for (int r = 0; r < m.height; ++r) {
      for (int col = 0; col < m.width; ++col) {
        const Label l = m.at(r, col);
        if (l == kIgnoreLabel) continue;
        ++t.pixel_freq[l];
        present.insert(l);
      }
    }
    for (int k : present) ++t.region_freq[k];
  }
  return t;
}

TEST(ProfileTest, SingleRegionImage) {
  std::vector<SegMap> maps{SegMap(4, 5, 3)};
  const auto t = profile(maps, 5);
  EXPECT_EQ(t.pixel_freq[3], 20u);
  EXPECT_EQ(t.region_freq[3], 1u);
  EXPECT_EQ(t.num_images, 1u);
}

TEST(ProfileTest, PerImageCounting) {
  SegMap a(2, 2, 0), b(3, 1, 1);
  a.at(1, 1) = 1;
  b.at(0, 0) = 0;
  std::vector<SegMap> maps{a, b};
  const auto t = profile(maps, 3);
  EXPECT_EQ(t.region_freq, (std::vector<std::uint64_t>{2, 2, 0}));
  EXPECT_EQ(t.pixel_freq, (std::vector<std::uint64_t>{4, 3, 0}));
}

TEST(ProfileTest, MatchesBruteForceRecount) {
  std::mt19937_64 rng(41);
  std::vector<SegMap> maps;
  for (int i = 0; i < 50; ++i) maps.push_back(oracle::random_segmap(rng, 9, 11, 7, 0.05));
  // sparsify classes so region counts differ from image counts
  for (auto& m : maps) {
    for (auto& l : m.labels) {
      if (l != kIgnoreLabel && l > 3 && rng() % 3) l = 0;
    }
  }
  const auto oracle_t = brute_profile(maps, 7);
  EXPECT_EQ(profile(maps, 7), oracle_t);
  EXPECT_EQ(profile(maps, 7, kIgnoreLabel, 4), oracle_t);
}

TEST(ProfileTest, ShardAdditivity) {
  std::mt19937_64 rng(43);
  std::vector<SegMap> maps;
  for (int i = 0; i < 20; ++i) maps.push_back(oracle::random_segmap(rng, 5, 5, 4, 0.1));
  const std::span<const SegMap> all(maps);
  auto a = profile(all.subspan(0, 7), 4);
  const auto b = profile(all.subspan(7), 4);
  a.merge(b);
  EXPECT_EQ(a, profile(all, 4));
}

TEST(ProfileTest, OutOfRangeLabelIsAnError) {
  std::vector<SegMap> maps{SegMap(2, 2, 0), SegMap(2, 2, 9)};
  try {
    profile(maps, 3);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("image 1"), std::string::npos);
  }
}

TEST(ProfileTest, TableInvariants) {
  std::mt19937_64 rng(47);
  std::vector<SegMap> maps;
  for (int i = 0; i < 30; ++i) maps.push_back(oracle::random_segmap(rng, 3, 3, 12));
  const auto t = profile(maps, 12);
  for (int k = 0; k < 12; ++k) {
    EXPECT_LE(t.region_freq[k], t.num_images);
    if (t.region_freq[k] > 0) {
      EXPECT_GE(t.pixel_freq[k], t.region_freq[k]);
    }
  }
}

TEST(ImbalanceTest, UniformIsOne) {
  FrequencyTable t(3);
  t.pixel_freq = {10, 10, 10};
  t.region_freq = {4, 4, 4};
  t.num_images = 4;
  const auto s = imbalance(t);
  EXPECT_EQ(s.pif, 1.0);
  EXPECT_EQ(s.rif, 1.0);
}

TEST(ImbalanceTest, ReferenceRowShape) {
  FrequencyTable t(2);
  t.pixel_freq = {827, 1};
  t.region_freq = {282, 1};
  t.num_images = 282;
  const auto s = imbalance(t);
  EXPECT_EQ(s.pif, 827.0);
  EXPECT_EQ(s.rif, 282.0);
  EXPECT_EQ(s.pixel_max, 827u);
  EXPECT_EQ(s.region_min, 1u);
}

TEST(ImbalanceTest, ZeroClassesAreSkippedAndDegenerateIsUndefined) {
  const std::vector<std::uint64_t> a{0, 50, 5, 0}, b{0, 7, 0}, none{0, 0};
  EXPECT_EQ(*imbalance_factor(a), 10.0);
  EXPECT_FALSE(imbalance_factor(b).has_value());
  EXPECT_FALSE(imbalance_factor(none).has_value());
  FrequencyTable t(3);
  t.pixel_freq = {0, 7, 0};
  t.region_freq = {0, 1, 0};
  t.num_images = 1;
  EXPECT_THROW(imbalance(t), DataError);
}

TEST(PearsonTest, PerfectCorrelation) {
  const std::vector<double> x{1, 2, 3}, y{3, 2, 1};
  EXPECT_DOUBLE_EQ(*pearson(x, x), 1.0);
  EXPECT_DOUBLE_EQ(*pearson(x, y), -1.0);
}

TEST(PearsonTest, DegenerateInputs) {
  const std::vector<double> x{1, 2, 3}, c{4, 4, 4}, shortv{1}, two{1, 2};
  EXPECT_FALSE(pearson(x, c).has_value());
  EXPECT_THROW(pearson(shortv, shortv), PreconditionError);
  EXPECT_THROW(pearson(x, two), PreconditionError);
}

TEST(PearsonTest, MatchesExtendedPrecisionOracle) {
  std::mt19937_64 rng(53);
  for (int rep = 0; rep < 20; ++rep) {
    std::normal_distribution<double> n(rep, 1.0 + rep);
    std::vector<double> x(150), y(150);
    for (int i = 0; i < 150; ++i) {
      x[i] = n(rng);
      y[i] = 0.3 * x[i] + n(rng);
    }
    EXPECT_NEAR(*pearson(x, y), static_cast<double>(oracle::pearson_ld(x, y)), 1e-12);
  }
}

TEST(PearsonTest, SymmetricAndAffineInvariant) {
  std::mt19937_64 rng(59);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> x(40), y(40);
  for (int i = 0; i < 40; ++i) {
    x[i] = n(rng);
    y[i] = x[i] + n(rng);
  }
  const double r = *pearson(x, y);
  EXPECT_NEAR(*pearson(y, x), r, 1e-15);
  for (double a : {2.5, -0.7}) {
    std::vector<double> ax(x);
    for (auto& v : ax) v = a * v + 11.0;
    EXPECT_NEAR(*pearson(ax, y), std::copysign(1.0, a) * r, 1e-12);
  }
}

TEST(CorrelationTest, RawAndLogModesSkipInvalidAndZero) {
  const std::vector<double> accv{0.9, 0.5, 0.1, 0.7, 0.3};
  const bool valid[] = {true, true, true, false, true};
  const std::vector<std::uint64_t> freq{1000, 100, 10, 50, 0};
  const std::vector<double> a3{0.9, 0.5, 0.1};
  const std::vector<double> raw{1000, 100, 10}, lg{std::log(1000.0), std::log(100.0),
                                                   std::log(10.0)};
  EXPECT_NEAR(*accuracy_frequency_correlation(accv, valid, freq, FrequencyScale::kRaw),
              *pearson(a3, raw), 1e-15);
  EXPECT_NEAR(*accuracy_frequency_correlation(accv, valid, freq, FrequencyScale::kLog),
              *pearson(a3, lg), 1e-15);
  EXPECT_NEAR(*accuracy_frequency_correlation(accv, valid, freq, FrequencyScale::kLog), 1.0,
              1e-12);
}

TEST(TailTest, LowestPixelFrequencyClasses) {
  FrequencyTable t(6);
  t.pixel_freq = {600, 5, 300, 1, 40, 2};
  const auto tail = tail_classes(t, 0.5);
  EXPECT_EQ(tail, (std::vector<int>{1, 3, 5}));
  EXPECT_EQ(tail_classes(t, 0.01).size(), 1u);
}

TEST(CacheTest, RoundTripAndChecksum) {
  const fs::path p = fs::temp_directory_path() / "rrseg_cache_test.txt";
  FrequencyTable t(3);
  t.pixel_freq = {100, 20, 0};
  t.region_freq = {5, 3, 0};
  t.num_images = 5;
  const std::vector<std::string> files{"labels/0000.pgm", "labels/0001.pgm"};
  const std::vector<std::string> other{"labels/0000.pgm", "labels/0002.pgm"};
  const auto sum = file_list_checksum(files);
  EXPECT_NE(sum, file_list_checksum(other));
  write_frequency_cache(p, {t, sum});
  const auto back = read_frequency_cache(p);
  EXPECT_EQ(back.table, t);
  EXPECT_EQ(back.checksum, sum);
  fs::remove(p);
}

TEST(CacheTest, MalformedFileReportsLine) {
  const fs::path p = fs::temp_directory_path() / "rrseg_cache_bad.txt";
  {
    std::ofstream o(p);
    o << "rrseg-frequency-cache num_images 2 num_classes 2 checksum 0000000000000001\n"
      << "0 10 2\n"
      << "1 10 3\n";
  }
  try {
    read_frequency_cache(p);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  fs::remove(p);
}

}  // namespace
}  // namespace rrseg::stats
