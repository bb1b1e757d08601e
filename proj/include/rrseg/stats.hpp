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

#ifndef RRSEG_STATS_HPP_
#define RRSEG_STATS_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rrseg/common.hpp"

namespace rrseg::stats {

// Dataset class statistics. A "region" is the set of all pixels of one
// class inside one image, so region_freq[i] is the number of images in
// which class i occurs.
struct FrequencyTable {
  std::vector<std::uint64_t> pixel_freq;
  std::vector<std::uint64_t> region_freq;
  std::uint64_t num_images = 0;

  FrequencyTable() = default;
  explicit FrequencyTable(int num_classes)
      : pixel_freq(num_classes, 0), region_freq(num_classes, 0) {}

  int num_classes() const { return static_cast<int>(pixel_freq.size()); }

  // Adds one image's labels. Throws DataError on an out-of-range label.
  void add(const SegMap& labels, Label ignore_label = kIgnoreLabel);
  void merge(const FrequencyTable& other);

  bool operator==(const FrequencyTable&) const = default;
};

FrequencyTable profile(std::span<const SegMap> dataset, int num_classes,
                       Label ignore_label = kIgnoreLabel,
                       unsigned threads = 1);

struct ImbalanceSummary {
  double pif = 1.0;
  double rif = 1.0;
  std::uint64_t pixel_max = 0, pixel_min = 0;
  std::uint64_t region_max = 0, region_min = 0;
};

// N_max / N_min over the classes with a non-zero count; nullopt when fewer
// than two classes are populated.
std::optional<double> imbalance_factor(std::span<const std::uint64_t> counts);

// Throws DataError unless both domains have at least two populated classes.
ImbalanceSummary imbalance(const FrequencyTable& t);

// Pearson correlation coefficient. Throws PreconditionError on mismatched
// lengths or fewer than two samples; nullopt when either input is constant.
std::optional<double> pearson(std::span<const double> x,
                              std::span<const double> y);

enum class FrequencyScale { kRaw, kLog };

// Correlates per-class accuracy with class frequency. Classes with zero
// frequency or without a defined accuracy (`valid` false) are skipped.
std::optional<double> accuracy_frequency_correlation(
    std::span<const double> accuracy, std::span<const bool> valid,
    std::span<const std::uint64_t> frequency, FrequencyScale scale);

// Lowest `fraction` of classes by pixel frequency, ties broken towards the
// higher class index. Always contains at least one class.
std::vector<int> tail_classes(const FrequencyTable& t, double fraction);

// Frequency cache sidecar:
//   rrseg-frequency-cache num_images <N> num_classes <C> checksum <hex16>
//   <class_id> <pixel_count> <region_count>      (one line per class)
struct FrequencyCache {
  FrequencyTable table;
  std::uint64_t checksum = 0;
};

// FNV-1a 64 over the newline-joined file list, order as given.
std::uint64_t file_list_checksum(std::span<const std::string> files);

void write_frequency_cache(const std::filesystem::path& path,
                           const FrequencyCache& cache);
// Throws DataError with "<file>:<line>:" diagnostics on malformed input.
FrequencyCache read_frequency_cache(const std::filesystem::path& path);

}  // namespace rrseg::stats

#endif  // RRSEG_STATS_HPP_
