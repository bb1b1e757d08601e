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

// On-disk dataset layout shared by generated and user-supplied data:
//
//   <dir>/labels/NNNN.pgm     16-bit binary PGM, one label per pixel,
//                             65535 = ignore
//   <dir>/features/NNNN.bin   "RRKF", u32 H, W, D, then H*W*D float32,
//                             all little-endian
//   <dir>/meta.txt            class count, shape and frequency table

#ifndef RRSEG_DATASET_HPP_
#define RRSEG_DATASET_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rrseg/common.hpp"
#include "rrseg/stats.hpp"

namespace rrseg::data {

struct Dataset {
  int num_classes = 0;
  std::vector<FeatureImage> images;  // may be empty for label-only data
  std::vector<SegMap> labels;
  stats::FrequencyTable frequencies;

  std::size_t size() const { return labels.size(); }
  int feature_dim() const { return images.empty() ? 0 : images.front().dim; }
  bool operator==(const Dataset&) const = default;
};

void write_pgm16(const std::filesystem::path& path, const SegMap& labels);
// Accepts 8-bit and 16-bit binary (P5) graymaps.
SegMap read_pgm(const std::filesystem::path& path);

void write_features(const std::filesystem::path& path, const FeatureImage& img);
FeatureImage read_features(const std::filesystem::path& path);

struct Meta {
  int num_classes = 0;
  int height = 0;
  int width = 0;
  int feature_dim = 0;
  stats::FrequencyTable frequencies;
};

void write_meta(const std::filesystem::path& path, const Meta& meta);
Meta read_meta(const std::filesystem::path& path);

// Zero-padded index stem, e.g. 7 -> "0007".
std::string stem(std::size_t index);

// Writes the layout above. Refuses to write into a non-empty directory
// unless `overwrite` is set.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds,
                   bool overwrite = false);

// Sorted label file names under <dir>/labels (relative, e.g.
// "labels/0000.pgm"). Throws DataError if the directory is missing.
std::vector<std::string> list_label_files(const std::filesystem::path& dir);

struct ReadOptions {
  bool features = true;
  // Overrides meta.txt; when neither is available the class count is
  // max(label) + 1.
  std::optional<int> num_classes;
};

// Throws DataError("no images ...") for an empty labels directory.
Dataset read_dataset(const std::filesystem::path& dir,
                     const ReadOptions& options = {});

}  // namespace rrseg::data

#endif  // RRSEG_DATASET_HPP_
