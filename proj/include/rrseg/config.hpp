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

#ifndef RRSEG_CONFIG_HPP_
#define RRSEG_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rrseg/losses.hpp"
#include "rrseg/model.hpp"
#include "rrseg/synthdata.hpp"

namespace rrseg::config {

// Flat `key = value` file with `[section]` headers. `#` and `;` start a
// comment line. Every entry must be consumed by the reader, otherwise
// finish() reports it as unknown.
class FlatConfig {
 public:
  static FlatConfig parse(std::istream& in, const std::string& source);
  static FlatConfig load(const std::filesystem::path& path);

  // Removes and returns the value of section.key.
  std::optional<std::string> take(const std::string& section, const std::string& key);

  std::optional<double> take_double(const std::string& section, const std::string& key);
  std::optional<long long> take_int(const std::string& section, const std::string& key);
  std::optional<bool> take_bool(const std::string& section, const std::string& key);
  std::optional<std::vector<double>> take_doubles(const std::string& section,
                                                  const std::string& key);

  // Throws ConfigError naming the first unconsumed key.
  void finish() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::string source_;
  std::map<std::string, Entry> entries_;  // "section.key"

  [[noreturn]] void bad(const std::string& section, const std::string& key,
                        const Entry& e, const std::string& what) const;
  std::optional<Entry> take_entry(const std::string& section, const std::string& key);
};

struct ExperimentConfig {
  synth::SceneSpec scene;
  model::TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<losses::Variant> variants{
      losses::Variant::kPixelCe, losses::Variant::kReweight,
      losses::Variant::kBalancedPixel, losses::Variant::kRegionRebalance};
  // Non-empty switches to the lambda ablation: the baseline plus one
  // region_rebalance run per listed lambda.
  std::vector<double> lambda_grid;
  double tail_fraction = 0.5;
  // Optional dataset directory used instead of generating [scene].
  std::optional<std::filesystem::path> dataset;
};

// Defaults for the desk-scale reproduction: 12 classes, PIF 100, RIF 15,
// 2000 images of 32x32, three head/tail confusable pairs, three seeds.
ExperimentConfig default_experiment_config();

// Starts from default_experiment_config() and applies the file. Sections:
// [scene], [train], [loss], [experiment]. Throws ConfigError.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig parse_experiment_config(std::istream& in, const std::string& source);

// Inverse of the parser, for recording the effective configuration.
std::string to_text(const ExperimentConfig& cfg);

}  // namespace rrseg::config

#endif  // RRSEG_CONFIG_HPP_
