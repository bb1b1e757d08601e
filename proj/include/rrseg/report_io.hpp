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

#ifndef RRSEG_REPORT_IO_HPP_
#define RRSEG_REPORT_IO_HPP_

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rrseg/metrics.hpp"
#include "rrseg/stats.hpp"

namespace rrseg::report {

// Full-precision (17 significant digits) rendering used for every numeric
// CSV cell.
std::string full(double v);
// Percentage with two decimals, for the display columns.
std::string pct(double fraction);

// Per-class report CSV. Columns:
//   class,name,pixel_freq,region_freq,tp,fn,fp,iou,acc,delta_iou,delta_acc,
//   iou_pct,acc_pct,delta_iou_pct,delta_acc_pct
// Rows follow `order` (all classes, index order when empty). IoU/Acc cells
// are blank for classes absent from the ground truth; delta cells are
// blank without a baseline.
struct ReportRows {
  const metrics::EvalReport* report = nullptr;
  const stats::FrequencyTable* frequencies = nullptr;  // optional
  const metrics::EvalReport* baseline = nullptr;       // optional
  std::span<const std::string> names;                  // optional
  std::span<const int> order;                          // optional
};

void write_report_csv(std::ostream& out, const ReportRows& rows);
void write_report_csv(const std::filesystem::path& path, const ReportRows& rows);

struct LoadedReport {
  metrics::EvalReport report;  // rebuilt from the tp/fn/fp columns
  std::optional<stats::FrequencyTable> frequencies;  // when the columns are filled
  std::vector<std::string> names;
};

// Throws DataError with "<file>:<line>:" context on malformed input.
LoadedReport read_report_csv(const std::filesystem::path& path);

}  // namespace rrseg::report

#endif  // RRSEG_REPORT_IO_HPP_
