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

#include "rrseg/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace rrseg::report {

namespace {

constexpr const char* kHeader =
    "class,name,pixel_freq,region_freq,tp,fn,fp,iou,acc,delta_iou,delta_acc,"
    "iou_pct,acc_pct,delta_iou_pct,delta_acc_pct";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  for (char c : line) {
    if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back().push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string pct(double fraction) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
  return buf;
}

void write_report_csv(std::ostream& out, const ReportRows& rows) {
  const metrics::EvalReport& r = *rows.report;
  const int c = r.num_classes();
  std::vector<int> order(rows.order.begin(), rows.order.end());
  if (order.empty()) {
    order.resize(c);
    std::iota(order.begin(), order.end(), 0);
  }
  if (rows.baseline && rows.baseline->num_classes() != c) {
    throw PreconditionError("baseline report differs in class count");
  }
  if (rows.frequencies && rows.frequencies->num_classes() != c) {
    throw PreconditionError("frequency table differs in class count");
  }
  out << kHeader << "\n";
  for (int k : order) {
    const auto& cc = r.counts[k];
    out << k << ",";
    if (static_cast<std::size_t>(k) < rows.names.size()) out << rows.names[k];
    out << ",";
    if (rows.frequencies) {
      out << rows.frequencies->pixel_freq[k] << "," << rows.frequencies->region_freq[k];
    } else {
      out << ",";
    }
    out << "," << cc.tp << "," << cc.fn << "," << cc.fp << ",";
    const bool valid = r.valid[k];
    const bool has_delta = rows.baseline && valid && rows.baseline->valid[k];
    const double d_iou = has_delta ? r.per_class_iou[k] - rows.baseline->per_class_iou[k] : 0.0;
    const double d_acc = has_delta ? r.per_class_acc[k] - rows.baseline->per_class_acc[k] : 0.0;
    if (valid) out << full(r.per_class_iou[k]) << "," << full(r.per_class_acc[k]);
    else out << ",";
    out << ",";
    if (has_delta) out << full(d_iou) << "," << full(d_acc);
    else out << ",";
    out << ",";
    if (valid) out << pct(r.per_class_iou[k]) << "," << pct(r.per_class_acc[k]);
    else out << ",";
    out << ",";
    if (has_delta) out << pct(d_iou) << "," << pct(d_acc);
    else out << ",";
    out << "\n";
  }
}

void write_report_csv(const std::filesystem::path& path, const ReportRows& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_report_csv(out, rows);
  if (!out) throw DataError("error writing " + path.string());
}

LoadedReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  int lineno = 1;
  auto fail = [&](const std::string& m) {
    return DataError(path.string() + ":" + std::to_string(lineno) + ": " + m);
  };
  std::string line;
  if (!std::getline(in, line)) throw fail("empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw fail("unexpected header");

  struct Row {
    metrics::ClassCounts counts;
    std::string name;
    std::optional<std::uint64_t> px, rg;
  };
  std::map<int, Row> rows;
  auto parse_u64 = [&](const std::string& s, const char* what) {
    try {
      std::size_t used = 0;
      if (s.empty() || s[0] == '-') throw std::invalid_argument(s);
      const auto v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
      throw fail(std::string("bad ") + what + " '" + s + "'");
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 15) throw fail("expected 15 columns, found " + std::to_string(f.size()));
    const int k = static_cast<int>(parse_u64(f[0], "class index"));
    if (rows.count(k)) throw fail("duplicate class " + std::to_string(k));
    Row row;
    row.name = f[1];
    if (!f[2].empty()) row.px = parse_u64(f[2], "pixel_freq");
    if (!f[3].empty()) row.rg = parse_u64(f[3], "region_freq");
    row.counts = {parse_u64(f[4], "tp"), parse_u64(f[5], "fn"), parse_u64(f[6], "fp")};
    rows.emplace(k, std::move(row));
  }
  if (rows.empty()) throw fail("no class rows");
  const int c = static_cast<int>(rows.size());
  if (rows.rbegin()->first != c - 1) throw fail("class indices are not 0..C-1");

  LoadedReport out;
  std::vector<metrics::ClassCounts> counts(c);
  out.names.resize(c);
  bool have_freq = true;
  stats::FrequencyTable t(c);
  for (const auto& [k, row] : rows) {
    counts[k] = row.counts;
    out.names[k] = row.name;
    if (row.px && row.rg) {
      t.pixel_freq[k] = *row.px;
      t.region_freq[k] = *row.rg;
    } else {
      have_freq = false;
    }
  }
  out.report = metrics::make_report(std::move(counts));
  if (have_freq) out.frequencies = std::move(t);
  return out;
}

}  // namespace rrseg::report
