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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace rrseg::stats {

void FrequencyTable::add(const SegMap& labels, Label ignore_label) {
  const int c = num_classes();
  std::vector<std::uint64_t> local(c, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Label l = labels.labels[i];
    if (l == ignore_label) continue;
    if (l >= c) {
      throw DataError("label " + std::to_string(l) + " out of range at (row " +
                      std::to_string(i / labels.width) + ", col " +
                      std::to_string(i % labels.width) + ")");
    }
    ++local[l];
  }
  for (int k = 0; k < c; ++k) {
    pixel_freq[k] += local[k];
    if (local[k] > 0) ++region_freq[k];
  }
  ++num_images;
}

void FrequencyTable::merge(const FrequencyTable& other) {
  if (other.num_classes() != num_classes()) {
    throw PreconditionError("cannot merge frequency tables of different size");
  }
  for (int k = 0; k < num_classes(); ++k) {
    pixel_freq[k] += other.pixel_freq[k];
    region_freq[k] += other.region_freq[k];
  }
  num_images += other.num_images;
}

FrequencyTable profile(std::span<const SegMap> dataset, int num_classes,
                       Label ignore_label, unsigned threads) {
  if (num_classes <= 0) throw PreconditionError("num_classes must be positive");
  const std::size_t n = dataset.size();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  std::vector<FrequencyTable> shards(threads, FrequencyTable(num_classes));
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](unsigned t) {
    try {
      for (std::size_t i = n * t / threads; i < n * (t + 1) / threads; ++i) {
        try {
          shards[t].add(dataset[i], ignore_label);
        } catch (const DataError& e) {
          throw DataError("image " + std::to_string(i) + ": " + e.what());
        }
      }
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  FrequencyTable out(num_classes);
  for (const auto& s : shards) out.merge(s);
  return out;
}

std::optional<double> imbalance_factor(std::span<const std::uint64_t> counts) {
  std::uint64_t hi = 0, lo = 0;
  int populated = 0;
  for (std::uint64_t v : counts) {
    if (v == 0) continue;
    hi = populated == 0 ? v : std::max(hi, v);
    lo = populated == 0 ? v : std::min(lo, v);
    ++populated;
  }
  if (populated < 2) return std::nullopt;
  return static_cast<double>(hi) / static_cast<double>(lo);
}

namespace {

std::pair<std::uint64_t, std::uint64_t> nonzero_extrema(
    const std::vector<std::uint64_t>& v) {
  std::uint64_t hi = 0, lo = 0;
  for (std::uint64_t x : v) {
    if (x == 0) continue;
    hi = std::max(hi, x);
    lo = lo == 0 ? x : std::min(lo, x);
  }
  return {hi, lo};
}

}  // namespace

ImbalanceSummary imbalance(const FrequencyTable& t) {
  const auto pif = imbalance_factor(t.pixel_freq);
  const auto rif = imbalance_factor(t.region_freq);
  if (!pif || !rif) {
    throw DataError("imbalance factor needs at least two populated classes");
  }
  ImbalanceSummary s;
  s.pif = *pif;
  s.rif = *rif;
  std::tie(s.pixel_max, s.pixel_min) = nonzero_extrema(t.pixel_freq);
  std::tie(s.region_max, s.region_min) = nonzero_extrema(t.region_freq);
  return s;
}

std::optional<double> pearson(std::span<const double> x,
                              std::span<const double> y) {
  if (x.size() != y.size()) {
    throw PreconditionError("pearson: inputs differ in length");
  }
  const std::size_t n = x.size();
  if (n < 2) throw PreconditionError("pearson: need at least two samples");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  const double rho = sxy / (std::sqrt(sxx) * std::sqrt(syy));
  return std::clamp(rho, -1.0, 1.0);
}

std::optional<double> accuracy_frequency_correlation(
    std::span<const double> accuracy, std::span<const bool> valid,
    std::span<const std::uint64_t> frequency, FrequencyScale scale) {
  if (accuracy.size() != valid.size() || accuracy.size() != frequency.size()) {
    throw PreconditionError("accuracy and frequency vectors differ in length");
  }
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < accuracy.size(); ++k) {
    if (!valid[k] || frequency[k] == 0) continue;
    const double f = static_cast<double>(frequency[k]);
    xs.push_back(scale == FrequencyScale::kLog ? std::log(f) : f);
    ys.push_back(accuracy[k]);
  }
  if (xs.size() < 2) return std::nullopt;
  return pearson(xs, ys);
}

std::vector<int> tail_classes(const FrequencyTable& t, double fraction) {
  const int c = t.num_classes();
  if (c == 0) return {};
  std::vector<int> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return t.pixel_freq[a] > t.pixel_freq[b];
  });
  const int n_tail = std::clamp(
      static_cast<int>(std::lround(fraction * c)), 1, c);
  std::vector<int> tail(order.end() - n_tail, order.end());
  std::sort(tail.begin(), tail.end());
  return tail;
}

std::uint64_t file_list_checksum(std::span<const std::string> files) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ull;
  };
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (i > 0) mix('\n');
    for (unsigned char c : files[i]) mix(c);
  }
  return h;
}

void write_frequency_cache(const std::filesystem::path& path,
                           const FrequencyCache& cache) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(cache.checksum));
  const FrequencyTable& t = cache.table;
  out << "rrseg-frequency-cache num_images " << t.num_images << " num_classes "
      << t.num_classes() << " checksum " << hex << "\n";
  for (int k = 0; k < t.num_classes(); ++k) {
    out << k << " " << t.pixel_freq[k] << " " << t.region_freq[k] << "\n";
  }
  if (!out) throw DataError("error writing " + path.string());
}

FrequencyCache read_frequency_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  auto fail = [&](int line, const std::string& msg) -> DataError {
    return DataError(path.string() + ":" + std::to_string(line) + ": " + msg);
  };
  std::string line;
  if (!std::getline(in, line)) throw fail(1, "missing header");
  std::istringstream hs(line);
  std::string magic, k1, k2, k3, hex;
  std::uint64_t num_images = 0;
  int num_classes = 0;
  if (!(hs >> magic >> k1 >> num_images >> k2 >> num_classes >> k3 >> hex) ||
      magic != "rrseg-frequency-cache" || k1 != "num_images" ||
      k2 != "num_classes" || k3 != "checksum" || num_classes <= 0) {
    throw fail(1, "malformed header");
  }
  FrequencyCache cache;
  try {
    std::size_t used = 0;
    cache.checksum = std::stoull(hex, &used, 16);
    if (used != hex.size()) throw std::invalid_argument(hex);
  } catch (const std::exception&) {
    throw fail(1, "malformed checksum '" + hex + "'");
  }
  cache.table = FrequencyTable(num_classes);
  cache.table.num_images = num_images;
  for (int k = 0; k < num_classes; ++k) {
    const int lineno = k + 2;
    if (!std::getline(in, line)) throw fail(lineno, "missing class line");
    std::istringstream ls(line);
    long long id = -1;
    std::uint64_t px = 0, rg = 0;
    std::string extra;
    if (!(ls >> id >> px >> rg) || (ls >> extra)) {
      throw fail(lineno, "expected '<class_id> <pixel_count> <region_count>'");
    }
    if (id != k) throw fail(lineno, "expected class id " + std::to_string(k));
    if (rg > num_images) throw fail(lineno, "region count exceeds image count");
    if (rg > px) throw fail(lineno, "region count exceeds pixel count");
    cache.table.pixel_freq[k] = px;
    cache.table.region_freq[k] = rg;
  }
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      throw fail(num_classes + 2, "trailing content");
    }
  }
  return cache;
}

}  // namespace rrseg::stats
