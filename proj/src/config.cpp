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

#include "rrseg/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>


namespace rrseg::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

FlatConfig FlatConfig::parse(std::istream& in, const std::string& source) {
  FlatConfig cfg;
  cfg.source_ = source;
  std::string section;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    // '#' starts a comment anywhere; no value needs the character.
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty() || line[0] == ';') continue;
    auto fail = [&](const std::string& m) {
      return ConfigError(source + ":" + std::to_string(lineno) + ": " + m);
    };
    if (line.front() == '[') {
      if (line.back() != ']') throw fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw fail("empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fail("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw fail("empty key");
    if (section.empty()) throw fail("key '" + key + "' appears before any [section]");
    const std::string full = section + "." + key;
    if (cfg.entries_.count(full)) throw fail("duplicate key '" + full + "'");
    cfg.entries_[full] = {trim(line.substr(eq + 1)), lineno};
  }
  return cfg;
}

FlatConfig FlatConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse(in, path.string());
}

void FlatConfig::bad(const std::string& section, const std::string& key, const Entry& e,
                     const std::string& what) const {
  throw ConfigError(source_ + ":" + std::to_string(e.line) + ": " + section + "." + key +
                    ": " + what + " (got '" + e.value + "')");
}

std::optional<FlatConfig::Entry> FlatConfig::take_entry(const std::string& section,
                                                        const std::string& key) {
  const auto it = entries_.find(section + "." + key);
  if (it == entries_.end()) return std::nullopt;
  Entry e = it->second;
  entries_.erase(it);
  return e;
}

std::optional<std::string> FlatConfig::take(const std::string& section,
                                            const std::string& key) {
  const auto e = take_entry(section, key);
  if (!e) return std::nullopt;
  return e->value;
}

std::optional<double> FlatConfig::take_double(const std::string& section,
                                              const std::string& key) {
  const auto e = take_entry(section, key);
  if (!e) return std::nullopt;
  double v = 0.0;
  if (!parse_double(e->value, v)) bad(section, key, *e, "expected a number");
  return v;
}

std::optional<long long> FlatConfig::take_int(const std::string& section,
                                              const std::string& key) {
  const auto e = take_entry(section, key);
  if (!e) return std::nullopt;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(e->value, &used);
    if (used != e->value.size()) throw std::invalid_argument(e->value);
    return v;
  } catch (const std::exception&) {
    bad(section, key, *e, "expected an integer");
  }
}

std::optional<bool> FlatConfig::take_bool(const std::string& section,
                                          const std::string& key) {
  const auto e = take_entry(section, key);
  if (!e) return std::nullopt;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  bad(section, key, *e, "expected true or false");
}

std::optional<std::vector<double>> FlatConfig::take_doubles(const std::string& section,
                                                            const std::string& key) {
  const auto e = take_entry(section, key);
  if (!e) return std::nullopt;
  std::vector<double> out;
  for (const auto& item : split_list(e->value)) {
    double v = 0.0;
    if (!parse_double(item, v)) bad(section, key, *e, "expected a comma-separated number list");
    out.push_back(v);
  }
  return out;
}

void FlatConfig::finish() const {
  if (entries_.empty()) return;
  const auto& [key, e] = *std::min_element(
      entries_.begin(), entries_.end(),
      [](const auto& a, const auto& b) { return a.second.line < b.second.line; });
  throw ConfigError(source_ + ":" + std::to_string(e.line) + ": unknown key '" + key + "'");
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  auto& s = cfg.scene;
  s.num_classes = 12;
  s.height = 32;
  s.width = 32;
  s.num_images = 2000;
  s.target_pif = 100.0;
  s.target_rif = 15.0;
  s.feature_dim = 16;
  s.prototype_separation = 4.0;
  s.noise_scale = 0.5 * s.prototype_separation;
  s.region_noise_share = 0.5;
  // Each of the three most frequent foreground classes shares local
  // appearance with one of the three rarest classes.
  s.confusable_pairs = {{1, 11, 0.8}, {2, 10, 0.8}, {3, 9, 0.8}};
  s.seed = 1;
  cfg.seeds = {100, 101, 102};

  auto& t = cfg.train;
  t.lr0 = 1e-2;
  t.power = 0.9;
  t.total_iters = 600;
  t.batch_size = 8;
  t.weight_decay = 1e-4;
  t.momentum = 0.9;
  t.hidden_dim = 32;
  t.mean_filter = true;
  t.val_fraction = 0.2;
  t.split_seed = s.seed;
  t.loss.lambda = 0.3;
  return cfg;
}

ExperimentConfig parse_experiment_config(std::istream& in, const std::string& source) {
  FlatConfig f = FlatConfig::parse(in, source);
  ExperimentConfig cfg = default_experiment_config();

  auto& s = cfg.scene;
  if (auto v = f.take_int("scene", "num_classes")) s.num_classes = static_cast<int>(*v);
  if (auto v = f.take_int("scene", "height")) s.height = static_cast<int>(*v);
  if (auto v = f.take_int("scene", "width")) s.width = static_cast<int>(*v);
  if (auto v = f.take_int("scene", "num_images")) s.num_images = static_cast<int>(*v);
  if (auto v = f.take_double("scene", "head_tail_exponent")) s.head_tail_exponent = *v;
  if (auto v = f.take_double("scene", "target_pif")) s.target_pif = *v;
  if (auto v = f.take_double("scene", "target_rif")) s.target_rif = *v;
  if (auto v = f.take_int("scene", "feature_dim")) s.feature_dim = static_cast<int>(*v);
  if (auto v = f.take_double("scene", "prototype_separation")) s.prototype_separation = *v;
  if (auto v = f.take_double("scene", "region_noise_share")) s.region_noise_share = *v;
  if (auto v = f.take_double("scene", "noise_scale")) s.noise_scale = *v;
  if (auto v = f.take_double("scene", "tolerance")) s.tolerance = *v;
  if (auto v = f.take_int("scene", "max_attempts")) s.max_attempts = static_cast<int>(*v);
  bool split_seed_set = false;
  if (auto v = f.take_int("scene", "seed")) s.seed = static_cast<std::uint64_t>(*v);
  if (auto v = f.take("scene", "confusable_pairs")) {
    // a:b:overlap, comma separated
    s.confusable_pairs.clear();
    for (const auto& item : split_list(*v)) {
      ConfigError err(source + ": scene.confusable_pairs: expected a:b:overlap items, got '" +
                      item + "'");
      std::istringstream is(item);
      std::string a, b, o;
      if (!std::getline(is, a, ':') || !std::getline(is, b, ':') || !std::getline(is, o)) {
        throw err;
      }
      double da = 0, db = 0, ov = 0;
      if (!parse_double(trim(a), da) || !parse_double(trim(b), db) ||
          !parse_double(trim(o), ov) || da != std::floor(da) || db != std::floor(db)) {
        throw err;
      }
      s.confusable_pairs.push_back({static_cast<int>(da), static_cast<int>(db), ov});
    }
  }

  auto& t = cfg.train;
  if (auto v = f.take_double("train", "lr0")) t.lr0 = *v;
  if (auto v = f.take_double("train", "power")) t.power = *v;
  if (auto v = f.take_int("train", "total_iters")) t.total_iters = static_cast<int>(*v);
  if (auto v = f.take_int("train", "batch_size")) t.batch_size = static_cast<int>(*v);
  if (auto v = f.take_double("train", "weight_decay")) t.weight_decay = *v;
  if (auto v = f.take_double("train", "momentum")) t.momentum = *v;
  if (auto v = f.take_int("train", "hidden_dim")) t.hidden_dim = static_cast<int>(*v);
  if (auto v = f.take_bool("train", "mean_filter")) t.mean_filter = *v;
  if (auto v = f.take_double("train", "val_fraction")) t.val_fraction = *v;
  if (auto v = f.take_int("train", "seed")) t.seed = static_cast<std::uint64_t>(*v);
  if (auto v = f.take_int("train", "split_seed")) {
    t.split_seed = static_cast<std::uint64_t>(*v);
    split_seed_set = true;
  }
  if (!split_seed_set) t.split_seed = s.seed;

  auto& l = t.loss;
  if (auto v = f.take("loss", "variant")) l.variant = losses::parse_variant(*v);
  if (auto v = f.take_double("loss", "lambda")) l.lambda = *v;
  if (auto v = f.take_doubles("loss", "priors")) l.priors = *v;
  if (auto v = f.take_double("loss", "epsilon")) l.epsilon = *v;
  if (auto v = f.take_int("loss", "ignore_label")) {
    if (*v < 0 || *v > kIgnoreLabel) throw ConfigError(source + ": loss.ignore_label out of range");
    l.ignore_label = static_cast<Label>(*v);
  }
  if (auto v = f.take("loss", "prior_source")) {
    if (*v == "pixel") l.prior_source = losses::PriorSource::kPixel;
    else if (*v == "region") l.prior_source = losses::PriorSource::kRegion;
    else throw ConfigError(source + ": loss.prior_source must be pixel or region");
  }
  if (auto v = f.take("loss", "zero_prior")) {
    if (*v == "drop") l.zero_prior = losses::ZeroPriorPolicy::kDrop;
    else if (*v == "epsilon") l.zero_prior = losses::ZeroPriorPolicy::kEpsilon;
    else throw ConfigError(source + ": loss.zero_prior must be drop or epsilon");
  }

  if (auto v = f.take_doubles("experiment", "seeds")) {
    cfg.seeds.clear();
    for (double x : *v) {
      if (x < 0 || x != std::floor(x)) {
        throw ConfigError(source + ": experiment.seeds must be non-negative integers");
      }
      cfg.seeds.push_back(static_cast<std::uint64_t>(x));
    }
  }
  if (auto v = f.take("experiment", "variants")) {
    cfg.variants.clear();
    for (const auto& item : split_list(*v)) cfg.variants.push_back(losses::parse_variant(item));
  }
  if (auto v = f.take_doubles("experiment", "lambda_grid")) cfg.lambda_grid = *v;
  if (auto v = f.take_double("experiment", "tail_fraction")) cfg.tail_fraction = *v;
  if (auto v = f.take("experiment", "dataset")) cfg.dataset = *v;
  f.finish();

  synth::validate(s);
  model::validate(t);
  losses::validate(l, s.num_classes);
  if (cfg.seeds.empty()) throw ConfigError(source + ": experiment.seeds is empty");
  if (cfg.variants.empty() && cfg.lambda_grid.empty()) {
    throw ConfigError(source + ": nothing to run (no variants and no lambda grid)");
  }
  for (double lam : cfg.lambda_grid) {
    if (lam < 0.0) throw ConfigError(source + ": experiment.lambda_grid values must be >= 0");
  }
  if (!(cfg.tail_fraction > 0.0 && cfg.tail_fraction <= 1.0)) {
    throw ConfigError(source + ": experiment.tail_fraction must lie in (0, 1]");
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_experiment_config(in, path.string());
}

std::string to_text(const ExperimentConfig& cfg) {
  // Shortest text that reads back to the same double.
  const auto full = [](double v) {
    char buf[32];
    return std::string(buf, std::to_chars(buf, buf + sizeof(buf), v).ptr);
  };
  std::ostringstream o;
  const auto& s = cfg.scene;
  o << "[scene]\n"
    << "num_classes = " << s.num_classes << "\n"
    << "height = " << s.height << "\n"
    << "width = " << s.width << "\n"
    << "num_images = " << s.num_images << "\n"
    << "head_tail_exponent = " << full(s.head_tail_exponent) << "\n"
    << "target_pif = " << full(s.target_pif) << "\n"
    << "target_rif = " << full(s.target_rif) << "\n"
    << "feature_dim = " << s.feature_dim << "\n"
    << "prototype_separation = " << full(s.prototype_separation) << "\n"
    << "region_noise_share = " << full(s.region_noise_share) << "\n"
    << "noise_scale = " << full(s.noise_scale) << "\n"
    << "tolerance = " << full(s.tolerance) << "\n"
    << "max_attempts = " << s.max_attempts << "\n"
    << "seed = " << s.seed << "\n"
    << "confusable_pairs = ";
  for (std::size_t i = 0; i < s.confusable_pairs.size(); ++i) {
    const auto& p = s.confusable_pairs[i];
    o << (i ? ", " : "") << p.a << ":" << p.b << ":" << full(p.overlap);
  }
  const auto& t = cfg.train;
  o << "\n\n[train]\n"
    << "lr0 = " << full(t.lr0) << "\n"
    << "power = " << full(t.power) << "\n"
    << "total_iters = " << t.total_iters << "\n"
    << "batch_size = " << t.batch_size << "\n"
    << "weight_decay = " << full(t.weight_decay) << "\n"
    << "momentum = " << full(t.momentum) << "\n"
    << "hidden_dim = " << t.hidden_dim << "\n"
    << "mean_filter = " << (t.mean_filter ? "true" : "false") << "\n"
    << "val_fraction = " << full(t.val_fraction) << "\n"
    << "seed = " << t.seed << "\n"
    << "split_seed = " << t.split_seed << "\n";
  const auto& l = t.loss;
  o << "\n[loss]\n"
    << "variant = " << losses::to_string(l.variant) << "\n"
    << "lambda = " << full(l.lambda) << "\n"
    << "epsilon = " << full(l.epsilon) << "\n"
    << "ignore_label = " << l.ignore_label << "\n"
    << "prior_source = " << (l.prior_source == losses::PriorSource::kPixel ? "pixel" : "region")
    << "\n"
    << "zero_prior = " << (l.zero_prior == losses::ZeroPriorPolicy::kDrop ? "drop" : "epsilon")
    << "\n";
  if (!l.priors.empty()) {
    o << "priors = ";
    for (std::size_t i = 0; i < l.priors.size(); ++i) o << (i ? ", " : "") << full(l.priors[i]);
    o << "\n";
  }
  o << "\n[experiment]\nseeds = ";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) o << (i ? ", " : "") << cfg.seeds[i];
  o << "\nvariants = ";
  for (std::size_t i = 0; i < cfg.variants.size(); ++i) {
    o << (i ? ", " : "") << losses::to_string(cfg.variants[i]);
  }
  o << "\n";
  if (!cfg.lambda_grid.empty()) {
    o << "lambda_grid = ";
    for (std::size_t i = 0; i < cfg.lambda_grid.size(); ++i) {
      o << (i ? ", " : "") << full(cfg.lambda_grid[i]);
    }
    o << "\n";
  }
  o << "tail_fraction = " << full(cfg.tail_fraction) << "\n";
  if (cfg.dataset) o << "dataset = " << cfg.dataset->string() << "\n";
  return o.str();
}

}  // namespace rrseg::config
