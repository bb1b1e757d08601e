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

#include "rrseg/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace fs = std::filesystem;

namespace rrseg::data {

namespace {

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("error writing " + path.string());
}

}  // namespace

void write_pgm16(const fs::path& path, const SegMap& labels) {
  std::string bytes = "P5\n" + std::to_string(labels.width) + " " +
                      std::to_string(labels.height) + "\n65535\n";
  bytes.reserve(bytes.size() + 2 * labels.size());
  for (Label l : labels.labels) {
    bytes.push_back(static_cast<char>(l >> 8));  // PGM samples are big-endian
    bytes.push_back(static_cast<char>(l & 0xff));
  }
  write_bytes(path, bytes);
}

SegMap read_pgm(const fs::path& path) {
  const auto bytes = slurp(path);
  std::size_t pos = 0;
  // Header tokens are separated by whitespace; '#' starts a comment.
  auto token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(bytes[pos++]);
    return t;
  };
  auto number = [&](const char* what) {
    const std::string t = token();
    if (t.empty() || !std::all_of(t.begin(), t.end(), ::isdigit)) {
      throw DataError(path.string() + ": bad PGM " + what + " '" + t + "'");
    }
    return std::stol(t);
  };
  if (token() != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
  const long w = number("width");
  const long h = number("height");
  const long maxval = number("maxval");
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw DataError(path.string() + ": invalid PGM header");
  }
  ++pos;  // single whitespace before the raster
  const std::size_t bpp = maxval < 256 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(w) * h * bpp;
  if (bytes.size() < pos + need) {
    throw DataError(path.string() + ": truncated raster (expected " +
                    std::to_string(need) + " bytes)");
  }
  SegMap m(static_cast<int>(h), static_cast<int>(w));
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.labels[i] = bpp == 1 ? bytes[pos + i]
                           : static_cast<Label>((bytes[pos + 2 * i] << 8) |
                                                bytes[pos + 2 * i + 1]);
  }
  return m;
}

void write_features(const fs::path& path, const FeatureImage& img) {
  std::string bytes = "RRKF";
  put_u32(bytes, static_cast<std::uint32_t>(img.height));
  put_u32(bytes, static_cast<std::uint32_t>(img.width));
  put_u32(bytes, static_cast<std::uint32_t>(img.dim));
  bytes.reserve(bytes.size() + 4 * img.values.size());
  for (float f : img.values) put_u32(bytes, std::bit_cast<std::uint32_t>(f));
  write_bytes(path, bytes);
}

FeatureImage read_features(const fs::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "RRKF", 4) != 0) {
    throw DataError(path.string() + ": missing RRKF header");
  }
  const std::uint32_t h = get_u32(&bytes[4]);
  const std::uint32_t w = get_u32(&bytes[8]);
  const std::uint32_t d = get_u32(&bytes[12]);
  const std::size_t count = static_cast<std::size_t>(h) * w * d;
  if (h == 0 || w == 0 || d == 0 || bytes.size() != 16 + 4 * count) {
    throw DataError(path.string() + ": payload size does not match " +
                    std::to_string(h) + "x" + std::to_string(w) + "x" +
                    std::to_string(d));
  }
  FeatureImage img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(d));
  for (std::size_t i = 0; i < count; ++i) {
    img.values[i] = std::bit_cast<float>(get_u32(&bytes[16 + 4 * i]));
  }
  return img;
}

void write_meta(const fs::path& path, const Meta& meta) {
  std::ostringstream out;
  const auto& t = meta.frequencies;
  out << "rrseg-dataset 1\n"
      << "num_images " << t.num_images << "\n"
      << "num_classes " << meta.num_classes << "\n"
      << "height " << meta.height << "\n"
      << "width " << meta.width << "\n"
      << "feature_dim " << meta.feature_dim << "\n"
      << "class pixel_count region_count\n";
  for (int k = 0; k < t.num_classes(); ++k) {
    out << k << " " << t.pixel_freq[k] << " " << t.region_freq[k] << "\n";
  }
  write_bytes(path, out.str());
}

Meta read_meta(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  int lineno = 0;
  std::string line;
  auto fail = [&](const std::string& msg) {
    return DataError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
  };
  auto next = [&]() {
    ++lineno;
    if (!std::getline(in, line)) throw fail("unexpected end of file");
    return std::istringstream(line);
  };
  auto keyed = [&](const char* key) {
    auto ls = next();
    std::string k;
    long long v = -1;
    if (!(ls >> k >> v) || k != key || v < 0) {
      throw fail(std::string("expected '") + key + " <value>'");
    }
    return v;
  };
  {
    auto ls = next();
    std::string magic;
    int version = 0;
    if (!(ls >> magic >> version) || magic != "rrseg-dataset" || version != 1) {
      throw fail("expected 'rrseg-dataset 1'");
    }
  }
  Meta m;
  const auto num_images = keyed("num_images");
  m.num_classes = static_cast<int>(keyed("num_classes"));
  m.height = static_cast<int>(keyed("height"));
  m.width = static_cast<int>(keyed("width"));
  m.feature_dim = static_cast<int>(keyed("feature_dim"));
  if (m.num_classes <= 0) throw fail("num_classes must be positive");
  next();  // column header
  m.frequencies = stats::FrequencyTable(m.num_classes);
  m.frequencies.num_images = static_cast<std::uint64_t>(num_images);
  for (int k = 0; k < m.num_classes; ++k) {
    auto ls = next();
    long long id = -1;
    std::uint64_t px = 0, rg = 0;
    if (!(ls >> id >> px >> rg) || id != k) {
      throw fail("expected '" + std::to_string(k) + " <pixels> <regions>'");
    }
    m.frequencies.pixel_freq[k] = px;
    m.frequencies.region_freq[k] = rg;
  }
  return m;
}

std::string stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04zu", index);
  return buf;
}

void write_dataset(const fs::path& dir, const Dataset& ds, bool overwrite) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!overwrite) {
      throw ConfigError(dir.string() + " exists and is not empty (use --force)");
    }
    fs::remove_all(dir / "labels");
    fs::remove_all(dir / "features");
    fs::remove(dir / "meta.txt");
  }
  fs::create_directories(dir / "labels");
  if (!ds.images.empty()) fs::create_directories(dir / "features");
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    write_pgm16(dir / "labels" / (stem(i) + ".pgm"), ds.labels[i]);
    if (!ds.images.empty()) {
      write_features(dir / "features" / (stem(i) + ".bin"), ds.images[i]);
    }
  }
  Meta meta;
  meta.num_classes = ds.num_classes;
  meta.height = ds.labels.empty() ? 0 : ds.labels.front().height;
  meta.width = ds.labels.empty() ? 0 : ds.labels.front().width;
  meta.feature_dim = ds.feature_dim();
  meta.frequencies = ds.frequencies;
  write_meta(dir / "meta.txt", meta);
}

std::vector<std::string> list_label_files(const fs::path& dir) {
  const fs::path labels = dir / "labels";
  if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
  // A dataset directory without labels/ is simply empty.
  if (!fs::is_directory(labels)) return {};
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(labels)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") {
      files.push_back("labels/" + e.path().filename().string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

Dataset read_dataset(const fs::path& dir, const ReadOptions& options) {
  const auto files = list_label_files(dir);
  if (files.empty()) throw DataError("no images found under " + (dir / "labels").string());
  std::optional<Meta> meta;
  if (fs::exists(dir / "meta.txt")) meta = read_meta(dir / "meta.txt");

  Dataset ds;
  ds.labels.reserve(files.size());
  Label max_label = 0;
  for (const auto& f : files) {
    ds.labels.push_back(read_pgm(dir / f));
    for (Label l : ds.labels.back().labels) {
      if (l != kIgnoreLabel) max_label = std::max(max_label, l);
    }
  }
  if (options.num_classes) {
    ds.num_classes = *options.num_classes;
  } else if (meta) {
    ds.num_classes = meta->num_classes;
  } else {
    ds.num_classes = max_label + 1;
  }
  try {
    ds.frequencies = stats::profile(ds.labels, ds.num_classes);
  } catch (const DataError& e) {
    throw DataError(dir.string() + ": " + e.what());
  }
  if (meta && !options.num_classes && meta->frequencies != ds.frequencies) {
    throw DataError((dir / "meta.txt").string() +
                    ": frequency table disagrees with the label files");
  }

  if (options.features) {
    ds.images.reserve(files.size());
    for (const auto& f : files) {
      const fs::path name = fs::path(f).filename().replace_extension(".bin");
      ds.images.push_back(read_features(dir / "features" / name));
      const auto& img = ds.images.back();
      const auto& lab = ds.labels[ds.images.size() - 1];
      if (img.height != lab.height || img.width != lab.width) {
        throw DataError((dir / "features" / name).string() +
                        ": spatial size does not match its label map");
      }
      if (img.dim != ds.images.front().dim) {
        throw DataError((dir / "features" / name).string() +
                        ": feature dimension differs from the first image");
      }
    }
  }
  return ds;
}

}  // namespace rrseg::data
