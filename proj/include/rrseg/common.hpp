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

#ifndef RRSEG_COMMON_HPP_
#define RRSEG_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rrseg {

using Label = std::uint16_t;

// The largest representable label marks pixels that take no part in
// evaluation, profiling or training.
inline constexpr Label kIgnoreLabel = std::numeric_limits<Label>::max();

// Row-major so that one row is one pixel (or one region) and rows can be
// addressed as contiguous spans.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Error taxonomy. Each kind maps onto one process exit code in the CLI.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a caller violates an operation's documented precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Per-image label grid, ground truth or prediction.
struct SegMap {
  int height = 0;
  int width = 0;
  std::vector<Label> labels;  // row-major, height * width

  SegMap() = default;
  SegMap(int h, int w, Label fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t size() const { return labels.size(); }
  Label& at(int row, int col) {
    return labels[static_cast<std::size_t>(row) * width + col];
  }
  Label at(int row, int col) const {
    return labels[static_cast<std::size_t>(row) * width + col];
  }
  bool operator==(const SegMap&) const = default;
};

// Per-image pixel features as stored on disk (32-bit floats, H x W x D).
struct FeatureImage {
  int height = 0;
  int width = 0;
  int dim = 0;
  std::vector<float> values;  // (row * width + col) * dim + d

  FeatureImage() = default;
  FeatureImage(int h, int w, int d)
      : height(h),
        width(w),
        dim(d),
        values(static_cast<std::size_t>(h) * w * d, 0.0f) {}

  float* pixel(std::size_t index) { return values.data() + index * dim; }
  const float* pixel(std::size_t index) const {
    return values.data() + index * dim;
  }
  bool operator==(const FeatureImage&) const = default;
};

}  // namespace rrseg

#endif  // RRSEG_COMMON_HPP_
