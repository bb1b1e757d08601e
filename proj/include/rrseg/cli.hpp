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

#ifndef RRSEG_CLI_HPP_
#define RRSEG_CLI_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace rrseg::cli {

enum ExitCode : int {
  kOk = 0,
  kConfig = 2,   // bad flags, config or precondition
  kData = 3,     // missing or malformed input files
  kNumeric = 4,  // training diverged
};

// Environment variable naming the root for relative output paths.
inline constexpr const char* kOutputRootEnv = "RRSEG_OUTPUT_ROOT";

// Relative paths are placed under $RRSEG_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output(const std::filesystem::path& p);

// Entry point shared by the binary and the tests. Never throws; library
// errors are printed to `err` and mapped to an ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rrseg::cli

#endif  // RRSEG_CLI_HPP_
