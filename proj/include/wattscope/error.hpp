// Copyright 2026 The wattscope Authors.
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

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wattscope {

enum class ErrorCode {
  kMalformedLine,
  kNonMonotonicTimestamp,
  kNegativePower,
  kCpuTimeRegression,
  kOutOfRangeUtilization,
  kEmptySeries,
  kDuplicatePid,
  kUnknownJob,
  kUnsupportedMultiNodeJob,
  kNegativeDelta,
  kOverlappingSlices,
  kDegenerateInput,
  kNodeMismatch,
  kMissingCapacity,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

/// Every validation failure in the library is reported as an Error. Parser
/// errors carry the 1-based line number of the offending record.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail, std::optional<std::size_t> line = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::optional<std::size_t> line_;
};

}  // namespace wattscope
