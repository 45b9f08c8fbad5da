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

#include "wattscope/error.hpp"

#include <fmt/core.h>

namespace wattscope {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kNonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case ErrorCode::kNegativePower: return "NegativePower";
    case ErrorCode::kCpuTimeRegression: return "CpuTimeRegression";
    case ErrorCode::kOutOfRangeUtilization: return "OutOfRangeUtilization";
    case ErrorCode::kEmptySeries: return "EmptySeries";
    case ErrorCode::kDuplicatePid: return "DuplicatePid";
    case ErrorCode::kUnknownJob: return "UnknownJob";
    case ErrorCode::kUnsupportedMultiNodeJob: return "UnsupportedMultiNodeJob";
    case ErrorCode::kNegativeDelta: return "NegativeDelta";
    case ErrorCode::kOverlappingSlices: return "OverlappingSlices";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kNodeMismatch: return "NodeMismatch";
    case ErrorCode::kMissingCapacity: return "MissingCapacity";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string format_message(ErrorCode code, const std::string& detail,
                           std::optional<std::size_t> line) {
  std::string msg(error_code_name(code));
  if (line) msg += fmt::format(" at line {}", *line);
  if (!detail.empty()) msg += ": " + detail;
  return msg;
}

}  // namespace

Error::Error(ErrorCode code, std::string detail, std::optional<std::size_t> line)
    : std::runtime_error(format_message(code, detail, line)),
      code_(code),
      detail_(std::move(detail)),
      line_(line) {}

}  // namespace wattscope
