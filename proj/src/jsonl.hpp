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

// Shared helpers for the newline-delimited JSON trace readers.

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>

#include <json.hpp>

#include "wattscope/error.hpp"

namespace wattscope::detail {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

[[noreturn]] inline void malformed(std::size_t line, std::string detail) {
  throw Error(ErrorCode::kMalformedLine, std::move(detail), line);
}

/// Invokes fn(object, line_no) for every non-blank line. Trailing CR is
/// tolerated; anything that is not a single JSON object is MalformedLine.
template <class Fn>
void for_each_record(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json obj = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded()) malformed(line_no, "not valid JSON");
    if (!obj.is_object()) malformed(line_no, "expected a JSON object");
    fn(obj, line_no);
  }
  if (in.bad()) throw Error(ErrorCode::kIo, "read failure");
}

inline const Json& require_field(const Json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(line, std::string("missing field '") + key + "'");
  return *it;
}

inline double require_number(const Json& obj, const char* key, std::size_t line) {
  const Json& v = require_field(obj, key, line);
  if (!v.is_number()) malformed(line, std::string("field '") + key + "' is not a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) malformed(line, std::string("field '") + key + "' is not finite");
  return d;
}

inline std::optional<double> optional_number(const Json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return require_number(obj, key, line);
}

inline std::int64_t as_integer(const Json& v, const char* what, std::size_t line) {
  if (v.is_number_unsigned()) {
    auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(INT64_MAX)) malformed(line, std::string(what) + " out of range");
    return static_cast<std::int64_t>(u);
  }
  if (v.is_number_integer()) return v.get<std::int64_t>();
  malformed(line, std::string(what) + " is not an integer");
}

inline std::int64_t require_int(const Json& obj, const char* key, std::size_t line) {
  return as_integer(require_field(obj, key, line), key, line);
}

inline std::string require_string(const Json& obj, const char* key, std::size_t line) {
  const Json& v = require_field(obj, key, line);
  if (!v.is_string()) malformed(line, std::string("field '") + key + "' is not a string");
  return v.get<std::string>();
}

/// Timestamps carry millisecond precision; finer digits are rounded away.
inline double quantize_ms(double ts) { return std::round(ts * 1000.0) / 1000.0; }

}  // namespace wattscope::detail
