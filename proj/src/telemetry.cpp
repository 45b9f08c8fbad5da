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

#include "wattscope/telemetry.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <ostream>
#include <utility>

#include <fmt/core.h>

#include "jsonl.hpp"

namespace wattscope {

using detail::Json;
using detail::OrderedJson;

namespace {

constexpr int kMaxDeviceIndex = 1023;

std::optional<int> parse_device_index(std::string_view digits) {
  if (digits.empty() || digits.size() > 4) return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
  if (value < 0 || value > kMaxDeviceIndex) return std::nullopt;
  return value;
}

std::string require_node(const Json& obj, std::size_t line) {
  std::string node = detail::require_string(obj, "node", line);
  if (node.empty()) detail::malformed(line, "empty node id");
  return node;
}

}  // namespace

std::string Source::to_string() const {
  switch (kind) {
    case SourceKind::kCpuPackage: return fmt::format("cpu{}", index);
    case SourceKind::kGpu: return fmt::format("gpu{}", index);
    case SourceKind::kExternal: return "ext";
  }
  return "ext";
}

std::optional<Source> Source::parse(std::string_view text) {
  if (text == "ext") return Source::external();
  if (text.starts_with("cpu")) {
    if (auto idx = parse_device_index(text.substr(3))) return Source::cpu(*idx);
  } else if (text.starts_with("gpu")) {
    if (auto idx = parse_device_index(text.substr(3))) return Source::gpu(*idx);
  }
  return std::nullopt;
}

TraceBundle make_bundle(std::vector<PowerSample> power, std::vector<ProcSnapshot> procs) {
  TraceBundle bundle{std::move(power), std::move(procs), {}};
  bool first = true;
  auto widen = [&](Seconds ts) {
    if (first) {
      bundle.span = {ts, ts};
      first = false;
    } else {
      bundle.span.start = std::min(bundle.span.start, ts);
      bundle.span.end = std::max(bundle.span.end, ts);
    }
  };
  for (const auto& s : bundle.power) widen(s.ts);
  for (const auto& p : bundle.procs) widen(p.ts);
  return bundle;
}

std::vector<PowerSample> parse_power_trace(std::istream& in, PowerTraceKind kind) {
  std::vector<PowerSample> out;
  std::map<std::pair<std::string, Source>, Seconds> last_ts;

  detail::for_each_record(in, [&](const Json& obj, std::size_t line) {
    PowerSample s;
    s.node_id = require_node(obj, line);
    std::string src = detail::require_string(obj, "src", line);
    auto source = Source::parse(src);
    if (!source) detail::malformed(line, fmt::format("unknown source '{}'", src));
    bool is_ext = source->kind == SourceKind::kExternal;
    if (kind == PowerTraceKind::kSoftware && is_ext)
      detail::malformed(line, "external source in a software power trace");
    if (kind == PowerTraceKind::kExternal && !is_ext)
      detail::malformed(line, "software source in an external power trace");
    s.source = *source;
    s.ts = detail::quantize_ms(detail::require_number(obj, "ts", line));
    s.power_w = detail::require_number(obj, "w", line);
    if (s.power_w < 0)
      throw Error(ErrorCode::kNegativePower, fmt::format("{} W", s.power_w), line);

    auto key = std::make_pair(s.node_id, s.source);
    auto it = last_ts.find(key);
    if (it != last_ts.end()) {
      if (s.ts <= it->second)
        throw Error(ErrorCode::kNonMonotonicTimestamp,
                    fmt::format("{}/{} ts {} after {}", s.node_id, src, s.ts, it->second), line);
      it->second = s.ts;
    } else {
      last_ts.emplace(std::move(key), s.ts);
    }
    out.push_back(std::move(s));
  });
  return out;
}

std::vector<ProcSnapshot> parse_proc_trace(std::istream& in) {
  std::vector<ProcSnapshot> out;
  struct Last {
    Seconds ts;
    Seconds cpu;
  };
  std::map<std::pair<std::string, std::int64_t>, Last> last;

  detail::for_each_record(in, [&](const Json& obj, std::size_t line) {
    ProcSnapshot p;
    p.node_id = require_node(obj, line);
    p.ts = detail::quantize_ms(detail::require_number(obj, "ts", line));
    p.pid = detail::require_int(obj, "pid", line);
    if (p.pid <= 0 || p.pid > INT32_MAX) detail::malformed(line, "pid must be a positive 32-bit int");
    p.cpu_time_s = detail::require_number(obj, "cpu_s", line);
    if (p.cpu_time_s < 0) detail::malformed(line, "negative cpu_s");

    if (auto it = obj.find("gpu"); it != obj.end() && !it->is_null()) {
      auto idx = detail::as_integer(*it, "gpu", line);
      if (idx < 0 || idx > kMaxDeviceIndex) detail::malformed(line, "gpu index out of range");
      p.gpu_index = static_cast<int>(idx);
    }
    p.gpu_sm_pct = detail::optional_number(obj, "sm_pct", line);
    if (p.gpu_sm_pct && (*p.gpu_sm_pct < 0 || *p.gpu_sm_pct > 100))
      throw Error(ErrorCode::kOutOfRangeUtilization, fmt::format("sm_pct {}", *p.gpu_sm_pct), line);
    p.gpu_mem_mib = detail::optional_number(obj, "mem_mib", line);
    if (p.gpu_mem_mib && *p.gpu_mem_mib < 0)
      throw Error(ErrorCode::kOutOfRangeUtilization, fmt::format("mem_mib {}", *p.gpu_mem_mib), line);

    auto key = std::make_pair(p.node_id, p.pid);
    auto it = last.find(key);
    if (it != last.end()) {
      if (p.ts <= it->second.ts)
        throw Error(ErrorCode::kNonMonotonicTimestamp,
                    fmt::format("{} pid {} ts {} after {}", p.node_id, p.pid, p.ts, it->second.ts),
                    line);
      if (p.cpu_time_s < it->second.cpu)
        throw Error(ErrorCode::kCpuTimeRegression,
                    fmt::format("pid {} cpu_s {} -> {}", p.pid, it->second.cpu, p.cpu_time_s), line);
      it->second = {p.ts, p.cpu_time_s};
    } else {
      last.emplace(std::move(key), Last{p.ts, p.cpu_time_s});
    }
    out.push_back(std::move(p));
  });
  return out;
}

std::string serialize_power_sample(const PowerSample& sample) {
  OrderedJson j;
  j["node"] = sample.node_id;
  j["src"] = sample.source.to_string();
  j["ts"] = sample.ts;
  j["w"] = sample.power_w;
  return j.dump();
}

std::string serialize_proc_snapshot(const ProcSnapshot& snap) {
  OrderedJson j;
  j["node"] = snap.node_id;
  j["ts"] = snap.ts;
  j["pid"] = snap.pid;
  j["cpu_s"] = snap.cpu_time_s;
  if (snap.gpu_index) j["gpu"] = *snap.gpu_index;
  if (snap.gpu_sm_pct) j["sm_pct"] = *snap.gpu_sm_pct;
  if (snap.gpu_mem_mib) j["mem_mib"] = *snap.gpu_mem_mib;
  return j.dump();
}

void write_power_trace(std::ostream& out, std::span<const PowerSample> samples) {
  for (const auto& s : samples) out << serialize_power_sample(s) << '\n';
}

void write_proc_trace(std::ostream& out, std::span<const ProcSnapshot> snaps) {
  for (const auto& p : snaps) out << serialize_proc_snapshot(p) << '\n';
}

std::vector<std::optional<Watts>> resample_to_grid(std::span<const PowerSample> series,
                                                   std::span<const Seconds> grid_ts) {
  if (series.empty()) throw Error(ErrorCode::kEmptySeries, "cannot resample an empty series");

  std::vector<std::optional<Watts>> out;
  out.reserve(grid_ts.size());
  const Seconds first = series.front().ts;
  const Seconds last = series.back().ts;
  for (Seconds t : grid_ts) {
    if (!(t >= first && t <= last)) {
      out.emplace_back(std::nullopt);
      continue;
    }
    auto upper = std::upper_bound(series.begin(), series.end(), t,
                                  [](Seconds v, const PowerSample& s) { return v < s.ts; });
    // upper > begin because t >= first
    const PowerSample& lo = *(upper - 1);
    if (lo.ts == t || upper == series.end()) {
      out.emplace_back(lo.power_w);
      continue;
    }
    const PowerSample& hi = *upper;
    double frac = (t - lo.ts) / (hi.ts - lo.ts);
    out.emplace_back(lo.power_w + (hi.power_w - lo.power_w) * frac);
  }
  return out;
}

std::vector<PowerSeries> split_series(std::span<const PowerSample> samples) {
  std::map<std::pair<std::string, Source>, std::vector<PowerSample>> grouped;
  for (const auto& s : samples) grouped[{s.node_id, s.source}].push_back(s);
  std::vector<PowerSeries> out;
  out.reserve(grouped.size());
  for (auto& [key, vec] : grouped) {
    std::stable_sort(vec.begin(), vec.end(),
                     [](const PowerSample& a, const PowerSample& b) { return a.ts < b.ts; });
    out.push_back({key.first, key.second, std::move(vec)});
  }
  return out;
}

}  // namespace wattscope
