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

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wattscope/error.hpp"

namespace wattscope {

using Seconds = double;
using Watts = double;

enum class SourceKind { kCpuPackage, kGpu, kExternal };

/// Where a power reading comes from: a CPU package socket, a GPU index, or
/// the node's external wattmeter. Serialized as "cpu<n>", "gpu<n>" or "ext".
struct Source {
  SourceKind kind = SourceKind::kExternal;
  int index = 0;

  static Source cpu(int socket) { return {SourceKind::kCpuPackage, socket}; }
  static Source gpu(int index) { return {SourceKind::kGpu, index}; }
  static Source external() { return {SourceKind::kExternal, 0}; }

  std::string to_string() const;
  static std::optional<Source> parse(std::string_view text);

  auto operator<=>(const Source&) const = default;
};

struct PowerSample {
  std::string node_id;
  Source source;
  Seconds ts = 0;
  Watts power_w = 0;

  bool operator==(const PowerSample&) const = default;
};

struct ProcSnapshot {
  std::string node_id;
  Seconds ts = 0;
  std::int64_t pid = 0;
  Seconds cpu_time_s = 0;
  std::optional<int> gpu_index;
  std::optional<double> gpu_sm_pct;
  std::optional<double> gpu_mem_mib;

  bool operator==(const ProcSnapshot&) const = default;
};

struct TimeSpan {
  Seconds start = 0;
  Seconds end = 0;
};

struct TraceBundle {
  std::vector<PowerSample> power;
  std::vector<ProcSnapshot> procs;
  TimeSpan span;
};

/// Builds a bundle and computes its span from the contained timestamps.
TraceBundle make_bundle(std::vector<PowerSample> power, std::vector<ProcSnapshot> procs);

/// Which sources a power trace file may contain.
enum class PowerTraceKind { kAny, kSoftware, kExternal };

/// Reads a power trace. Samples are returned in file order; within each
/// (node, source) series timestamps must be strictly increasing.
std::vector<PowerSample> parse_power_trace(std::istream& in,
                                           PowerTraceKind kind = PowerTraceKind::kAny);

/// Reads a process trace. Per (node, pid), timestamps must increase and
/// cumulative CPU time must not decrease.
std::vector<ProcSnapshot> parse_proc_trace(std::istream& in);

std::string serialize_power_sample(const PowerSample& sample);
std::string serialize_proc_snapshot(const ProcSnapshot& snap);

void write_power_trace(std::ostream& out, std::span<const PowerSample> samples);
void write_proc_trace(std::ostream& out, std::span<const ProcSnapshot> snaps);

/// Linear interpolation of a sorted series onto a sorted grid. Grid points
/// outside [first ts, last ts] come back as nullopt.
std::vector<std::optional<Watts>> resample_to_grid(std::span<const PowerSample> series,
                                                   std::span<const Seconds> grid_ts);

/// Splits samples into per-(node, source) series ordered by timestamp.
struct PowerSeries {
  std::string node_id;
  Source source;
  std::vector<PowerSample> samples;
};
std::vector<PowerSeries> split_series(std::span<const PowerSample> samples);

}  // namespace wattscope
