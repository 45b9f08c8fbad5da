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

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wattscope/jobs.hpp"
#include "wattscope/telemetry.hpp"

namespace wattscope {

using Joules = double;

inline constexpr double kJoulesPerKwh = 3.6e6;
inline constexpr Seconds kDefaultMaxGapS = 10.0;

struct Interval {
  Seconds t0 = 0;
  Seconds t1 = 0;

  Seconds duration() const { return t1 - t0; }
  bool operator==(const Interval&) const = default;
};

struct JobPower {
  Watts cpu_w = 0;
  Watts gpu_w = 0;
  std::optional<Watts> ext_w;  // set once a calibration model was applied

  bool operator==(const JobPower&) const = default;
};

/// Node power on one interval split across jobs. Job shares plus the
/// unattributed remainder add back up to the measured node power.
struct AttributionSlice {
  Interval interval;
  std::string node_id;
  std::map<JobId, JobPower> per_job;
  Watts unattributed_cpu_w = 0;
  Watts unattributed_gpu_w = 0;
  std::optional<Watts> unattributed_ext_w;

  bool operator==(const AttributionSlice&) const = default;
};

struct ShareResult {
  std::map<JobId, Watts> per_job;
  Watts unattributed = 0;
};

/// Splits CPU package power in proportion to per-job CPU-time deltas. The
/// share of kUnattributedJob, if present, is returned as unattributed; with
/// no CPU time consumed at all, everything is unattributed.
ShareResult cpu_shares(const std::map<JobId, Seconds>& deltas, Watts node_power_w);

struct GpuProcess {
  JobId job_id = kUnattributedJob;
  std::optional<double> sm_pct;
  std::optional<double> mem_mib;
};

/// Splits one GPU's power among the jobs with processes on it: by SM
/// utilization, else by memory, else equally per job.
ShareResult gpu_shares(std::span<const GpuProcess> procs, Watts gpu_power_w);

struct AttributeOptions {
  unsigned threads = 1;
};

/// Produces one slice per consecutive pair of process-snapshot timestamps on
/// each node, ordered by (node, t0).
///
/// CPU deltas come from cumulative cpu_time_s of pids seen at both ends of
/// the interval; owners are resolved at the interval start. GPU activity is
/// read from the snapshot closing the interval. Interval power is the
/// linearly resampled node power at the interval midpoint; a source that does
/// not cover the midpoint contributes nothing.
std::vector<AttributionSlice> attribute(const TraceBundle& bundle, const Timelines& timelines,
                                        const AttributeOptions& options = {});

struct JobEnergy {
  Joules cpu_j = 0;
  Joules gpu_j = 0;
  std::optional<Joules> ext_j;

  double cpu_kwh() const { return cpu_j / kJoulesPerKwh; }
  double gpu_kwh() const { return gpu_j / kJoulesPerKwh; }
  std::optional<double> ext_kwh() const {
    return ext_j ? std::optional<double>(*ext_j / kJoulesPerKwh) : std::nullopt;
  }
};

struct Coverage {
  Seconds covered_s = 0;
  Seconds excluded_s = 0;
  std::size_t excluded_intervals = 0;
};

struct EnergyLedger {
  std::map<JobId, JobEnergy> jobs;
  JobEnergy unattributed;
  Coverage coverage;
};

/// Integrates slice power over time. Slices longer than max_gap_s are
/// monitoring gaps: they accrue nothing and are counted in coverage.
EnergyLedger integrate_energy(std::span<const AttributionSlice> slices,
                              Seconds max_gap_s = kDefaultMaxGapS);

std::string serialize_slice(const AttributionSlice& slice);
void write_slices(std::ostream& out, std::span<const AttributionSlice> slices);
std::vector<AttributionSlice> parse_slices(std::istream& in);

}  // namespace wattscope
