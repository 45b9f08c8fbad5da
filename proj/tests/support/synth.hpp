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

// Synthetic cluster traces and deliberately naive reference computations used
// as test oracles. Nothing here calls into the attribution code paths it is
// used to check.

#include <cstdint>
#include <filesystem>
#include <string>
#include <random>
#include <vector>

#include "wattscope/attribution.hpp"
#include "wattscope/jobs.hpp"
#include "wattscope/telemetry.hpp"

namespace wattscope::testing {

struct ScenarioSpec {
  std::size_t nodes = 1;
  std::size_t jobs = 2;        // per node
  std::size_t gpus = 2;        // per node
  std::size_t intervals = 600; // proc snapshot instants per node, minus one
  std::size_t daemons = 2;     // untracked processes per node
  double gap_probability = 0;  // chance of a >10 s hole between snapshots
};

struct Scenario {
  std::vector<PowerSample> power;
  std::vector<ProcSnapshot> procs;
  std::vector<PidMapSnapshot> pidmaps;
  std::vector<JobRecord> jobs;
};

Scenario make_scenario(const ScenarioSpec& spec, std::mt19937_64& rng);

/// Linear interpolation by scanning every segment.
std::optional<Watts> naive_interpolate(const std::vector<PowerSample>& series, Seconds t);

/// Full-materialization attribution: owners from the raw pid map snapshots,
/// power by naive interpolation, shares by direct formula.
std::vector<AttributionSlice> reference_attribute(const Scenario& scenario);

/// Sum of node power (per source kind) times duration over slices no longer
/// than max_gap_s, recomputed from the raw power samples.
struct NodeIntegral {
  long double cpu_j = 0;
  long double gpu_j = 0;
};
NodeIntegral integrate_node_power(const std::vector<PowerSample>& power,
                                  const std::vector<AttributionSlice>& slices,
                                  const std::string& node_id, Seconds max_gap_s);

/// External wattmeter readings for every node: k * (software total) plus a
/// baseline and Gaussian noise, sampled every 5 s.
std::vector<PowerSample> make_external(const Scenario& scenario, double k, Watts baseline,
                                       double noise_sd, std::mt19937_64& rng);

/// Writes power.jsonl, proc.jsonl, pidmap.jsonl, jobs.jsonl and, when given,
/// external.jsonl into dir.
void write_scenario(const std::filesystem::path& dir, const Scenario& scenario,
                    const std::vector<PowerSample>& external = {});

/// Writes jobs.jsonl and calibrated slices.jsonl reproducing the per-status
/// job counts and GPU/CPU/Ext energies of the reference status table.
void write_status_table_fixture(const std::filesystem::path& dir);

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  void write(const std::string& name, const std::string& content) const;

 private:
  std::filesystem::path path_;
};

/// Relative difference with an absolute floor for values near zero.
inline double rel_diff(double a, double b) {
  double scale = std::max({std::abs(a), std::abs(b), 1.0});
  return std::abs(a - b) / scale;
}

}  // namespace wattscope::testing
