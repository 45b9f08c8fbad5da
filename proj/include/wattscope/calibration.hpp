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
#include <span>
#include <string>
#include <vector>

#include "wattscope/attribution.hpp"
#include "wattscope/telemetry.hpp"

namespace wattscope {

/// Per-node constant factor from software-measured power (CPU + GPU) to the
/// external wattmeter reading.
struct CalibrationModel {
  std::string node_id;
  double k = 1.0;
  double mape_pct = 0;          // sample-level mean absolute percentage error
  std::size_t n_points = 0;
  double energy_error_pct = 0;  // relative error of k * sum(software) vs sum(external)

  bool operator==(const CalibrationModel&) const = default;
};

/// Least squares through the origin: k = sum(s*e) / sum(s*s). Points with a
/// zero external reading stay in the fit but are left out of the MAPE.
CalibrationModel fit_scale(std::string node_id, std::span<const Watts> software,
                           std::span<const Watts> external);

/// Ordinary least squares with an intercept, kept for comparison with the
/// constant-factor model.
struct AffineModel {
  std::string node_id;
  double slope = 1.0;
  Watts intercept_w = 0;
  double mape_pct = 0;
  std::size_t n_points = 0;
};
AffineModel fit_affine(std::string node_id, std::span<const Watts> software,
                       std::span<const Watts> external);

/// Software and external power of one node on the external sample grid.
struct AlignedSeries {
  std::string node_id;
  std::vector<Seconds> ts;
  std::vector<Watts> software;
  std::vector<Watts> external;
};

/// Resamples every software source of a node onto that node's external
/// timestamps and sums them. Grid points not covered by all software sources
/// are dropped. Nodes missing either side are skipped.
std::vector<AlignedSeries> align_for_calibration(std::span<const PowerSample> software,
                                                 std::span<const PowerSample> external);

/// Adds ext_w = k * (cpu_w + gpu_w) to every job and to the unattributed
/// remainder. Throws NodeMismatch if a slice belongs to another node.
std::vector<AttributionSlice> apply_calibration(const CalibrationModel& model,
                                                std::span<const AttributionSlice> slices);

/// Same, picking each slice's model by node id.
std::vector<AttributionSlice> apply_calibrations(std::span<const CalibrationModel> models,
                                                 std::span<const AttributionSlice> slices);

std::string serialize_model(const CalibrationModel& model);
/// Accepts one model object per line.
std::vector<CalibrationModel> parse_models(std::istream& in);

}  // namespace wattscope
