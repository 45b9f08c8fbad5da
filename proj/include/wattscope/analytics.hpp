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
#include <string_view>
#include <vector>

#include "wattscope/attribution.hpp"
#include "wattscope/jobs.hpp"
#include "wattscope/telemetry.hpp"

namespace wattscope {

/// Energy column used for consumption shares.
enum class ShareColumn { kExt, kGpu, kCpu };

std::string_view share_column_name(ShareColumn column);
std::optional<ShareColumn> parse_share_column(std::string_view text);

struct ReportRow {
  std::string key;  // status label or user name
  std::size_t n_jobs = 0;
  double gpu_kwh = 0;
  double cpu_kwh = 0;
  double ext_kwh = 0;
  double share_pct = 0;  // exact share of the selected column

  long rounded_share() const;
};

struct StatusReport {
  std::string key_name = "status";
  ShareColumn column = ShareColumn::kExt;
  std::vector<ReportRow> rows;
};

/// Table of energy per terminal status, ordered COMPLETED, FAILED,
/// CANCELLED, TIMEOUT, then other states alphabetically. Jobs without an
/// energy entry still count in n_jobs. Throws UnknownJob if energies name a
/// job not in `jobs`.
StatusReport aggregate_by_status(std::span<const JobRecord> jobs,
                                 const std::map<JobId, JobEnergy>& energies,
                                 ShareColumn column = ShareColumn::kExt);

/// Same shape keyed by user, ordered by the selected column descending.
StatusReport aggregate_by_user(std::span<const JobRecord> jobs,
                               const std::map<JobId, JobEnergy>& energies,
                               ShareColumn column = ShareColumn::kExt);

enum class UtilMetric { kSmPct, kMemPct };

std::string_view util_metric_name(UtilMetric metric);

/// GPU memory capacities in MiB. Lookups try "<node>/<index>" first, then
/// the bare index.
class GpuCapacities {
 public:
  void set(int gpu_index, double mib) { by_index_[gpu_index] = mib; }
  void set(const std::string& node_id, int gpu_index, double mib) { by_node_[{node_id, gpu_index}] = mib; }
  std::optional<double> lookup(const std::string& node_id, int gpu_index) const;

  /// JSON object such as {"0": 16160, "n2/1": 11441}.
  static GpuCapacities parse(std::istream& in);

 private:
  std::map<int, double> by_index_;
  std::map<std::pair<std::string, int>, double> by_node_;
};

inline constexpr std::size_t kDefaultBins = 20;

/// Equal-width bins over [0, 100]; the last bin is closed on the right.
struct UtilizationHistogram {
  UtilMetric metric = UtilMetric::kSmPct;
  std::vector<double> bin_edges;
  std::vector<std::size_t> counts;
  std::size_t n_samples = 0;
  std::size_t excluded = 0;  // samples where the metric was not observed
};

std::vector<double> histogram_edges(std::size_t n_bins);
std::size_t histogram_bin(std::span<const double> edges, double value);

/// One histogram entry per process sample that observed the metric.
UtilizationHistogram gpu_histogram(std::span<const ProcSnapshot> procs, UtilMetric metric,
                                   std::size_t n_bins, const GpuCapacities& capacities);

/// One entry per job: the mean of the metric over that job's samples.
/// Samples of untracked processes count as excluded.
UtilizationHistogram gpu_histogram_job_mean(std::span<const ProcSnapshot> procs,
                                            const Timelines& timelines, UtilMetric metric,
                                            std::size_t n_bins, const GpuCapacities& capacities);

enum class Format { kText, kCsv, kJson };
std::optional<Format> parse_format(std::string_view text);

std::string render_report(const StatusReport& report, Format format);
std::string render_histogram(const UtilizationHistogram& hist, Format format);

}  // namespace wattscope
