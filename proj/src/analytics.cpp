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

#include "wattscope/analytics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <iterator>
#include <set>

#include <fmt/core.h>

#include "jsonl.hpp"

namespace wattscope {

using detail::Json;
using detail::OrderedJson;

std::string_view share_column_name(ShareColumn column) {
  switch (column) {
    case ShareColumn::kExt: return "ext";
    case ShareColumn::kGpu: return "gpu";
    case ShareColumn::kCpu: return "cpu";
  }
  return "ext";
}

std::optional<ShareColumn> parse_share_column(std::string_view text) {
  if (text == "ext") return ShareColumn::kExt;
  if (text == "gpu") return ShareColumn::kGpu;
  if (text == "cpu") return ShareColumn::kCpu;
  return std::nullopt;
}

long ReportRow::rounded_share() const { return std::lround(share_pct); }

namespace {

struct Accumulator {
  std::size_t n_jobs = 0;
  Joules gpu = 0;
  Joules cpu = 0;
  Joules ext = 0;

  Joules column(ShareColumn c) const {
    switch (c) {
      case ShareColumn::kExt: return ext;
      case ShareColumn::kGpu: return gpu;
      case ShareColumn::kCpu: return cpu;
    }
    return ext;
  }
};

template <class Key, class KeyFn>
std::map<Key, Accumulator> group(std::span<const JobRecord> jobs,
                                 const std::map<JobId, JobEnergy>& energies, KeyFn&& key_of) {
  std::map<JobId, const JobRecord*> index;
  for (const auto& j : jobs) index.emplace(j.job_id, &j);
  for (const auto& [id, e] : energies)
    if (!index.contains(id)) throw Error(ErrorCode::kUnknownJob, fmt::format("job {} has energy but no record", id));

  std::map<Key, Accumulator> groups;
  for (const auto& [id, job] : index) {
    Accumulator& acc = groups[key_of(*job)];
    ++acc.n_jobs;
    auto it = energies.find(id);
    if (it == energies.end()) continue;
    acc.gpu += it->second.gpu_j;
    acc.cpu += it->second.cpu_j;
    acc.ext += it->second.ext_j.value_or(0.0);
  }
  return groups;
}

ReportRow make_row(std::string key, const Accumulator& acc) {
  ReportRow row;
  row.key = std::move(key);
  row.n_jobs = acc.n_jobs;
  row.gpu_kwh = acc.gpu / kJoulesPerKwh;
  row.cpu_kwh = acc.cpu / kJoulesPerKwh;
  row.ext_kwh = acc.ext / kJoulesPerKwh;
  return row;
}

void fill_shares(std::vector<std::pair<ReportRow, Accumulator>>& rows, ShareColumn column) {
  Joules total = 0;
  for (const auto& [row, acc] : rows) total += acc.column(column);
  for (auto& [row, acc] : rows) row.share_pct = total > 0 ? 100.0 * acc.column(column) / total : 0.0;
}

}  // namespace

StatusReport aggregate_by_status(std::span<const JobRecord> jobs,
                                 const std::map<JobId, JobEnergy>& energies, ShareColumn column) {
  auto groups = group<JobStatus>(jobs, energies, [](const JobRecord& j) { return j.status; });
  std::vector<std::pair<ReportRow, Accumulator>> rows;
  for (const auto& [status, acc] : groups) rows.emplace_back(make_row(status.label(), acc), acc);
  fill_shares(rows, column);

  StatusReport report{"status", column, {}};
  for (auto& [row, acc] : rows) report.rows.push_back(std::move(row));
  return report;
}

StatusReport aggregate_by_user(std::span<const JobRecord> jobs,
                               const std::map<JobId, JobEnergy>& energies, ShareColumn column) {
  auto groups = group<std::string>(jobs, energies, [](const JobRecord& j) { return j.user; });
  std::vector<std::pair<ReportRow, Accumulator>> rows;
  for (const auto& [user, acc] : groups) rows.emplace_back(make_row(user, acc), acc);
  std::stable_sort(rows.begin(), rows.end(), [column](const auto& a, const auto& b) {
    return a.second.column(column) > b.second.column(column);
  });
  fill_shares(rows, column);

  StatusReport report{"user", column, {}};
  for (auto& [row, acc] : rows) report.rows.push_back(std::move(row));
  return report;
}

std::string_view util_metric_name(UtilMetric metric) {
  return metric == UtilMetric::kSmPct ? "sm_pct" : "mem_pct";
}

std::optional<double> GpuCapacities::lookup(const std::string& node_id, int gpu_index) const {
  if (auto it = by_node_.find({node_id, gpu_index}); it != by_node_.end()) return it->second;
  if (auto it = by_index_.find(gpu_index); it != by_index_.end()) return it->second;
  return std::nullopt;
}

GpuCapacities GpuCapacities::parse(std::istream& in) {
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  Json obj = Json::parse(text, nullptr, false);
  if (obj.is_discarded() || !obj.is_object())
    detail::malformed(1, "capacity file must be a JSON object");

  auto parse_index = [](std::string_view s) -> std::optional<int> {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) return std::nullopt;
    return v;
  };

  GpuCapacities caps;
  for (const auto& [key, value] : obj.items()) {
    if (!value.is_number() || !(value.get<double>() > 0))
      detail::malformed(1, fmt::format("capacity for '{}' must be a positive number", key));
    double mib = value.get<double>();
    auto slash = key.rfind('/');
    if (slash == std::string::npos) {
      auto idx = parse_index(key);
      if (!idx) detail::malformed(1, fmt::format("bad gpu key '{}'", key));
      caps.set(*idx, mib);
    } else {
      auto idx = parse_index(std::string_view(key).substr(slash + 1));
      if (!idx || slash == 0) detail::malformed(1, fmt::format("bad gpu key '{}'", key));
      caps.set(key.substr(0, slash), *idx, mib);
    }
  }
  return caps;
}

std::vector<double> histogram_edges(std::size_t n_bins) {
  if (n_bins == 0) throw Error(ErrorCode::kDegenerateInput, "histogram needs at least one bin");
  std::vector<double> edges(n_bins + 1);
  for (std::size_t i = 0; i <= n_bins; ++i)
    edges[i] = 100.0 * static_cast<double>(i) / static_cast<double>(n_bins);
  return edges;
}

std::size_t histogram_bin(std::span<const double> edges, double value) {
  auto upper = std::upper_bound(edges.begin(), edges.end(), value);
  std::size_t bin = upper == edges.begin() ? 0 : static_cast<std::size_t>(upper - edges.begin()) - 1;
  return std::min(bin, edges.size() - 2);
}

namespace {

// Returns the metric in percent, or nullopt when the sample did not observe it.
std::optional<double> metric_value(const ProcSnapshot& p, UtilMetric metric,
                                   const GpuCapacities& capacities) {
  if (metric == UtilMetric::kSmPct) return p.gpu_sm_pct;
  if (!p.gpu_mem_mib || !p.gpu_index) return std::nullopt;
  auto cap = capacities.lookup(p.node_id, *p.gpu_index);
  if (!cap)
    throw Error(ErrorCode::kMissingCapacity, fmt::format("gpu {} on {}", *p.gpu_index, p.node_id));
  double pct = 100.0 * *p.gpu_mem_mib / *cap;
  if (pct > 100.0)
    throw Error(ErrorCode::kOutOfRangeUtilization,
                fmt::format("{} MiB exceeds capacity {} of gpu {} on {}", *p.gpu_mem_mib, *cap,
                            *p.gpu_index, p.node_id));
  return pct;
}

UtilizationHistogram empty_histogram(UtilMetric metric, std::size_t n_bins) {
  UtilizationHistogram h;
  h.metric = metric;
  h.bin_edges = histogram_edges(n_bins);
  h.counts.assign(n_bins, 0);
  return h;
}

}  // namespace

UtilizationHistogram gpu_histogram(std::span<const ProcSnapshot> procs, UtilMetric metric,
                                   std::size_t n_bins, const GpuCapacities& capacities) {
  UtilizationHistogram h = empty_histogram(metric, n_bins);
  for (const auto& p : procs) {
    auto v = metric_value(p, metric, capacities);
    if (!v) {
      ++h.excluded;
      continue;
    }
    ++h.counts[histogram_bin(h.bin_edges, *v)];
    ++h.n_samples;
  }
  return h;
}

UtilizationHistogram gpu_histogram_job_mean(std::span<const ProcSnapshot> procs,
                                            const Timelines& timelines, UtilMetric metric,
                                            std::size_t n_bins, const GpuCapacities& capacities) {
  UtilizationHistogram h = empty_histogram(metric, n_bins);
  std::map<JobId, std::pair<double, std::size_t>> sums;
  for (const auto& p : procs) {
    auto v = metric_value(p, metric, capacities);
    auto job = timelines.owner(p.node_id, p.pid, p.ts);
    if (!v || !job) {
      ++h.excluded;
      continue;
    }
    auto& [sum, n] = sums[*job];
    sum += *v;
    ++n;
  }
  for (const auto& [job, acc] : sums) {
    double mean = std::clamp(acc.first / static_cast<double>(acc.second), 0.0, 100.0);
    ++h.counts[histogram_bin(h.bin_edges, mean)];
    ++h.n_samples;
  }
  return h;
}

std::optional<Format> parse_format(std::string_view text) {
  if (text == "text") return Format::kText;
  if (text == "csv") return Format::kCsv;
  if (text == "json") return Format::kJson;
  return std::nullopt;
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string render_table(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0)
        line += fmt::format("{:<{}}", row[c], width[c]);
      else
        line += fmt::format("  {:>{}}", row[c], width[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

}  // namespace

std::string render_report(const StatusReport& report, Format format) {
  const std::string share_name = fmt::format("{}_share_pct", share_column_name(report.column));
  switch (format) {
    case Format::kJson: {
      OrderedJson rows = OrderedJson::array();
      for (const auto& r : report.rows) {
        OrderedJson row;
        row[report.key_name] = r.key;
        row["n_jobs"] = r.n_jobs;
        row["gpu_kwh"] = r.gpu_kwh;
        row["cpu_kwh"] = r.cpu_kwh;
        row["ext_kwh"] = r.ext_kwh;
        row[share_name] = r.rounded_share();
        rows.push_back(std::move(row));
      }
      OrderedJson doc;
      doc["rows"] = std::move(rows);
      return doc.dump() + '\n';
    }
    case Format::kCsv: {
      std::string out = fmt::format("{},n_jobs,gpu_kwh,cpu_kwh,ext_kwh,{}\n", report.key_name, share_name);
      for (const auto& r : report.rows)
        out += fmt::format("{},{},{:.3f},{:.3f},{:.3f},{}\n", csv_field(r.key), r.n_jobs, r.gpu_kwh,
                           r.cpu_kwh, r.ext_kwh, r.rounded_share());
      return out;
    }
    case Format::kText: {
      std::vector<std::vector<std::string>> cells;
      cells.push_back({report.key_name, "n_jobs", "gpu_kwh", "cpu_kwh", "ext_kwh", share_name});
      for (const auto& r : report.rows)
        cells.push_back({r.key, std::to_string(r.n_jobs), fmt::format("{:.3f}", r.gpu_kwh),
                         fmt::format("{:.3f}", r.cpu_kwh), fmt::format("{:.3f}", r.ext_kwh),
                         std::to_string(r.rounded_share())});
      return render_table(cells);
    }
  }
  return {};
}

std::string render_histogram(const UtilizationHistogram& hist, Format format) {
  switch (format) {
    case Format::kJson: {
      OrderedJson doc;
      doc["metric"] = util_metric_name(hist.metric);
      doc["edges"] = hist.bin_edges;
      doc["counts"] = hist.counts;
      doc["n"] = hist.n_samples;
      doc["excluded"] = hist.excluded;
      return doc.dump() + '\n';
    }
    case Format::kCsv: {
      std::string out = "bin_lo,bin_hi,count\n";
      for (std::size_t i = 0; i < hist.counts.size(); ++i)
        out += fmt::format("{},{},{}\n", hist.bin_edges[i], hist.bin_edges[i + 1], hist.counts[i]);
      return out;
    }
    case Format::kText: {
      std::vector<std::vector<std::string>> cells;
      cells.push_back({std::string(util_metric_name(hist.metric)), "count"});
      for (std::size_t i = 0; i < hist.counts.size(); ++i) {
        bool last = i + 1 == hist.counts.size();
        cells.push_back({fmt::format("[{}, {}{}", hist.bin_edges[i], hist.bin_edges[i + 1], last ? "]" : ")"),
                         std::to_string(hist.counts[i])});
      }
      cells.push_back({"samples", std::to_string(hist.n_samples)});
      cells.push_back({"excluded", std::to_string(hist.excluded)});
      return render_table(cells);
    }
  }
  return {};
}

}  // namespace wattscope
