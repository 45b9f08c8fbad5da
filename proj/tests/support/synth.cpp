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

#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>

namespace wattscope::testing {

namespace {

constexpr std::int64_t kEpochMs = 1'700'000'000'000;

double ms_to_s(std::int64_t ms) { return static_cast<double>(ms) / 1000.0; }

struct PidPlan {
  Pid pid;
  JobId job;  // kUnattributedJob for daemons
  std::size_t first;
  std::size_t last;
  std::optional<int> gpu;
  double cpu = 0;
};

JobStatus random_status(std::mt19937_64& rng) {
  switch (std::uniform_int_distribution<int>(0, 5)(rng)) {
    case 0: return JobStatus::failed();
    case 1: return JobStatus::cancelled();
    case 2: return JobStatus::timeout();
    case 3: return JobStatus::other("NODE_FAIL");
    default: return JobStatus::completed();
  }
}

std::vector<PowerSample> random_series(const std::string& node, Source src, std::int64_t from_ms,
                                       std::int64_t to_ms, int cadence_ms, double lo, double hi,
                                       std::mt19937_64& rng) {
  std::uniform_int_distribution<int> jitter(-cadence_ms / 6, cadence_ms / 6);
  std::normal_distribution<double> step(0.0, (hi - lo) * 0.05);
  double w = std::uniform_real_distribution<double>(lo, hi)(rng);
  std::vector<PowerSample> out;
  for (std::int64_t t = from_ms; t <= to_ms; t += cadence_ms + jitter(rng)) {
    w = std::clamp(w + step(rng), lo, hi);
    out.push_back({node, src, ms_to_s(t), std::round(w * 1000.0) / 1000.0});
  }
  return out;
}

}  // namespace

Scenario make_scenario(const ScenarioSpec& spec, std::mt19937_64& rng) {
  Scenario sc;
  JobId next_job = 1;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (std::size_t n = 0; n < spec.nodes; ++n) {
    const std::string node = "n" + std::to_string(n + 1);
    const std::size_t instants = spec.intervals + 1;

    std::vector<std::int64_t> t_ms(instants);
    t_ms[0] = kEpochMs + std::uniform_int_distribution<std::int64_t>(0, 5000)(rng);
    for (std::size_t i = 1; i < instants; ++i) {
      std::int64_t step = 1000 + std::uniform_int_distribution<std::int64_t>(-200, 200)(rng);
      if (unit(rng) < spec.gap_probability) step = std::uniform_int_distribution<std::int64_t>(15000, 30000)(rng);
      t_ms[i] = t_ms[i - 1] + step;
    }

    std::vector<PidPlan> plans;
    for (std::size_t d = 0; d < spec.daemons; ++d)
      plans.push_back({static_cast<Pid>(100 + d), kUnattributedJob, 0, instants - 1, std::nullopt});

    std::uniform_int_distribution<std::size_t> pick(0, instants - 1);
    for (std::size_t j = 0; j < spec.jobs; ++j) {
      JobId id = next_job++;
      std::size_t a = pick(rng);
      std::size_t b = pick(rng);
      if (a > b) std::swap(a, b);
      int n_pids = std::uniform_int_distribution<int>(1, 3)(rng);
      for (int k = 0; k < n_pids; ++k) {
        std::optional<int> gpu;
        if (spec.gpus > 0 && unit(rng) < 0.7)
          gpu = std::uniform_int_distribution<int>(0, static_cast<int>(spec.gpus) - 1)(rng);
        plans.push_back({static_cast<Pid>(1000 + 10 * id + k), id, a, b, gpu});
      }
      JobRecord rec;
      rec.job_id = id;
      rec.user = "u" + std::to_string(std::uniform_int_distribution<int>(0, 3)(rng));
      rec.node_id = node;
      rec.t_start = ms_to_s(t_ms[a]);
      rec.t_submit = ms_to_s(t_ms[a] - 60000);
      rec.t_end = ms_to_s(t_ms[b]);
      rec.status = random_status(rng);
      sc.jobs.push_back(rec);
    }

    for (std::size_t i = 0; i < instants; ++i) {
      for (auto& plan : plans) {
        if (i < plan.first || i > plan.last) continue;
        if (unit(rng) >= 0.2) plan.cpu += unit(rng);
        if (unit(rng) < 0.05) continue;  // missed by the sampler
        ProcSnapshot p;
        p.node_id = node;
        p.ts = ms_to_s(t_ms[i]);
        p.pid = plan.pid;
        p.cpu_time_s = std::round(plan.cpu * 1000.0) / 1000.0;
        if (plan.gpu) {
          p.gpu_index = plan.gpu;
          double r = unit(rng);
          if (r < 0.1)
            p.gpu_sm_pct = std::nullopt;
          else if (r < 0.25)
            p.gpu_sm_pct = 0.0;
          else
            p.gpu_sm_pct = std::round(unit(rng) * 1000.0) / 10.0;
          if (unit(rng) >= 0.1) p.gpu_mem_mib = std::round(unit(rng) * 16000.0);
        }
        sc.procs.push_back(p);
      }

      // Poll the scheduler every third instant, 400 ms after the sample.
      if (i % 3 == 0) {
        PidMapSnapshot snap;
        snap.node_id = node;
        snap.ts = ms_to_s(t_ms[i] + (i == 0 ? -500 : 400));
        for (const auto& plan : plans) {
          if (plan.job == kUnattributedJob || i < plan.first || i > plan.last) continue;
          if (unit(rng) < 0.1) continue;
          snap.assignments.emplace_back(plan.pid, plan.job);
        }
        sc.pidmaps.push_back(std::move(snap));
      }
    }

    const std::int64_t span_from = t_ms.front() - 2000;
    std::int64_t span_to = t_ms.back() + 2000;
    for (int socket = 0; socket < 2; ++socket) {
      std::int64_t to = unit(rng) < 0.2 ? t_ms.front() + (t_ms.back() - t_ms.front()) * 4 / 5 : span_to;
      auto s = random_series(node, Source::cpu(socket), span_from, to, 700, 40.0, 180.0, rng);
      sc.power.insert(sc.power.end(), s.begin(), s.end());
    }
    for (std::size_t g = 0; g < spec.gpus; ++g) {
      auto s = random_series(node, Source::gpu(static_cast<int>(g)), span_from, span_to, 1000, 25.0, 300.0, rng);
      sc.power.insert(sc.power.end(), s.begin(), s.end());
    }
  }
  return sc;
}

std::optional<Watts> naive_interpolate(const std::vector<PowerSample>& series, Seconds t) {
  if (series.empty() || t < series.front().ts || t > series.back().ts) return std::nullopt;
  if (t == series.back().ts) return series.back().power_w;
  std::size_t lo = 0;
  std::size_t hi = series.size() - 1;
  while (hi - lo > 1) {
    std::size_t mid = (lo + hi) / 2;
    if (series[mid].ts <= t)
      lo = mid;
    else
      hi = mid;
  }
  const auto& a = series[lo];
  const auto& b = series[hi];
  if (a.ts == t) return a.power_w;
  return a.power_w + (b.power_w - a.power_w) * ((t - a.ts) / (b.ts - a.ts));
}

namespace {

using SeriesMap = std::map<std::pair<std::string, Source>, std::vector<PowerSample>>;

SeriesMap group_series(const std::vector<PowerSample>& power) {
  SeriesMap out;
  for (const auto& s : power) out[{s.node_id, s.source}].push_back(s);
  return out;
}

void naive_split(std::map<JobId, double> weights, double total, Watts power,
                 std::map<JobId, JobPower>& per_job, Watts& unattributed, bool gpu) {
  for (const auto& [job, w] : weights) {
    Watts share = power * (w / total);
    if (job == kUnattributedJob)
      unattributed += share;
    else if (gpu)
      per_job[job].gpu_w += share;
    else
      per_job[job].cpu_w += share;
  }
}

}  // namespace

std::vector<AttributionSlice> reference_attribute(const Scenario& sc) {
  SeriesMap series = group_series(sc.power);
  std::map<std::string, std::map<Seconds, std::vector<ProcSnapshot>>> procs;
  for (const auto& p : sc.procs) procs[p.node_id][p.ts].push_back(p);

  auto owner = [&](const std::string& node, Pid pid, Seconds t) -> JobId {
    const PidMapSnapshot* latest = nullptr;
    for (const auto& s : sc.pidmaps)
      if (s.node_id == node && s.ts <= t && (!latest || s.ts > latest->ts)) latest = &s;
    if (!latest) return kUnattributedJob;
    for (const auto& [p, j] : latest->assignments)
      if (p == pid) return j;
    return kUnattributedJob;
  };

  std::vector<AttributionSlice> out;
  for (const auto& [node, by_ts] : procs) {
    std::vector<Seconds> stamps;
    for (const auto& [ts, v] : by_ts) stamps.push_back(ts);
    for (std::size_t i = 0; i + 1 < stamps.size(); ++i) {
      const Seconds t0 = stamps[i];
      const Seconds t1 = stamps[i + 1];
      const Seconds mid = 0.5 * (t0 + t1);
      const auto& start = by_ts.at(t0);
      const auto& end = by_ts.at(t1);

      AttributionSlice slice;
      slice.node_id = node;
      slice.interval = {t0, t1};

      std::map<JobId, double> deltas;
      double delta_total = 0;
      for (const auto& p : end) {
        for (const auto& q : start) {
          if (q.pid != p.pid) continue;
          double d = p.cpu_time_s - q.cpu_time_s;
          deltas[owner(node, p.pid, t0)] += d;
          delta_total += d;
        }
      }
      Watts cpu_power = 0;
      for (const auto& [key, s] : series) {
        if (key.first != node || key.second.kind != SourceKind::kCpuPackage) continue;
        if (auto w = naive_interpolate(s, mid)) cpu_power += *w;
      }
      if (delta_total > 0)
        naive_split(deltas, delta_total, cpu_power, slice.per_job, slice.unattributed_cpu_w, false);
      else
        slice.unattributed_cpu_w = cpu_power;

      for (const auto& [key, s] : series) {
        if (key.first != node || key.second.kind != SourceKind::kGpu) continue;
        auto w = naive_interpolate(s, mid);
        if (!w) continue;
        std::map<JobId, double> sm, mem, present;
        double sm_total = 0, mem_total = 0;
        for (const auto& p : end) {
          if (p.gpu_index != key.second.index) continue;
          JobId j = owner(node, p.pid, t0);
          present[j] = 1.0;
          sm[j] += p.gpu_sm_pct.value_or(0.0);
          mem[j] += p.gpu_mem_mib.value_or(0.0);
          sm_total += p.gpu_sm_pct.value_or(0.0);
          mem_total += p.gpu_mem_mib.value_or(0.0);
        }
        if (present.empty())
          slice.unattributed_gpu_w += *w;
        else if (sm_total > 0)
          naive_split(sm, sm_total, *w, slice.per_job, slice.unattributed_gpu_w, true);
        else if (mem_total > 0)
          naive_split(mem, mem_total, *w, slice.per_job, slice.unattributed_gpu_w, true);
        else
          naive_split(present, static_cast<double>(present.size()), *w, slice.per_job,
                      slice.unattributed_gpu_w, true);
      }
      out.push_back(std::move(slice));
    }
  }
  return out;
}

NodeIntegral integrate_node_power(const std::vector<PowerSample>& power,
                                  const std::vector<AttributionSlice>& slices,
                                  const std::string& node_id, Seconds max_gap_s) {
  SeriesMap series = group_series(power);
  NodeIntegral out;
  for (const auto& s : slices) {
    if (s.node_id != node_id) continue;
    const Seconds dt = s.interval.t1 - s.interval.t0;
    if (dt > max_gap_s) continue;
    const Seconds mid = 0.5 * (s.interval.t0 + s.interval.t1);
    for (const auto& [key, samples] : series) {
      if (key.first != node_id) continue;
      auto w = naive_interpolate(samples, mid);
      if (!w) continue;
      if (key.second.kind == SourceKind::kCpuPackage) out.cpu_j += static_cast<long double>(*w) * dt;
      if (key.second.kind == SourceKind::kGpu) out.gpu_j += static_cast<long double>(*w) * dt;
    }
  }
  return out;
}

std::vector<PowerSample> make_external(const Scenario& sc, double k, Watts baseline, double noise_sd,
                                       std::mt19937_64& rng) {
  SeriesMap series = group_series(sc.power);
  std::set<std::string> nodes;
  for (const auto& [key, s] : series) nodes.insert(key.first);
  std::normal_distribution<double> noise(0.0, noise_sd);

  std::vector<PowerSample> out;
  for (const auto& node : nodes) {
    Seconds from = INFINITY, to = -INFINITY;
    for (const auto& [key, s] : series) {
      if (key.first != node) continue;
      from = std::min(from, s.front().ts);
      to = std::max(to, s.back().ts);
    }
    for (std::int64_t t_ms = std::llround(from * 1000); t_ms <= std::llround(to * 1000); t_ms += 5000) {
      const Seconds t = ms_to_s(t_ms);
      Watts total = 0;
      for (const auto& [key, s] : series)
        if (key.first == node)
          if (auto w = naive_interpolate(s, t)) total += *w;
      Watts w = std::max(0.0, k * total + baseline + noise(rng));
      out.push_back({node, Source::external(), t, std::round(w * 1000.0) / 1000.0});
    }
  }
  return out;
}

void write_scenario(const std::filesystem::path& dir, const Scenario& sc,
                    const std::vector<PowerSample>& external) {
  std::ofstream power(dir / "power.jsonl");
  write_power_trace(power, sc.power);
  std::ofstream proc(dir / "proc.jsonl");
  write_proc_trace(proc, sc.procs);
  std::ofstream pidmap(dir / "pidmap.jsonl");
  write_pidmap(pidmap, sc.pidmaps);
  std::ofstream jobs(dir / "jobs.jsonl");
  write_jobs(jobs, sc.jobs);
  if (!external.empty()) {
    std::ofstream ext(dir / "external.jsonl");
    write_power_trace(ext, external);
  }
}

void write_status_table_fixture(const std::filesystem::path& dir) {
  struct Row {
    JobStatus status;
    int n;
    double gpu_kwh, cpu_kwh, ext_kwh;
  };
  const Row rows[] = {{JobStatus::completed(), 1148, 63, 13, 229},
                      {JobStatus::failed(), 134, 10, 8, 76},
                      {JobStatus::cancelled(), 62, 6, 2, 29},
                      {JobStatus::timeout(), 17, 41, 9, 235}};
  constexpr Seconds kSliceS = 10.0;
  std::vector<JobRecord> jobs;
  std::vector<AttributionSlice> slices;
  JobId id = 1;
  Seconds t = 1'700'000'000.0;
  for (const auto& r : rows) {
    for (int i = 0; i < r.n; ++i, ++id, t += kSliceS) {
      jobs.push_back({id, "u" + std::to_string(id % 5), "n1", t - 60, t, t + kSliceS, r.status});
      AttributionSlice s;
      s.node_id = "n1";
      s.interval = {t, t + kSliceS};
      const double per_job_w = kJoulesPerKwh / kSliceS / r.n;
      s.per_job[id] = {r.cpu_kwh * per_job_w, r.gpu_kwh * per_job_w, r.ext_kwh * per_job_w};
      s.unattributed_ext_w = 0.0;
      slices.push_back(std::move(s));
    }
  }
  std::ofstream jobs_out(dir / "jobs.jsonl");
  write_jobs(jobs_out, jobs);
  std::ofstream slices_out(dir / "slices.jsonl");
  write_slices(slices_out, slices);
}

TempDir::TempDir() {
  static std::mt19937_64 rng(std::random_device{}());
  path_ = std::filesystem::temp_directory_path() / ("wattscope-" + std::to_string(rng()));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void TempDir::write(const std::string& name, const std::string& content) const {
  std::ofstream out(path_ / name, std::ios::binary);
  out << content;
}

}  // namespace wattscope::testing
