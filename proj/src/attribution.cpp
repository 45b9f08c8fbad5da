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

#include "wattscope/attribution.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <ostream>
#include <set>
#include <thread>
#include <unordered_map>

#include <fmt/core.h>

#include "jsonl.hpp"

namespace wattscope {

using detail::Json;
using detail::OrderedJson;

ShareResult cpu_shares(const std::map<JobId, Seconds>& deltas, Watts node_power_w) {
  Seconds total = 0;
  for (const auto& [job, delta] : deltas) {
    if (!(delta >= 0) || !std::isfinite(delta))
      throw Error(ErrorCode::kNegativeDelta, fmt::format("job {} delta {}", job, delta));
    total += delta;
  }

  ShareResult out;
  if (total <= 0) {
    out.unattributed = node_power_w;
    return out;
  }
  for (const auto& [job, delta] : deltas) {
    Watts share = node_power_w * (delta / total);
    if (job == kUnattributedJob)
      out.unattributed += share;
    else
      out.per_job[job] = share;
  }
  return out;
}

ShareResult gpu_shares(std::span<const GpuProcess> procs, Watts gpu_power_w) {
  ShareResult out;
  if (procs.empty()) {
    out.unattributed = gpu_power_w;
    return out;
  }

  std::map<JobId, double> sm;
  std::map<JobId, double> mem;
  double sm_total = 0;
  double mem_total = 0;
  for (const auto& p : procs) {
    double s = p.sm_pct.value_or(0.0);
    double m = p.mem_mib.value_or(0.0);
    sm[p.job_id] += s;
    mem[p.job_id] += m;
    sm_total += s;
    mem_total += m;
  }

  auto split = [&](const std::map<JobId, double>& weights, double total) {
    for (const auto& [job, w] : weights) {
      Watts share = gpu_power_w * (w / total);
      if (job == kUnattributedJob)
        out.unattributed += share;
      else
        out.per_job[job] = share;
    }
  };

  if (sm_total > 0) {
    split(sm, sm_total);
  } else if (mem_total > 0) {
    split(mem, mem_total);
  } else {
    std::map<JobId, double> equal;
    for (const auto& [job, w] : sm) equal[job] = 1.0;
    split(equal, static_cast<double>(equal.size()));
  }
  return out;
}

namespace {

struct NodeInputs {
  std::string node_id;
  std::vector<const ProcSnapshot*> procs;
  std::vector<const PowerSeries*> cpu;
  std::vector<const PowerSeries*> gpu;
};

std::vector<AttributionSlice> attribute_node(const NodeInputs& node, const Timelines& timelines) {
  // Group snapshots by instant, each group ordered by pid.
  std::map<Seconds, std::vector<const ProcSnapshot*>> by_ts;
  for (const auto* p : node.procs) by_ts[p->ts].push_back(p);
  for (auto& [ts, group] : by_ts)
    std::sort(group.begin(), group.end(), [](auto* a, auto* b) { return a->pid < b->pid; });
  if (by_ts.size() < 2) return {};

  std::vector<Seconds> stamps;
  stamps.reserve(by_ts.size());
  for (const auto& [ts, group] : by_ts) stamps.push_back(ts);

  std::vector<Seconds> mids(stamps.size() - 1);
  for (std::size_t i = 0; i + 1 < stamps.size(); ++i) mids[i] = 0.5 * (stamps[i] + stamps[i + 1]);

  auto resample_all = [&](const std::vector<const PowerSeries*>& series) {
    std::vector<std::vector<std::optional<Watts>>> out;
    for (const auto* s : series) out.push_back(resample_to_grid(s->samples, mids));
    return out;
  };
  auto cpu_power = resample_all(node.cpu);
  auto gpu_power = resample_all(node.gpu);

  std::vector<AttributionSlice> slices;
  slices.reserve(mids.size());
  auto prev = by_ts.begin();
  for (std::size_t i = 0; i + 1 < stamps.size(); ++i) {
    auto next = std::next(prev);
    const Seconds t0 = stamps[i];
    const Seconds t1 = stamps[i + 1];

    std::unordered_map<Pid, Seconds> start_cpu;
    for (const auto* p : prev->second) start_cpu.emplace(p->pid, p->cpu_time_s);

    auto owner_at_start = [&](Pid pid) {
      return timelines.owner(node.node_id, pid, t0).value_or(kUnattributedJob);
    };

    std::map<JobId, Seconds> deltas;
    for (const auto* p : next->second) {
      auto it = start_cpu.find(p->pid);
      if (it == start_cpu.end()) continue;
      deltas[owner_at_start(p->pid)] += p->cpu_time_s - it->second;
    }

    AttributionSlice slice;
    slice.interval = {t0, t1};
    slice.node_id = node.node_id;

    Watts cpu_w = 0;
    for (const auto& series : cpu_power)
      if (series[i]) cpu_w += *series[i];
    ShareResult cpu = cpu_shares(deltas, cpu_w);
    slice.unattributed_cpu_w = cpu.unattributed;
    for (const auto& [job, w] : cpu.per_job) slice.per_job[job].cpu_w = w;

    for (std::size_t g = 0; g < node.gpu.size(); ++g) {
      if (!gpu_power[g][i]) continue;
      const int gpu_index = node.gpu[g]->source.index;
      std::vector<GpuProcess> on_gpu;
      for (const auto* p : next->second) {
        if (p->gpu_index != gpu_index) continue;
        on_gpu.push_back({owner_at_start(p->pid), p->gpu_sm_pct, p->gpu_mem_mib});
      }
      ShareResult gpu = gpu_shares(on_gpu, *gpu_power[g][i]);
      slice.unattributed_gpu_w += gpu.unattributed;
      for (const auto& [job, w] : gpu.per_job) slice.per_job[job].gpu_w += w;
    }

    slices.push_back(std::move(slice));
    prev = next;
  }
  return slices;
}

}  // namespace

std::vector<AttributionSlice> attribute(const TraceBundle& bundle, const Timelines& timelines,
                                        const AttributeOptions& options) {
  auto series = split_series(bundle.power);

  std::map<std::string, NodeInputs> nodes;
  for (const auto& p : bundle.procs) {
    auto& n = nodes[p.node_id];
    n.node_id = p.node_id;
    n.procs.push_back(&p);
  }
  for (const auto& s : series) {
    auto it = nodes.find(s.node_id);
    if (it == nodes.end()) continue;
    if (s.source.kind == SourceKind::kCpuPackage) it->second.cpu.push_back(&s);
    if (s.source.kind == SourceKind::kGpu) it->second.gpu.push_back(&s);
  }

  std::vector<const NodeInputs*> work;
  for (const auto& [id, n] : nodes) work.push_back(&n);
  std::vector<std::vector<AttributionSlice>> results(work.size());

  const unsigned threads = std::clamp<unsigned>(options.threads, 1, std::max<std::size_t>(work.size(), 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < work.size(); ++i) results[i] = attribute_node(*work[i], timelines);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(work.size());
    {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < work.size(); i = next++) {
            try {
              results[i] = attribute_node(*work[i], timelines);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          }
        });
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<AttributionSlice> out;
  for (auto& r : results) std::move(r.begin(), r.end(), std::back_inserter(out));
  return out;
}

EnergyLedger integrate_energy(std::span<const AttributionSlice> slices, Seconds max_gap_s) {
  std::map<std::string, std::vector<const AttributionSlice*>> per_node;
  for (const auto& s : slices) per_node[s.node_id].push_back(&s);

  EnergyLedger ledger;
  auto add_ext = [](JobEnergy& e, const std::optional<Watts>& w, Seconds dt) {
    if (!w) return;
    e.ext_j = e.ext_j.value_or(0.0) + *w * dt;
  };

  for (auto& [node, list] : per_node) {
    std::stable_sort(list.begin(), list.end(), [](auto* a, auto* b) {
      return a->interval.t0 < b->interval.t0;
    });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i]->interval.t0 < list[i - 1]->interval.t1)
        throw Error(ErrorCode::kOverlappingSlices,
                    fmt::format("node {} at t={}", node, list[i]->interval.t0));
    }
    for (const auto* s : list) {
      const Seconds dt = s->interval.duration();
      if (dt > max_gap_s) {
        ledger.coverage.excluded_s += dt;
        ++ledger.coverage.excluded_intervals;
        continue;
      }
      ledger.coverage.covered_s += dt;
      for (const auto& [job, p] : s->per_job) {
        JobEnergy& e = ledger.jobs[job];
        e.cpu_j += p.cpu_w * dt;
        e.gpu_j += p.gpu_w * dt;
        add_ext(e, p.ext_w, dt);
      }
      ledger.unattributed.cpu_j += s->unattributed_cpu_w * dt;
      ledger.unattributed.gpu_j += s->unattributed_gpu_w * dt;
      add_ext(ledger.unattributed, s->unattributed_ext_w, dt);
    }
  }
  return ledger;
}

std::string serialize_slice(const AttributionSlice& slice) {
  OrderedJson j;
  j["node"] = slice.node_id;
  j["t0"] = slice.interval.t0;
  j["t1"] = slice.interval.t1;
  OrderedJson jobs = OrderedJson::object();
  for (const auto& [job, p] : slice.per_job) {
    OrderedJson entry;
    entry["cpu_w"] = p.cpu_w;
    entry["gpu_w"] = p.gpu_w;
    if (p.ext_w) entry["ext_w"] = *p.ext_w;
    jobs[std::to_string(job)] = std::move(entry);
  }
  j["jobs"] = std::move(jobs);
  j["unattr_cpu_w"] = slice.unattributed_cpu_w;
  j["unattr_gpu_w"] = slice.unattributed_gpu_w;
  if (slice.unattributed_ext_w) j["unattr_ext_w"] = *slice.unattributed_ext_w;
  return j.dump();
}

void write_slices(std::ostream& out, std::span<const AttributionSlice> slices) {
  for (const auto& s : slices) out << serialize_slice(s) << '\n';
}

namespace {

Watts require_watts(const Json& obj, const char* key, std::size_t line) {
  Watts w = detail::require_number(obj, key, line);
  if (w < 0) throw Error(ErrorCode::kNegativePower, fmt::format("{} = {}", key, w), line);
  return w;
}

std::optional<Watts> optional_watts(const Json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key)) return std::nullopt;
  return require_watts(obj, key, line);
}

}  // namespace

std::vector<AttributionSlice> parse_slices(std::istream& in) {
  std::vector<AttributionSlice> out;
  detail::for_each_record(in, [&](const Json& obj, std::size_t line) {
    AttributionSlice s;
    s.node_id = detail::require_string(obj, "node", line);
    if (s.node_id.empty()) detail::malformed(line, "empty node id");
    s.interval.t0 = detail::quantize_ms(detail::require_number(obj, "t0", line));
    s.interval.t1 = detail::quantize_ms(detail::require_number(obj, "t1", line));
    if (!(s.interval.t1 > s.interval.t0)) detail::malformed(line, "expected t1 > t0");
    const Json& jobs = detail::require_field(obj, "jobs", line);
    if (!jobs.is_object()) detail::malformed(line, "field 'jobs' is not an object");
    for (const auto& [key, entry] : jobs.items()) {
      JobId job = 0;
      auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), job);
      if (ec != std::errc() || ptr != key.data() + key.size() || job <= 0)
        detail::malformed(line, fmt::format("bad job key '{}'", key));
      if (!entry.is_object()) detail::malformed(line, "job entry is not an object");
      JobPower p;
      p.cpu_w = require_watts(entry, "cpu_w", line);
      p.gpu_w = require_watts(entry, "gpu_w", line);
      p.ext_w = optional_watts(entry, "ext_w", line);
      s.per_job[job] = p;
    }
    s.unattributed_cpu_w = require_watts(obj, "unattr_cpu_w", line);
    s.unattributed_gpu_w = require_watts(obj, "unattr_gpu_w", line);
    s.unattributed_ext_w = optional_watts(obj, "unattr_ext_w", line);
    out.push_back(std::move(s));
  });
  return out;
}

}  // namespace wattscope
