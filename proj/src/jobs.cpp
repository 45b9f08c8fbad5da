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

#include "wattscope/jobs.hpp"

#include <algorithm>
#include <array>
#include <ostream>

#include <fmt/core.h>

#include "jsonl.hpp"

namespace wattscope {

using detail::Json;
using detail::OrderedJson;

namespace {

constexpr std::array<std::string_view, 9> kNonTerminal = {
    "PENDING", "RUNNING", "SUSPENDED", "CONFIGURING", "COMPLETING",
    "REQUEUED", "RESIZING", "STAGE_OUT", "SIGNALING"};

int kind_rank(JobStatus::Kind kind) { return static_cast<int>(kind); }

std::pair<std::string, Seconds> snapshot_key(const PidMapSnapshot& s) { return {s.node_id, s.ts}; }

// Sorts by (node, ts) and folds snapshots sharing a key. Throws DuplicatePid
// when one pid is listed twice at the same instant.
std::vector<PidMapSnapshot> merge_snapshots(std::vector<PidMapSnapshot> snaps) {
  std::stable_sort(snaps.begin(), snaps.end(), [](const auto& a, const auto& b) {
    return snapshot_key(a) < snapshot_key(b);
  });
  std::vector<PidMapSnapshot> merged;
  for (auto& s : snaps) {
    if (!merged.empty() && snapshot_key(merged.back()) == snapshot_key(s)) {
      auto& dst = merged.back().assignments;
      dst.insert(dst.end(), s.assignments.begin(), s.assignments.end());
    } else {
      merged.push_back(std::move(s));
    }
  }
  for (const auto& s : merged) {
    std::vector<Pid> pids;
    pids.reserve(s.assignments.size());
    for (const auto& [pid, job] : s.assignments) pids.push_back(pid);
    std::sort(pids.begin(), pids.end());
    auto dup = std::adjacent_find(pids.begin(), pids.end());
    if (dup != pids.end())
      throw Error(ErrorCode::kDuplicatePid, fmt::format("pid {} at ts {} on {}", *dup, s.ts, s.node_id));
  }
  return merged;
}

}  // namespace

std::optional<JobStatus> JobStatus::parse(std::string_view raw) {
  if (raw == "COMPLETED") return completed();
  if (raw == "FAILED") return failed();
  if (raw == "TIMEOUT") return timeout();
  if (raw == "CANCELLED" || raw.starts_with("CANCELLED ")) return cancelled();
  if (raw.empty()) return std::nullopt;
  if (std::find(kNonTerminal.begin(), kNonTerminal.end(), raw) != kNonTerminal.end())
    return std::nullopt;
  return other(std::string(raw));
}

std::strong_ordering JobStatus::operator<=>(const JobStatus& other) const {
  if (auto c = kind_rank(kind_) <=> kind_rank(other.kind_); c != 0) return c;
  return label_.compare(other.label_) <=> 0;
}

Timelines::Timelines(std::map<JobId, PidTimeline> by_job) : by_job_(std::move(by_job)) {
  std::map<std::string, std::vector<const PidTimeline*>> per_node;
  for (const auto& [id, tl] : by_job_) per_node[tl.node_id].push_back(&tl);

  for (const auto& [node, lines] : per_node) {
    std::vector<Seconds> events;
    for (const auto* tl : lines)
      for (const auto& e : tl->entries) events.push_back(e.ts);
    std::sort(events.begin(), events.end());
    events.erase(std::unique(events.begin(), events.end()), events.end());
    if (events.empty()) continue;

    NodeIndex index;
    index.ts = events;
    index.owners.reserve(events.size());
    std::vector<std::size_t> cursor(lines.size(), 0);
    std::vector<const std::set<Pid>*> current(lines.size(), nullptr);
    for (Seconds t : events) {
      for (std::size_t j = 0; j < lines.size(); ++j) {
        const auto& entries = lines[j]->entries;
        while (cursor[j] < entries.size() && entries[cursor[j]].ts <= t) {
          current[j] = &entries[cursor[j]].pids;
          ++cursor[j];
        }
      }
      std::vector<std::pair<Pid, JobId>> owners;
      for (std::size_t j = 0; j < lines.size(); ++j) {
        if (!current[j]) continue;
        for (Pid p : *current[j]) owners.emplace_back(p, lines[j]->job_id);
      }
      std::sort(owners.begin(), owners.end());
      index.owners.push_back(std::move(owners));
    }
    nodes_.emplace(node, std::move(index));
  }
}

std::optional<JobId> Timelines::owner(std::string_view node_id, Pid pid, Seconds t) const {
  auto it = nodes_.find(node_id);
  if (it == nodes_.end()) return std::nullopt;
  const NodeIndex& index = it->second;
  auto upper = std::upper_bound(index.ts.begin(), index.ts.end(), t);
  if (upper == index.ts.begin()) return std::nullopt;
  const auto& owners = index.owners[static_cast<std::size_t>(upper - index.ts.begin()) - 1];
  auto hit = std::lower_bound(owners.begin(), owners.end(), pid,
                              [](const auto& entry, Pid p) { return entry.first < p; });
  if (hit == owners.end() || hit->first != pid) return std::nullopt;
  return hit->second;
}

std::vector<JobRecord> parse_jobs(std::istream& in) {
  std::vector<JobRecord> out;
  std::map<JobId, std::string> seen;
  detail::for_each_record(in, [&](const Json& obj, std::size_t line) {
    JobRecord job;
    job.job_id = detail::require_int(obj, "job", line);
    if (job.job_id <= 0) detail::malformed(line, "job id must be positive");
    job.user = detail::require_string(obj, "user", line);
    job.node_id = detail::require_string(obj, "node", line);
    if (job.node_id.empty()) detail::malformed(line, "empty node id");
    job.t_submit = detail::quantize_ms(detail::require_number(obj, "submit", line));
    job.t_start = detail::quantize_ms(detail::require_number(obj, "start", line));
    job.t_end = detail::quantize_ms(detail::require_number(obj, "end", line));
    if (!(job.t_submit <= job.t_start && job.t_start <= job.t_end))
      detail::malformed(line, "expected submit <= start <= end");
    std::string raw = detail::require_string(obj, "status", line);
    auto status = JobStatus::parse(raw);
    if (!status) detail::malformed(line, fmt::format("non-terminal status '{}'", raw));
    job.status = *status;

    auto [it, inserted] = seen.emplace(job.job_id, job.node_id);
    if (!inserted) {
      if (it->second != job.node_id)
        throw Error(ErrorCode::kUnsupportedMultiNodeJob,
                    fmt::format("job {} on {} and {}", job.job_id, it->second, job.node_id), line);
      detail::malformed(line, fmt::format("duplicate job {}", job.job_id));
    }
    out.push_back(std::move(job));
  });
  return out;
}

std::string serialize_job(const JobRecord& job) {
  OrderedJson j;
  j["job"] = job.job_id;
  j["user"] = job.user;
  j["node"] = job.node_id;
  j["submit"] = job.t_submit;
  j["start"] = job.t_start;
  j["end"] = job.t_end;
  j["status"] = job.status.label();
  return j.dump();
}

void write_jobs(std::ostream& out, std::span<const JobRecord> jobs) {
  for (const auto& j : jobs) out << serialize_job(j) << '\n';
}

std::vector<PidMapSnapshot> parse_pidmap(std::istream& in) {
  std::vector<PidMapSnapshot> raw;
  std::map<std::pair<std::string, Seconds>, std::set<Pid>> seen;
  detail::for_each_record(in, [&](const Json& obj, std::size_t line) {
    PidMapSnapshot snap;
    snap.node_id = detail::require_string(obj, "node", line);
    if (snap.node_id.empty()) detail::malformed(line, "empty node id");
    snap.ts = detail::quantize_ms(detail::require_number(obj, "ts", line));
    const Json& map = detail::require_field(obj, "map", line);
    if (!map.is_array()) detail::malformed(line, "field 'map' is not an array");
    auto& pids = seen[{snap.node_id, snap.ts}];
    for (const Json& pair : map) {
      if (!pair.is_array() || pair.size() != 2) detail::malformed(line, "map entries must be [pid, job]");
      Pid pid = detail::as_integer(pair[0], "pid", line);
      JobId job = detail::as_integer(pair[1], "job", line);
      if (pid <= 0 || pid > INT32_MAX) detail::malformed(line, "pid must be a positive 32-bit int");
      if (job <= 0) detail::malformed(line, "job id must be positive");
      if (!pids.insert(pid).second)
        throw Error(ErrorCode::kDuplicatePid, fmt::format("pid {} at ts {}", pid, snap.ts), line);
      snap.assignments.emplace_back(pid, job);
    }
    raw.push_back(std::move(snap));
  });
  return merge_snapshots(std::move(raw));
}

std::string serialize_pidmap(const PidMapSnapshot& snap) {
  OrderedJson j;
  j["node"] = snap.node_id;
  j["ts"] = snap.ts;
  OrderedJson map = OrderedJson::array();
  for (const auto& [pid, job] : snap.assignments) map.push_back({pid, job});
  j["map"] = std::move(map);
  return j.dump();
}

void write_pidmap(std::ostream& out, std::span<const PidMapSnapshot> snaps) {
  for (const auto& s : snaps) out << serialize_pidmap(s) << '\n';
}

Timelines build_timelines(std::span<const PidMapSnapshot> snapshots, std::span<const JobRecord> jobs) {
  std::map<JobId, const JobRecord*> job_index;
  for (const auto& j : jobs) job_index.emplace(j.job_id, &j);

  auto merged = merge_snapshots({snapshots.begin(), snapshots.end()});

  // Per node: snapshot instants with each job's pid set at that instant.
  struct Instant {
    Seconds ts;
    std::map<JobId, std::set<Pid>> sets;
  };
  std::map<std::string, std::vector<Instant>> per_node;
  for (const auto& s : merged) {
    Instant instant{s.ts, {}};
    for (const auto& [pid, job] : s.assignments) {
      auto it = job_index.find(job);
      if (it == job_index.end())
        throw Error(ErrorCode::kUnknownJob, fmt::format("job {} in pid map at ts {}", job, s.ts));
      if (it->second->node_id != s.node_id)
        throw Error(ErrorCode::kUnsupportedMultiNodeJob,
                    fmt::format("job {} bound to {} but seen on {}", job, it->second->node_id, s.node_id));
      instant.sets[job].insert(pid);
    }
    per_node[s.node_id].push_back(std::move(instant));
  }

  std::map<JobId, PidTimeline> by_job;
  for (const auto& j : jobs) by_job[j.job_id] = PidTimeline{j.job_id, j.node_id, {}};

  for (const auto& [node, instants] : per_node) {
    std::map<JobId, std::pair<std::size_t, std::size_t>> appearance;
    for (std::size_t i = 0; i < instants.size(); ++i) {
      for (const auto& [job, pids] : instants[i].sets) {
        auto [it, inserted] = appearance.emplace(job, std::make_pair(i, i));
        if (!inserted) it->second.second = i;
      }
    }
    for (const auto& [job, range] : appearance) {
      // Entries run from the first sighting through the first snapshot after
      // the last sighting, which closes the hold with an empty set.
      std::size_t stop = std::min(range.second + 1, instants.size() - 1);
      auto& entries = by_job[job].entries;
      for (std::size_t i = range.first; i <= stop; ++i) {
        auto found = instants[i].sets.find(job);
        entries.push_back({instants[i].ts, found == instants[i].sets.end() ? std::set<Pid>{} : found->second});
      }
    }
  }
  return Timelines(std::move(by_job));
}

std::optional<JobId> pid_owner(const Timelines& timelines, std::string_view node_id, Pid pid, Seconds t) {
  return timelines.owner(node_id, pid, t);
}

}  // namespace wattscope
