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

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wattscope/telemetry.hpp"

namespace wattscope {

using JobId = std::int64_t;
using Pid = std::int64_t;

/// Pseudo-job that collects processes never seen in a pid map snapshot.
inline constexpr JobId kUnattributedJob = 0;

/// Terminal scheduler state. The four states the reports break out get their
/// own kind; anything else terminal is kept verbatim as kOther.
class JobStatus {
 public:
  enum class Kind { kCompleted, kFailed, kCancelled, kTimeout, kOther };

  JobStatus() = default;
  static JobStatus completed() { return JobStatus(Kind::kCompleted, "COMPLETED"); }
  static JobStatus failed() { return JobStatus(Kind::kFailed, "FAILED"); }
  static JobStatus cancelled() { return JobStatus(Kind::kCancelled, "CANCELLED"); }
  static JobStatus timeout() { return JobStatus(Kind::kTimeout, "TIMEOUT"); }
  static JobStatus other(std::string raw) { return JobStatus(Kind::kOther, std::move(raw)); }

  /// Maps a scheduler state string. "CANCELLED by <uid>" folds into
  /// kCancelled. Returns nullopt for non-terminal states (PENDING, RUNNING, ...).
  static std::optional<JobStatus> parse(std::string_view raw);

  Kind kind() const noexcept { return kind_; }
  const std::string& label() const noexcept { return label_; }

  bool operator==(const JobStatus&) const = default;
  /// Report order: COMPLETED, FAILED, CANCELLED, TIMEOUT, then others by label.
  std::strong_ordering operator<=>(const JobStatus& other) const;

 private:
  JobStatus(Kind kind, std::string label) : kind_(kind), label_(std::move(label)) {}

  Kind kind_ = Kind::kCompleted;
  std::string label_ = "COMPLETED";
};

struct JobRecord {
  JobId job_id = 0;
  std::string user;
  std::string node_id;
  Seconds t_submit = 0;
  Seconds t_start = 0;
  Seconds t_end = 0;
  JobStatus status;

  bool operator==(const JobRecord&) const = default;
};

struct PidMapSnapshot {
  std::string node_id;
  Seconds ts = 0;
  std::vector<std::pair<Pid, JobId>> assignments;

  bool operator==(const PidMapSnapshot&) const = default;
};

struct PidTimelineEntry {
  Seconds ts = 0;
  std::set<Pid> pids;

  bool operator==(const PidTimelineEntry&) const = default;
};

/// The pid set of one job over time. Each entry holds from its ts until the
/// next entry; before the first entry and after an empty entry the job owns
/// nothing.
struct PidTimeline {
  JobId job_id = 0;
  std::string node_id;
  std::vector<PidTimelineEntry> entries;

  bool operator==(const PidTimeline&) const = default;
};

/// Job timelines plus a per-node index answering "who owns pid p at t".
class Timelines {
 public:
  Timelines() = default;
  explicit Timelines(std::map<JobId, PidTimeline> by_job);

  const std::map<JobId, PidTimeline>& by_job() const noexcept { return by_job_; }
  std::optional<JobId> owner(std::string_view node_id, Pid pid, Seconds t) const;

 private:
  struct NodeIndex {
    std::vector<Seconds> ts;
    // owners[i] is sorted by pid, valid on [ts[i], ts[i+1]).
    std::vector<std::vector<std::pair<Pid, JobId>>> owners;
  };

  std::map<JobId, PidTimeline> by_job_;
  std::map<std::string, NodeIndex, std::less<>> nodes_;
};

std::vector<JobRecord> parse_jobs(std::istream& in);
std::string serialize_job(const JobRecord& job);
void write_jobs(std::ostream& out, std::span<const JobRecord> jobs);

/// Reads pid map snapshots. Lines sharing (node, ts) are merged; the result
/// is ordered by (node, ts).
std::vector<PidMapSnapshot> parse_pidmap(std::istream& in);
std::string serialize_pidmap(const PidMapSnapshot& snap);
void write_pidmap(std::ostream& out, std::span<const PidMapSnapshot> snaps);

/// Reconstructs step-held pid sets for every job. Snapshot order does not
/// matter. Every job in the result has a timeline, possibly empty.
Timelines build_timelines(std::span<const PidMapSnapshot> snapshots, std::span<const JobRecord> jobs);

std::optional<JobId> pid_owner(const Timelines& timelines, std::string_view node_id, Pid pid,
                               Seconds t);

}  // namespace wattscope
