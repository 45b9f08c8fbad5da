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

#include "wattscope/cli.hpp"

#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "wattscope/analytics.hpp"
#include "wattscope/attribution.hpp"
#include "wattscope/calibration.hpp"
#include "wattscope/error.hpp"
#include "wattscope/jobs.hpp"
#include "wattscope/telemetry.hpp"
#include "jsonl.hpp"

namespace wattscope::cli {

namespace {

struct RunConfig {
  std::string power;
  std::string proc;
  std::string pidmap;
  std::string jobs;
  std::string external;
  std::string slices;
  std::string model;
  std::string capacities;
  std::string format = "text";
  std::size_t bins = kDefaultBins;
  double max_gap_s = kDefaultMaxGapS;
  std::string column = "ext";
  std::string metric = "sm";
  std::string population = "sample";
  unsigned threads = 1;
  bool affine = false;
};

/// Bad flag combinations detected after parsing.
struct UsageError {
  std::string message;
};

/// A library error raised while reading one input file.
struct FileError {
  std::string path;
  Error error;
};

template <class Parser>
auto load(const std::string& path, Parser&& parser) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError{path, Error(ErrorCode::kIo, "cannot open file")};
  try {
    return parser(in);
  } catch (const Error& e) {
    throw FileError{path, e};
  }
}

std::vector<PowerSample> load_power(const std::string& path, PowerTraceKind kind) {
  return load(path, [kind](std::istream& in) { return parse_power_trace(in, kind); });
}

std::vector<ProcSnapshot> load_procs(const std::string& path) {
  return load(path, [](std::istream& in) { return parse_proc_trace(in); });
}

std::vector<JobRecord> load_jobs(const std::string& path) {
  return load(path, [](std::istream& in) { return parse_jobs(in); });
}

Timelines load_timelines(const RunConfig& cfg, const std::vector<JobRecord>& jobs) {
  if (cfg.pidmap.empty()) return build_timelines({}, jobs);
  auto snaps = load(cfg.pidmap, [](std::istream& in) { return parse_pidmap(in); });
  return build_timelines(snaps, jobs);
}

Format output_format(const RunConfig& cfg) { return *parse_format(cfg.format); }

void require(bool condition, const char* message) {
  if (!condition) throw UsageError{message};
}

std::vector<AttributionSlice> compute_slices(const RunConfig& cfg, const std::vector<JobRecord>& jobs) {
  auto power = load_power(cfg.power, PowerTraceKind::kSoftware);
  auto procs = load_procs(cfg.proc);
  Timelines timelines = load_timelines(cfg, jobs);
  auto slices = attribute(make_bundle(std::move(power), std::move(procs)), timelines,
                          AttributeOptions{cfg.threads});
  if (!cfg.model.empty()) {
    auto models = load(cfg.model, [](std::istream& in) { return parse_models(in); });
    slices = apply_calibrations(models, slices);
  }
  return slices;
}

void cmd_validate(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.power.empty() || !cfg.proc.empty() || !cfg.pidmap.empty() || !cfg.jobs.empty() ||
              !cfg.external.empty(),
          "validate needs at least one input file");
  std::vector<std::string> parts;
  if (!cfg.power.empty()) {
    auto power = load_power(cfg.power, PowerTraceKind::kSoftware);
    parts.push_back(fmt::format("power={} samples/{} series", power.size(), split_series(power).size()));
  }
  if (!cfg.proc.empty()) {
    auto procs = load_procs(cfg.proc);
    parts.push_back(fmt::format("proc={} snapshots", procs.size()));
  }
  if (!cfg.external.empty()) {
    auto ext = load_power(cfg.external, PowerTraceKind::kExternal);
    parts.push_back(fmt::format("external={} samples/{} series", ext.size(), split_series(ext).size()));
  }
  std::vector<JobRecord> jobs;
  if (!cfg.jobs.empty()) {
    jobs = load_jobs(cfg.jobs);
    parts.push_back(fmt::format("jobs={}", jobs.size()));
  }
  if (!cfg.pidmap.empty()) {
    auto snaps = load(cfg.pidmap, [](std::istream& in) { return parse_pidmap(in); });
    parts.push_back(fmt::format("pidmap={} snapshots", snaps.size()));
    if (!cfg.jobs.empty()) build_timelines(snaps, jobs);
  }
  out << "ok";
  for (const auto& p : parts) out << ' ' << p;
  out << '\n';
}

void cmd_attribute(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.power.empty() && !cfg.proc.empty(), "attribute needs --power and --proc");
  require(cfg.pidmap.empty() || !cfg.jobs.empty(), "--pidmap needs --jobs");
  std::vector<JobRecord> jobs;
  if (!cfg.jobs.empty()) jobs = load_jobs(cfg.jobs);
  write_slices(out, compute_slices(cfg, jobs));
}

void cmd_calibrate(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.power.empty() && !cfg.external.empty(), "calibrate needs --power and --external");
  auto software = load_power(cfg.power, PowerTraceKind::kSoftware);
  auto external = load_power(cfg.external, PowerTraceKind::kExternal);
  auto aligned = align_for_calibration(software, external);
  if (aligned.empty())
    throw Error(ErrorCode::kDegenerateInput, "no node has both software and external readings");

  const Format format = output_format(cfg);
  std::vector<std::vector<std::string>> rows;
  std::ostringstream json_lines;
  for (const auto& a : aligned) {
    if (cfg.affine) {
      AffineModel m = fit_affine(a.node_id, a.software, a.external);
      rows.push_back({m.node_id, fmt::format("{:.6f}", m.slope), fmt::format("{:.3f}", m.intercept_w),
                      fmt::format("{:.3f}", m.mape_pct), std::to_string(m.n_points)});
      detail::OrderedJson j;
      j["node"] = m.node_id;
      j["slope"] = m.slope;
      j["intercept_w"] = m.intercept_w;
      j["mape_pct"] = m.mape_pct;
      j["n"] = m.n_points;
      json_lines << j.dump() << '\n';
    } else {
      CalibrationModel m = fit_scale(a.node_id, a.software, a.external);
      rows.push_back({m.node_id, fmt::format("{:.6f}", m.k), fmt::format("{:.3f}", m.mape_pct),
                      std::to_string(m.n_points), fmt::format("{:.3f}", m.energy_error_pct)});
      json_lines << serialize_model(m) << '\n';
    }
  }
  std::vector<std::string> header =
      cfg.affine ? std::vector<std::string>{"node", "slope", "intercept_w", "mape_pct", "n"}
                 : std::vector<std::string>{"node", "k", "mape_pct", "n", "energy_err_pct"};

  if (format == Format::kJson) {
    out << json_lines.str();
    return;
  }
  rows.insert(rows.begin(), header);
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (format == Format::kCsv)
        line += (c ? "," : "") + r[c];
      else
        line += c ? fmt::format("  {:>{}}", r[c], width[c]) : fmt::format("{:<{}}", r[c], width[c]);
    }
    out << line << '\n';
  }
}

void cmd_report_energy(const RunConfig& cfg, bool by_user, std::ostream& out) {
  require(!cfg.jobs.empty(), "report needs --jobs");
  require(!cfg.slices.empty() || (!cfg.power.empty() && !cfg.proc.empty()),
          "report needs --slices or --power and --proc");
  auto jobs = load_jobs(cfg.jobs);

  std::vector<AttributionSlice> slices;
  if (!cfg.slices.empty()) {
    slices = load(cfg.slices, [](std::istream& in) { return parse_slices(in); });
    if (!cfg.model.empty()) {
      auto models = load(cfg.model, [](std::istream& in) { return parse_models(in); });
      slices = apply_calibrations(models, slices);
    }
  } else {
    slices = compute_slices(cfg, jobs);
  }

  const ShareColumn column = *parse_share_column(cfg.column);
  if (column == ShareColumn::kExt) {
    bool calibrated = std::all_of(slices.begin(), slices.end(), [](const AttributionSlice& s) {
      return s.unattributed_ext_w.has_value();
    });
    require(calibrated, "ext column needs calibrated slices: pass --model or choose --column gpu|cpu");
  }

  EnergyLedger ledger = integrate_energy(slices, cfg.max_gap_s);
  StatusReport report = by_user ? aggregate_by_user(jobs, ledger.jobs, column)
                                : aggregate_by_status(jobs, ledger.jobs, column);
  const Format format = output_format(cfg);
  out << render_report(report, format);
  if (format == Format::kText) {
    out << fmt::format("unattributed: cpu_kwh={:.3f} gpu_kwh={:.3f}\n", ledger.unattributed.cpu_kwh(),
                       ledger.unattributed.gpu_kwh());
    out << fmt::format("coverage: covered_s={:.3f} excluded_s={:.3f} excluded_intervals={}\n",
                       ledger.coverage.covered_s, ledger.coverage.excluded_s,
                       ledger.coverage.excluded_intervals);
  }
}

void cmd_report_hist(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.proc.empty(), "gpu-hist needs --proc");
  const UtilMetric metric = cfg.metric == "sm" ? UtilMetric::kSmPct : UtilMetric::kMemPct;
  require(metric == UtilMetric::kSmPct || !cfg.capacities.empty(), "--metric mem needs --capacities");
  GpuCapacities caps;
  if (!cfg.capacities.empty())
    caps = load(cfg.capacities, [](std::istream& in) { return GpuCapacities::parse(in); });
  auto procs = load_procs(cfg.proc);

  UtilizationHistogram hist;
  if (cfg.population == "job-mean") {
    require(!cfg.pidmap.empty() && !cfg.jobs.empty(), "--population job-mean needs --pidmap and --jobs");
    auto jobs = load_jobs(cfg.jobs);
    hist = gpu_histogram_job_mean(procs, load_timelines(cfg, jobs), metric, cfg.bins, caps);
  } else {
    hist = gpu_histogram(procs, metric, cfg.bins, caps);
  }
  out << render_histogram(hist, output_format(cfg));
}

CLI::Option* path_option(CLI::App* app, const std::string& name, std::string& target,
                         const std::string& help) {
  std::string env = "WATTSCOPE_" + name;
  for (auto& c : env) c = c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return app->add_option("--" + name, target, help)->envname(env);
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"wattscope: job-level energy attribution for shared compute clusters", "wattscope"};
  app.require_subcommand(1);

  auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", cfg.format, "Output format")
        ->check(CLI::IsMember({"text", "csv", "json"}))
        ->envname("WATTSCOPE_FORMAT");
  };
  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", cfg.threads, "Worker threads for per-node work")
        ->check(CLI::Range(1u, 1024u))
        ->envname("WATTSCOPE_THREADS");
  };
  auto add_attribution_inputs = [&](CLI::App* sub) {
    path_option(sub, "power", cfg.power, "Software power trace (cpu/gpu)");
    path_option(sub, "proc", cfg.proc, "Process trace");
    path_option(sub, "pidmap", cfg.pidmap, "Pid map snapshots");
    path_option(sub, "jobs", cfg.jobs, "Job metadata");
    path_option(sub, "model", cfg.model, "Calibration model(s)");
    add_threads(sub);
  };

  CLI::App* validate = app.add_subcommand("validate", "Parse and check trace files");
  path_option(validate, "power", cfg.power, "Software power trace (cpu/gpu)");
  path_option(validate, "proc", cfg.proc, "Process trace");
  path_option(validate, "pidmap", cfg.pidmap, "Pid map snapshots");
  path_option(validate, "jobs", cfg.jobs, "Job metadata");
  path_option(validate, "external", cfg.external, "External wattmeter trace");

  CLI::App* attribute_cmd = app.add_subcommand("attribute", "Emit per-interval attribution slices");
  add_attribution_inputs(attribute_cmd);

  CLI::App* calibrate = app.add_subcommand("calibrate", "Fit software-to-wattmeter scale factors");
  path_option(calibrate, "power", cfg.power, "Software power trace (cpu/gpu)");
  path_option(calibrate, "external", cfg.external, "External wattmeter trace");
  calibrate->add_flag("--affine", cfg.affine, "Fit slope and intercept instead of a constant factor")
      ->envname("WATTSCOPE_AFFINE");
  add_format(calibrate);

  CLI::App* report = app.add_subcommand("report", "Energy and utilization reports");
  report->require_subcommand(1);
  CLI::App* status = report->add_subcommand("status", "Energy per terminal job status");
  CLI::App* user = report->add_subcommand("user", "Energy per user");
  for (CLI::App* sub : {status, user}) {
    add_attribution_inputs(sub);
    path_option(sub, "slices", cfg.slices, "Attribution slices from `attribute`");
    add_format(sub);
    sub->add_option("--column", cfg.column, "Energy column used for shares")
        ->check(CLI::IsMember({"ext", "gpu", "cpu"}))
        ->envname("WATTSCOPE_COLUMN");
    sub->add_option("--max-gap-s", cfg.max_gap_s, "Longest interval still counted as covered")
        ->check(CLI::PositiveNumber)
        ->envname("WATTSCOPE_MAX_GAP_S");
  }
  CLI::App* hist = report->add_subcommand("gpu-hist", "GPU SM or memory utilization histogram");
  path_option(hist, "proc", cfg.proc, "Process trace");
  path_option(hist, "pidmap", cfg.pidmap, "Pid map snapshots (job-mean population)");
  path_option(hist, "jobs", cfg.jobs, "Job metadata (job-mean population)");
  path_option(hist, "capacities", cfg.capacities, "GPU memory capacities in MiB");
  hist->add_option("--bins", cfg.bins, "Number of bins")->check(CLI::PositiveNumber)->envname("WATTSCOPE_BINS");
  hist->add_option("--metric", cfg.metric, "sm or mem")
      ->check(CLI::IsMember({"sm", "mem"}))
      ->envname("WATTSCOPE_METRIC");
  hist->add_option("--population", cfg.population, "sample or job-mean")
      ->check(CLI::IsMember({"sample", "job-mean"}))
      ->envname("WATTSCOPE_POPULATION");
  add_format(hist);

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("wattscope");

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  std::ostringstream buffer;
  try {
    if (*validate) {
      cmd_validate(cfg, buffer);
    } else if (*attribute_cmd) {
      cmd_attribute(cfg, buffer);
    } else if (*calibrate) {
      cmd_calibrate(cfg, buffer);
    } else if (*status) {
      cmd_report_energy(cfg, false, buffer);
    } else if (*user) {
      cmd_report_energy(cfg, true, buffer);
    } else if (*hist) {
      cmd_report_hist(cfg, buffer);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.message << '\n';
    return kExitUsage;
  } catch (const FileError& e) {
    err << "error: " << e.path << ": " << e.error.what() << '\n';
    return kExitInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  out << buffer.str();
  return kExitOk;
}

}  // namespace wattscope::cli
