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

#include <doctest.h>

#include <cstdlib>
#include <random>
#include <sstream>

#include "synth.hpp"
#include "wattscope/calibration.hpp"
#include "wattscope/cli.hpp"

namespace wattscope {
namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "wattscope");
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> csv_column(const std::string& csv, std::size_t col) {
  std::istringstream in(csv);
  std::vector<std::string> values;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string f;
    for (std::size_t c = 0; c <= col; ++c) std::getline(fields, f, ',');
    values.push_back(f);
  }
  return values;
}

struct PipelineFixture {
  testing::TempDir dir;
  PipelineFixture() {
    std::mt19937_64 rng(2024);
    testing::ScenarioSpec spec;
    spec.nodes = 2;
    spec.jobs = 3;
    spec.intervals = 120;
    auto sc = testing::make_scenario(spec, rng);
    testing::write_scenario(dir.path(), sc, testing::make_external(sc, 1.6, 40.0, 5.0, rng));
  }
  std::string f(const char* name) const { return dir.file(name); }
};

TEST_CASE("validate summarizes well-formed inputs") {
  PipelineFixture fx;
  auto r = run_cli({"validate", "--power", fx.f("power.jsonl"), "--proc", fx.f("proc.jsonl")});
  CHECK(r.code == 0);
  CHECK(r.out.starts_with("ok power="));
  CHECK(r.out.find("proc=") != std::string::npos);
  CHECK(r.err.empty());

  auto all = run_cli({"validate", "--power", fx.f("power.jsonl"), "--proc", fx.f("proc.jsonl"), "--pidmap",
                      fx.f("pidmap.jsonl"), "--jobs", fx.f("jobs.jsonl"), "--external", fx.f("external.jsonl")});
  CHECK(all.code == 0);
  CHECK(all.out.find("jobs=6") != std::string::npos);
}

TEST_CASE("status report of the reference fixture reads 40,13,5,41") {
  testing::TempDir dir;
  testing::write_status_table_fixture(dir.path());
  auto r = run_cli({"report", "status", "--slices", dir.file("slices.jsonl"), "--jobs", dir.file("jobs.jsonl"),
                    "--format", "csv"});
  REQUIRE(r.code == 0);
  CHECK(csv_column(r.out, 5) == std::vector<std::string>{"40", "13", "5", "41"});
  CHECK(csv_column(r.out, 1) == std::vector<std::string>{"1148", "134", "62", "17"});
}

TEST_CASE("planted timestamp defect fails attribute with its line number") {
  testing::TempDir dir;
  std::string power;
  for (int i = 1; i <= 100; ++i) {
    int ts = i == 37 ? 30 : i;
    power += R"({"node":"n1","src":"cpu0","ts":)" + std::to_string(ts) + R"(,"w":100})" "\n";
  }
  dir.write("power.jsonl", power);
  dir.write("proc.jsonl", R"({"node":"n1","ts":1,"pid":5,"cpu_s":1})" "\n");
  auto r = run_cli({"attribute", "--power", dir.file("power.jsonl"), "--proc", dir.file("proc.jsonl")});
  CHECK(r.code == 1);
  CHECK(r.out.empty());
  CHECK(r.err.find("NonMonotonicTimestamp at line 37") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
  CHECK(run_cli({}).code == 2);
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK(run_cli({"validate", "--bogus", "x"}).code == 2);
  CHECK(run_cli({"validate"}).code == 2);
  CHECK(run_cli({"attribute", "--power", "p"}).code == 2);
  CHECK(run_cli({"attribute", "--power", "p", "--proc", "q", "--pidmap", "m"}).code == 2);
  CHECK(run_cli({"report", "status", "--jobs", "j", "--slices", "s", "--format", "xml"}).code == 2);
  CHECK(run_cli({"report", "gpu-hist", "--proc", "q", "--bins", "0"}).code == 2);
  CHECK(run_cli({"report"}).code == 2);
  auto help = run_cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("attribute") != std::string::npos);
}

TEST_CASE("missing input file exits 1 with empty stdout") {
  auto r = run_cli({"validate", "--power", "/nonexistent/p.jsonl"});
  CHECK(r.code == 1);
  CHECK(r.out.empty());
  CHECK(r.err.find("/nonexistent/p.jsonl") != std::string::npos);
}

TEST_CASE("staged pipeline: calibrate, attribute, report") {
  PipelineFixture fx;
  auto cal = run_cli({"calibrate", "--power", fx.f("power.jsonl"), "--external", fx.f("external.jsonl"),
                      "--format", "json"});
  REQUIRE(cal.code == 0);
  std::istringstream models_in(cal.out);
  auto models = parse_models(models_in);
  REQUIRE(models.size() == 2);
  for (const auto& m : models) CHECK(m.k > 1.0);
  fx.dir.write("model.jsonl", cal.out);

  auto text = run_cli({"calibrate", "--power", fx.f("power.jsonl"), "--external", fx.f("external.jsonl")});
  CHECK(text.out.starts_with("node"));
  auto affine = run_cli({"calibrate", "--affine", "--format", "csv", "--power", fx.f("power.jsonl"), "--external",
                         fx.f("external.jsonl")});
  CHECK(affine.out.starts_with("node,slope,intercept_w,mape_pct,n\n"));

  auto att = run_cli({"attribute", "--power", fx.f("power.jsonl"), "--proc", fx.f("proc.jsonl"), "--pidmap",
                      fx.f("pidmap.jsonl"), "--jobs", fx.f("jobs.jsonl"), "--model", fx.f("model.jsonl")});
  REQUIRE(att.code == 0);
  CHECK(att.out.find("\"ext_w\":") != std::string::npos);
  fx.dir.write("slices.jsonl", att.out);

  auto staged = run_cli({"report", "status", "--slices", fx.f("slices.jsonl"), "--jobs", fx.f("jobs.jsonl"),
                         "--format", "json"});
  auto direct = run_cli({"report", "status", "--power", fx.f("power.jsonl"), "--proc", fx.f("proc.jsonl"),
                         "--pidmap", fx.f("pidmap.jsonl"), "--jobs", fx.f("jobs.jsonl"), "--model",
                         fx.f("model.jsonl"), "--format", "json"});
  REQUIRE(staged.code == 0);
  CHECK(staged.out == direct.out);
  CHECK(staged.out.starts_with("{\"rows\":[{\"status\":"));

  auto user = run_cli({"report", "user", "--slices", fx.f("slices.jsonl"), "--jobs", fx.f("jobs.jsonl"),
                       "--column", "gpu"});
  CHECK(user.code == 0);
  CHECK(user.out.find("gpu_share_pct") != std::string::npos);
  CHECK(user.out.find("coverage:") != std::string::npos);
}

TEST_CASE("ext shares need calibrated slices") {
  PipelineFixture fx;
  auto r = run_cli({"report", "status", "--power", fx.f("power.jsonl"), "--proc", fx.f("proc.jsonl"), "--jobs",
                    fx.f("jobs.jsonl")});
  CHECK(r.code == 2);
  auto cpu = run_cli({"report", "status", "--power", fx.f("power.jsonl"), "--proc", fx.f("proc.jsonl"), "--jobs",
                      fx.f("jobs.jsonl"), "--column", "cpu", "--format", "csv"});
  CHECK(cpu.code == 0);
}

TEST_CASE("gpu histogram subcommand") {
  PipelineFixture fx;
  auto r = run_cli({"report", "gpu-hist", "--proc", fx.f("proc.jsonl"), "--bins", "10", "--format", "json"});
  REQUIRE(r.code == 0);
  CHECK(r.out.starts_with("{\"metric\":\"sm_pct\",\"edges\":[0.0,10.0,"));

  CHECK(run_cli({"report", "gpu-hist", "--proc", fx.f("proc.jsonl"), "--metric", "mem"}).code == 2);
  fx.dir.write("caps.json", R"({"0": 8000})");
  auto missing = run_cli({"report", "gpu-hist", "--proc", fx.f("proc.jsonl"), "--metric", "mem", "--capacities",
                          fx.f("caps.json")});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("MissingCapacity") != std::string::npos);
  fx.dir.write("caps.json", R"({"0": 16000, "1": 16000})");
  auto mem = run_cli({"report", "gpu-hist", "--proc", fx.f("proc.jsonl"), "--metric", "mem", "--capacities",
                      fx.f("caps.json"), "--format", "csv"});
  CHECK(mem.code == 0);

  auto job_mean = run_cli({"report", "gpu-hist", "--proc", fx.f("proc.jsonl"), "--population", "job-mean",
                           "--pidmap", fx.f("pidmap.jsonl"), "--jobs", fx.f("jobs.jsonl")});
  CHECK(job_mean.code == 0);
}

TEST_CASE("environment variables back the flags") {
  testing::TempDir dir;
  testing::write_status_table_fixture(dir.path());
  setenv("WATTSCOPE_FORMAT", "csv", 1);
  setenv("WATTSCOPE_SLICES", dir.file("slices.jsonl").c_str(), 1);
  auto r = run_cli({"report", "status", "--jobs", dir.file("jobs.jsonl")});
  unsetenv("WATTSCOPE_FORMAT");
  unsetenv("WATTSCOPE_SLICES");
  REQUIRE(r.code == 0);
  CHECK(r.out.starts_with("status,n_jobs,"));
}

TEST_CASE("identical inputs give byte-identical output") {
  PipelineFixture fx;
  std::vector<std::string> args = {"attribute", "--power", fx.f("power.jsonl"), "--proc", fx.f("proc.jsonl"),
                                   "--pidmap", fx.f("pidmap.jsonl"), "--jobs", fx.f("jobs.jsonl")};
  auto a = run_cli(args);
  auto b = run_cli(args);
  args.insert(args.end(), {"--threads", "3"});
  auto c = run_cli(args);
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out == c.out);
}

}  // namespace
}  // namespace wattscope
