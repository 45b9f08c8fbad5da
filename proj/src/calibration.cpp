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

#include "wattscope/calibration.hpp"

#include <cmath>
#include <iterator>
#include <map>
#include <sstream>

#include <fmt/core.h>

#include "jsonl.hpp"

namespace wattscope {

using detail::Json;
using detail::OrderedJson;

namespace {

void check_inputs(std::span<const Watts> software, std::span<const Watts> external) {
  if (software.size() != external.size())
    throw Error(ErrorCode::kDegenerateInput,
                fmt::format("length mismatch {} vs {}", software.size(), external.size()));
  if (software.size() < 2)
    throw Error(ErrorCode::kDegenerateInput, "need at least 2 aligned points");
  for (std::size_t i = 0; i < software.size(); ++i) {
    if (!(software[i] >= 0) || !(external[i] >= 0) || !std::isfinite(software[i]) ||
        !std::isfinite(external[i]))
      throw Error(ErrorCode::kDegenerateInput, fmt::format("invalid value at point {}", i));
  }
}

template <class Predict>
double mape(std::span<const Watts> external, Predict&& predict) {
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < external.size(); ++i) {
    if (external[i] <= 0) continue;
    sum += std::abs(predict(i) - external[i]) / external[i];
    ++n;
  }
  return n == 0 ? 0.0 : 100.0 * sum / static_cast<double>(n);
}

}  // namespace

CalibrationModel fit_scale(std::string node_id, std::span<const Watts> software,
                           std::span<const Watts> external) {
  check_inputs(software, external);
  double se = 0;
  double ss = 0;
  double sum_s = 0;
  double sum_e = 0;
  for (std::size_t i = 0; i < software.size(); ++i) {
    se += software[i] * external[i];
    ss += software[i] * software[i];
    sum_s += software[i];
    sum_e += external[i];
  }
  if (ss <= 0) throw Error(ErrorCode::kDegenerateInput, "software series is identically zero");

  CalibrationModel model;
  model.node_id = std::move(node_id);
  model.k = se / ss;
  if (!(model.k > 0)) throw Error(ErrorCode::kDegenerateInput, "external series is identically zero");
  model.n_points = software.size();
  model.mape_pct = mape(external, [&](std::size_t i) { return model.k * software[i]; });
  model.energy_error_pct = sum_e > 0 ? 100.0 * std::abs(model.k * sum_s - sum_e) / sum_e : 0.0;
  return model;
}

AffineModel fit_affine(std::string node_id, std::span<const Watts> software,
                       std::span<const Watts> external) {
  check_inputs(software, external);
  const double n = static_cast<double>(software.size());
  double mean_s = 0;
  double mean_e = 0;
  for (std::size_t i = 0; i < software.size(); ++i) {
    mean_s += software[i];
    mean_e += external[i];
  }
  mean_s /= n;
  mean_e /= n;
  double cov = 0;
  double var = 0;
  for (std::size_t i = 0; i < software.size(); ++i) {
    cov += (software[i] - mean_s) * (external[i] - mean_e);
    var += (software[i] - mean_s) * (software[i] - mean_s);
  }
  if (var <= 0) throw Error(ErrorCode::kDegenerateInput, "software series is constant");

  AffineModel model;
  model.node_id = std::move(node_id);
  model.slope = cov / var;
  model.intercept_w = mean_e - model.slope * mean_s;
  model.n_points = software.size();
  model.mape_pct = mape(external, [&](std::size_t i) {
    return model.slope * software[i] + model.intercept_w;
  });
  return model;
}

std::vector<AlignedSeries> align_for_calibration(std::span<const PowerSample> software,
                                                 std::span<const PowerSample> external) {
  auto soft_series = split_series(software);
  auto ext_series = split_series(external);

  std::map<std::string, std::vector<const PowerSeries*>> soft_by_node;
  for (const auto& s : soft_series)
    if (s.source.kind != SourceKind::kExternal) soft_by_node[s.node_id].push_back(&s);

  std::vector<AlignedSeries> out;
  for (const auto& ext : ext_series) {
    if (ext.source.kind != SourceKind::kExternal) continue;
    auto it = soft_by_node.find(ext.node_id);
    if (it == soft_by_node.end()) continue;

    std::vector<Seconds> grid;
    grid.reserve(ext.samples.size());
    for (const auto& s : ext.samples) grid.push_back(s.ts);

    std::vector<std::vector<std::optional<Watts>>> resampled;
    for (const auto* s : it->second) resampled.push_back(resample_to_grid(s->samples, grid));

    AlignedSeries aligned;
    aligned.node_id = ext.node_id;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      Watts total = 0;
      bool complete = true;
      for (const auto& r : resampled) {
        if (!r[i]) {
          complete = false;
          break;
        }
        total += *r[i];
      }
      if (!complete) continue;
      aligned.ts.push_back(grid[i]);
      aligned.software.push_back(total);
      aligned.external.push_back(ext.samples[i].power_w);
    }
    out.push_back(std::move(aligned));
  }
  return out;
}

namespace {

AttributionSlice calibrated(const AttributionSlice& slice, double k) {
  AttributionSlice out = slice;
  for (auto& [job, p] : out.per_job) p.ext_w = k * (p.cpu_w + p.gpu_w);
  out.unattributed_ext_w = k * (out.unattributed_cpu_w + out.unattributed_gpu_w);
  return out;
}

}  // namespace

std::vector<AttributionSlice> apply_calibration(const CalibrationModel& model,
                                                std::span<const AttributionSlice> slices) {
  std::vector<AttributionSlice> out;
  out.reserve(slices.size());
  for (const auto& s : slices) {
    if (s.node_id != model.node_id)
      throw Error(ErrorCode::kNodeMismatch,
                  fmt::format("model for {} applied to slice of {}", model.node_id, s.node_id));
    out.push_back(calibrated(s, model.k));
  }
  return out;
}

std::vector<AttributionSlice> apply_calibrations(std::span<const CalibrationModel> models,
                                                 std::span<const AttributionSlice> slices) {
  std::map<std::string, double> k_by_node;
  for (const auto& m : models) k_by_node[m.node_id] = m.k;
  std::vector<AttributionSlice> out;
  out.reserve(slices.size());
  for (const auto& s : slices) {
    auto it = k_by_node.find(s.node_id);
    if (it == k_by_node.end())
      throw Error(ErrorCode::kNodeMismatch, fmt::format("no calibration model for node {}", s.node_id));
    out.push_back(calibrated(s, it->second));
  }
  return out;
}

std::string serialize_model(const CalibrationModel& model) {
  OrderedJson j;
  j["node"] = model.node_id;
  j["k"] = model.k;
  j["mape_pct"] = model.mape_pct;
  j["n"] = model.n_points;
  j["energy_err_pct"] = model.energy_error_pct;
  return j.dump();
}

namespace {

CalibrationModel model_from_json(const Json& obj, std::size_t line) {
  if (!obj.is_object()) detail::malformed(line, "expected a JSON object");
  CalibrationModel m;
  m.node_id = detail::require_string(obj, "node", line);
  m.k = detail::require_number(obj, "k", line);
  if (!(m.k > 0)) detail::malformed(line, "k must be positive");
  m.mape_pct = detail::require_number(obj, "mape_pct", line);
  if (m.mape_pct < 0) detail::malformed(line, "mape_pct must be non-negative");
  auto n = detail::require_int(obj, "n", line);
  if (n < 2) detail::malformed(line, "n must be at least 2");
  m.n_points = static_cast<std::size_t>(n);
  m.energy_error_pct = detail::optional_number(obj, "energy_err_pct", line).value_or(0.0);
  return m;
}

}  // namespace

std::vector<CalibrationModel> parse_models(std::istream& in) {
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::vector<CalibrationModel> out;

  // A single (possibly pretty-printed) object or an array of objects...
  Json whole = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (!whole.is_discarded()) {
    if (whole.is_array()) {
      for (const auto& obj : whole) out.push_back(model_from_json(obj, 1));
    } else {
      out.push_back(model_from_json(whole, 1));
    }
    return out;
  }
  // ...or one object per line.
  std::istringstream lines(text);
  detail::for_each_record(lines, [&](const Json& obj, std::size_t line) {
    out.push_back(model_from_json(obj, line));
  });
  return out;
}

}  // namespace wattscope
