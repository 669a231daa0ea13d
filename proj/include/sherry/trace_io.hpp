// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Training trace as JSON lines, one object per recorded step:
 *
 *   {"step": 100, "loss": 0.41, "lambda": 0.93, "eval_loss": 0.52,
 *    "er_per_layer": [31.2, 120.4],
 *    "hist_per_layer": [{"counts": [64 ints], "range": [-3.0, 3.0]}, ...]}
 */

#include "sherry/diagnostics.hpp"
#include "sherry/error.hpp"
#include "sherry/formats.hpp"
#include "sherry/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <sstream>
#include <string>

namespace sherry {

inline nlohmann::json to_json(const TraceRecord &r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["loss"] = r.loss;
  j["lambda"] = r.lambda;
  j["eval_loss"] = r.eval_loss;
  j["er_per_layer"] = r.er_per_layer;
  auto hists = nlohmann::json::array();
  for (const auto &h : r.hist_per_layer)
    hists.push_back({{"counts", h.counts}, {"range", {h.lo, h.hi}}});
  j["hist_per_layer"] = std::move(hists);
  return j;
}

inline TraceRecord trace_record_from_json(const nlohmann::json &j) {
  TraceRecord r;
  try {
    r.step = j.at("step").get<std::size_t>();
    r.loss = j.at("loss").get<double>();
    r.lambda = j.at("lambda").get<double>();
    r.eval_loss = j.value("eval_loss", 0.0);
    r.er_per_layer = j.at("er_per_layer").get<std::vector<double>>();
    for (const auto &hj : j.at("hist_per_layer")) {
      WeightHistogram h;
      const auto counts = hj.at("counts").get<std::vector<std::uint64_t>>();
      detail::require<FormatError>(counts.size() == kHistogramBins,
                                   "trace: histogram must have 64 bins");
      std::copy(counts.begin(), counts.end(), h.counts.begin());
      const auto range = hj.at("range").get<std::vector<double>>();
      detail::require<FormatError>(range.size() == 2 && range[0] < range[1],
                                   "trace: invalid histogram range");
      h.lo = range[0];
      h.hi = range[1];
      r.hist_per_layer.push_back(h);
    }
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("trace: ") + e.what());
  }
  detail::require<FormatError>(r.er_per_layer.size() == r.hist_per_layer.size(),
                               "trace: layer count mismatch between ER and histograms");
  return r;
}

inline std::string encode_trace(const TrainTrace &trace) {
  std::string out;
  for (const auto &r : trace.records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<TraceRecord> decode_trace(const std::string &text) {
  std::vector<TraceRecord> records;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception &e) {
      throw FormatError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
    records.push_back(trace_record_from_json(j));
  }
  return records;
}

inline void write_trace(const std::filesystem::path &path, const TrainTrace &trace) {
  write_file_atomic(path, encode_trace(trace));
}

inline std::vector<TraceRecord> read_trace(const std::filesystem::path &path) {
  const auto bytes = read_file_bytes(path);
  return decode_trace(std::string(bytes.begin(), bytes.end()));
}

} // namespace sherry
