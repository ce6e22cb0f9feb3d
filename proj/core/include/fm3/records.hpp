// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fm3/pipeline.hpp"

namespace fm3 {

/// One metric record. Durations are omitted unless `timings` is set so that
/// repeated runs write byte-identical files.
nlohmann::json episode_record(const EpisodeResult& r, bool timings = false);
void write_records(std::ostream& out, std::span<const EpisodeResult> results, bool timings = false);
std::vector<nlohmann::json> read_records(std::istream& in);

struct CellStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t n = 0;
};

/// Rows are tasks, columns are shots, in order of first appearance / ascending k.
struct ReportTable {
  std::string metric;
  std::vector<std::string> tasks;
  std::vector<std::size_t> shots;
  std::map<std::pair<std::string, std::size_t>, CellStats> cells;
};

ReportTable aggregate(const std::vector<nlohmann::json>& records, const std::string& metric = "accuracy");
std::string format_table(const ReportTable& table);
/// Line plot of the cell means against k, one series per task.
std::string render_svg(const ReportTable& table);

}  // namespace fm3
