// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/records.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "fm3/error.hpp"

namespace fm3 {

using nlohmann::json;

json episode_record(const EpisodeResult& r, bool timings) {
  json j{{"task", r.task},
         {"task_id", r.task_id},
         {"k", r.k},
         {"episode", r.episode},
         {"seed", r.seed},
         {"accuracy", r.metrics.accuracy},
         {"f1", r.metrics.f1},
         {"n_eval", r.metrics.n_eval},
         {"contrastive_skipped", r.contrastive_skipped},
         {"zero_shot", r.zero_shot},
         {"protocol", r.protocol},
         {"mode", r.mode}};
  if (timings) {
    j["train_seconds"] = r.train_seconds;
    j["infer_seconds"] = r.infer_seconds;
  }
  return j;
}

void write_records(std::ostream& out, std::span<const EpisodeResult> results, bool timings) {
  for (const auto& r : results) out << episode_record(r, timings).dump() << '\n';
}

std::vector<json> read_records(std::istream& in) {
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw std::runtime_error("record " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

ReportTable aggregate(const std::vector<json>& records, const std::string& metric) {
  if (metric != "accuracy" && metric != "f1") throw ConfigError("metric must be 'accuracy' or 'f1'");
  ReportTable t;
  t.metric = metric;
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> values;
  for (const auto& r : records) {
    const std::string task = r.at("task").get<std::string>();
    const std::size_t k = r.at("k").get<std::size_t>();
    if (std::find(t.tasks.begin(), t.tasks.end(), task) == t.tasks.end()) t.tasks.push_back(task);
    if (std::find(t.shots.begin(), t.shots.end(), k) == t.shots.end()) t.shots.push_back(k);
    values[{task, k}].push_back(r.at(metric).get<double>());
  }
  std::sort(t.shots.begin(), t.shots.end());
  for (const auto& [key, v] : values) {
    CellStats c;
    c.n = v.size();
    for (double x : v) c.mean += x;
    c.mean /= static_cast<double>(c.n);
    if (c.n > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - c.mean) * (x - c.mean);
      c.stddev = std::sqrt(ss / static_cast<double>(c.n - 1));
    }
    t.cells[key] = c;
  }
  return t;
}

std::string format_table(const ReportTable& t) {
  std::size_t width = 4;
  for (const auto& name : t.tasks) width = std::max(width, name.size());
  std::ostringstream out;
  char buf[64];
  out << t.metric << " (mean ± std over episodes, percent)\n";
  out << std::string(width, ' ');
  for (std::size_t k : t.shots) {
    std::snprintf(buf, sizeof buf, " | %15s", ("k=" + std::to_string(k)).c_str());
    out << buf;
  }
  out << '\n' << std::string(width, '-');
  for (std::size_t i = 0; i < t.shots.size(); ++i) out << "-+-" << std::string(15, '-');
  out << '\n';
  for (const auto& task : t.tasks) {
    out << task << std::string(width - task.size(), ' ');
    for (std::size_t k : t.shots) {
      auto it = t.cells.find({task, k});
      if (it == t.cells.end()) {
        std::snprintf(buf, sizeof buf, " | %15s", "-");
      } else {
        std::snprintf(buf, sizeof buf, " | %6.2f ± %5.2f ", 100.0 * it->second.mean, 100.0 * it->second.stddev);
      }
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string render_svg(const ReportTable& t) {
  constexpr double W = 640, H = 400, L = 60, R = 180, T = 20, B = 50;
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ostringstream out;
  char buf[256];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, H - B, W - R, H - B);
  out << buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, T, L, H - B);
  out << buf;
  const std::size_t n = t.shots.size();
  auto x_of = [&](std::size_t i) { return n <= 1 ? (L + W - R) / 2 : L + (W - R - L) * static_cast<double>(i) / (n - 1); };
  auto y_of = [&](double v) { return H - B - (H - B - T) * v; };
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%g\" text-anchor=\"middle\" font-size=\"12\">k=%zu</text>\n",
                  x_of(i), H - B + 18, t.shots[i]);
    out << buf;
  }
  for (int g = 0; g <= 4; ++g) {
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%.1f\" text-anchor=\"end\" font-size=\"12\">%d%%</text>\n", L - 6,
                  y_of(g / 4.0) + 4, g * 25);
    out << buf;
  }
  for (std::size_t s = 0; s < t.tasks.size(); ++s) {
    const char* color = colors[s % std::size(colors)];
    std::string points;
    for (std::size_t i = 0; i < n; ++i) {
      auto it = t.cells.find({t.tasks[s], t.shots[i]});
      if (it == t.cells.end()) continue;
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", x_of(i), y_of(it->second.mean));
      points += buf;
    }
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"12\" fill=\"%s\">", W - R + 10,
                  T + 16.0 * static_cast<double>(s + 1), color);
    out << buf << t.tasks[s] << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace fm3
