#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "sleepnet/harness.hpp"
#include "sleepnet/metrics.hpp"

namespace sleepnet {

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Display rounding for report tables (raw CSVs keep full precision).
inline std::string report_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// Human-readable summary of a sweep directory (out/<fingerprint>). Peak
// accuracy, final-task composition and forgetting/recovery tables are all
// recomputed from the raw per-cell metrics.csv files.
inline std::string make_report(const std::filesystem::path& results_root) {
  namespace fs = std::filesystem;
  const fs::path config_path = results_root / "config.json";
  const fs::path summary_path = results_root / "summary" / "summary.csv";
  const fs::path manifest_path = results_root / "summary" / "manifest.csv";
  std::vector<std::string> missing;
  for (const fs::path& p : {config_path, summary_path, manifest_path}) {
    if (!fs::exists(p)) missing.push_back(p.string());
  }
  if (!missing.empty()) {
    std::string msg = "report: missing expected files:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }

  std::ifstream cfg_in(config_path);
  nlohmann::json cfg = nlohmann::json::parse(cfg_in);

  std::ostringstream md;
  md << "# Sweep report\n\n";
  md << "- results: " << results_root.string() << "\n";
  md << "- tasks: " << cfg["tasks"]["count"] << " x " << cfg["tasks"]["classes_per_task"]
     << " classes, " << cfg["train"]["iterations"] << " iterations/task\n\n";

  md << "## Cells\n\n| p | rem | seed | status |\n|---|-----|------|--------|\n";
  struct CellRef {
    double p;
    bool rem;
    std::uint64_t seed;
    bool done;
  };
  std::vector<CellRef> cells;
  for (const auto& row : read_csv(manifest_path)) {
    if (row.size() != 4) continue;
    CellRef c{std::stod(row[0]), row[1] == "1", std::stoull(row[2]), row[3] == "done"};
    cells.push_back(c);
    md << "| " << row[0] << " | " << (c.rem ? "on" : "off") << " | " << row[2] << " | " << row[3]
       << " |\n";
  }
  md << "\n";

  // Records per (p, rem), keyed by seed.
  std::map<std::pair<double, bool>, std::map<std::uint64_t, std::vector<MetricsRecord>>> store;
  for (const CellRef& c : cells) {
    if (!c.done) continue;
    const fs::path dir = results_root / cell_dirname(Cell{c.p, c.rem, c.seed});
    store[{c.p, c.rem}][c.seed] = read_metrics_csv(dir / "metrics.csv");
  }

  md << "## Peak average accuracy per task (median across seeds)\n\n";
  md << "| p | rem | task | peak mu | at iteration |\n|---|-----|------|---------|--------------|\n";
  for (const auto& [key, by_seed] : store) {
    std::map<int, std::vector<double>> peaks;
    std::map<int, std::vector<double>> peak_iters;
    for (const auto& [seed, records] : by_seed) {
      for (const TaskMaximum& m : max_accuracy_per_task(records)) {
        peaks[m.task].push_back(m.value);
        peak_iters[m.task].push_back(m.iteration);
      }
    }
    for (const auto& [task, values] : peaks) {
      md << "| " << format_number(key.first) << " | " << (key.second ? "on" : "off") << " | "
         << task << " | " << report_number(detail::median(values)) << " | "
         << report_number(detail::median(peak_iters[task])) << " |\n";
    }
  }
  md << "\n";

  md << "## Final-task composition a_T^C (median across seeds)\n\n";
  md << "| p | rem | class set C | accuracy |\n|---|-----|-------------|----------|\n";
  for (const auto& [key, by_seed] : store) {
    std::map<int, std::vector<double>> final_acc;
    for (const auto& [seed, records] : by_seed) {
      if (records.empty()) continue;
      const MetricsRecord& last = records.back();
      for (std::size_t c = 0; c < last.accuracies.size(); ++c) {
        final_acc[static_cast<int>(c) + 1].push_back(last.accuracies[c]);
      }
    }
    for (const auto& [class_set, values] : final_acc) {
      md << "| " << format_number(key.first) << " | " << (key.second ? "on" : "off") << " | "
         << class_set << " | " << report_number(detail::median(values)) << " |\n";
    }
  }
  md << "\n";

  md << "## Forgetting and recovery (class-set accuracy at task ends, median across seeds)\n\n";
  md << "| p | rem | m (tasks since introduction) | mean f^m | task-1 final | task-1 minimum |\n";
  md << "|---|-----|------------------------------|----------|--------------|----------------|\n";
  for (const auto& [key, by_seed] : store) {
    std::map<int, std::vector<double>> f_by_m;
    std::vector<double> task1_final, task1_min;
    for (const auto& [seed, records] : by_seed) {
      int max_task = 0;
      for (const auto& r : records) max_task = std::max(max_task, r.task);
      std::map<int, std::vector<double>> end_acc;  // per m, this seed
      for (int c = 1; c <= max_task; ++c) {
        const auto curve = forgetting_curve(records, c);
        std::map<int, ForgettingPoint> last__per_m;
        for (const ForgettingPoint& pt : curve) last__per_m[pt.tasks_since_introduction] = pt;
        for (const auto& [m, pt] : last__per_m) end_acc[m].push_back(pt.value);
      }
      for (const auto& [m, vals] : end_acc) {
        double mean = 0;
        for (const double v : vals) mean += v;
        f_by_m[m].push_back(mean / static_cast<double>(vals.size()));
      }
      const auto task1 = forgetting_curve(records, 1);
      if (!task1.empty()) {
        task1_final.push_back(task1.back().value);
        double lo = 1.0;
        for (const ForgettingPoint& pt : task1) lo = std::min(lo, pt.value);
        task1_min.push_back(lo);
      }
    }
    for (const auto& [m, values] : f_by_m) {
      md << "| " << format_number(key.first) << " | " << (key.second ? "on" : "off") << " | " << m
         << " | " << report_number(detail::median(values)) << " | "
         << (m == 0 && !task1_final.empty() ? report_number(detail::median(task1_final)) : "")
         << " | " << (m == 0 && !task1_min.empty() ? report_number(detail::median(task1_min)) : "")
         << " |\n";
    }
  }
  md << "\n";
  return md.str();
}

}  // namespace sleepnet
