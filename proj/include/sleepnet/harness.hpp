#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sleepnet/config.hpp"
#include "sleepnet/serialize.hpp"
#include "sleepnet/trainer.hpp"

namespace sleepnet {

struct Cell {
  double p = 0.0;
  bool rem = false;
  std::uint64_t seed = 0;
};

inline std::string cell_dirname(const Cell& cell) {
  return format_number(cell.p) + "_" + (cell.rem ? "on" : "off") + "_" + std::to_string(cell.seed);
}

// Cartesian product of the sweep axes; cells are independent runs.
inline std::vector<Cell> plan_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const double p : cfg.p_values) {
    for (const bool rem : cfg.rem_values) {
      for (const std::uint64_t seed : cfg.seeds) cells.push_back({p, rem, seed});
    }
  }
  return cells;
}

// Shared immutable inputs for every cell in one process.
template <typename T>
struct ExperimentEnv {
  SplitDataset data;
  TaskStream stream;
  Normalization norm;
  ConvFeatureExtractor<T> extractor;
  ModelDims dims;
};

template <typename T>
ExperimentEnv<T> build_env(const ExperimentConfig& cfg) {
  if (cfg.dataset_path.empty()) {
    throw ConfigError("dataset.path is not set (config key or SLEEPNET_DATA_ROOT)");
  }
  ExperimentEnv<T> env;
  env.data = load_dataset_root(cfg.dataset_variant, cfg.dataset_path, cfg.dataset_channels);
  env.stream = split_tasks(env.data.train, env.data.test, cfg.task_count, cfg.classes_per_task,
                           cfg.shuffle_classes, cfg.class_seed);
  env.norm = compute_normalization(env.data.train);

  if (cfg.extractor_kind == "identity") {
    env.extractor = ConvFeatureExtractor<T>::identity(env.data.train.channels,
                                                      env.data.train.height, env.data.train.width);
  } else {
    if (cfg.extractor_path.empty()) {
      throw ConfigError("model.extractor_path must name a pretrained extractor file");
    }
    if (!std::filesystem::exists(cfg.extractor_path)) {
      throw DataError("pretrained extractor file '" + cfg.extractor_path +
                      "' is missing; run the pretrain subcommand first");
    }
    env.extractor = load_extractor<T>(cfg.extractor_path);
    if (!env.extractor.frozen()) {
      throw DataError("extractor in '" + cfg.extractor_path + "' is not frozen");
    }
  }
  if (env.extractor.feature_len() != cfg.feature_len) {
    throw ConfigError("model.feature_len " + std::to_string(cfg.feature_len) +
                      " does not match the extractor output length " +
                      std::to_string(env.extractor.feature_len()));
  }
  env.dims = ModelDims{cfg.feature_len, cfg.hidden, cfg.latent, env.data.train.class_count};
  return env;
}

inline TrainConfig cell_train_config(const ExperimentConfig& cfg, const Cell& cell,
                                     const std::string& fingerprint) {
  TrainConfig tc;
  tc.iterations = cfg.iterations;
  tc.batch = cfg.batch;
  tc.adam = AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  tc.temperature = cfg.temperature;
  tc.downscale_p = cell.p;
  tc.rem_enabled = cell.rem;
  tc.snapshot_before_downscale = cfg.snapshot_before_downscale;
  tc.pooled_replay = cfg.replay_mode == "pooled";
  tc.replay_pool = cfg.replay_pool;
  tc.eval_cadence = cfg.eval_cadence;
  tc.eval_subsample = cfg.eval_subsample;
  tc.seed = cell.seed;
  tc.fingerprint = fingerprint;
  return tc;
}

inline void write_normalization(const Normalization& norm, const std::filesystem::path& path) {
  nlohmann::json j;
  j["mean"] = norm.mean;
  j["stddev"] = norm.stddev;
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
}

// Execute one cell into <root>/<fingerprint>/<p>_<rem>_<seed>/. A cell is
// complete only once its `done` marker exists; partial output is wiped and
// re-run.
template <typename T>
void run_cell(const ExperimentEnv<T>& env, const ExperimentConfig& cfg, const Cell& cell) {
  const std::string fp = cfg.fingerprint();
  const std::filesystem::path root = std::filesystem::path(cfg.output_dir) / fp;
  const std::filesystem::path dir = root / cell_dirname(cell);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  echo_config(cfg, root / "config.json");
  write_normalization(env.norm, dir / "normalization.json");

  const TrainConfig tc = cell_train_config(cfg, cell, fp);
  run_experiment<T>(env.data, env.stream, env.norm, env.extractor, env.dims, tc, &dir);

  std::ofstream marker(dir / "done");
  marker << "ok\n";
}

inline bool cell_done(const ExperimentConfig& cfg, const Cell& cell) {
  return std::filesystem::exists(std::filesystem::path(cfg.output_dir) / cfg.fingerprint() /
                                 cell_dirname(cell) / "done");
}

// ---- CSV helpers ------------------------------------------------------------

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

// Reassemble MetricsRecords from a per-cell metrics.csv.
inline std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::map<std::pair<int, int>, MetricsRecord> by_key;
  for (const auto& row : read_csv(path)) {
    if (row.size() != 7) throw FormatError("malformed row in " + path.string());
    MetricsRecord& r = by_key[{std::stoi(row[3]), std::stoi(row[4])}];
    r.seed = std::stoull(row[0]);
    r.downscale_p = std::stod(row[1]);
    r.rem_enabled = row[2] == "1";
    r.task = std::stoi(row[3]);
    r.iteration = std::stoi(row[4]);
    const std::size_t class_set = std::stoul(row[5]);
    if (r.accuracies.size() < class_set) r.accuracies.resize(class_set);
    r.accuracies[class_set - 1] = std::stod(row[6]);
  }
  std::vector<MetricsRecord> records;
  records.reserve(by_key.size());
  for (auto& [key, rec] : by_key) records.push_back(std::move(rec));
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    if (a.task != b.task) return a.task < b.task;
    return a.iteration < b.iteration;
  });
  return records;
}

// ---- sweep ------------------------------------------------------------------

struct CellStatus {
  Cell cell;
  std::string status;  // done | failed | skipped
};

struct SweepOutcome {
  std::vector<CellStatus> cells;
  std::size_t executed = 0, skipped = 0, failed = 0;
};

// Aggregate derived metrics across seeds into summary/summary.csv with
// percentile-bootstrap intervals, plus a completeness manifest. Only
// completed cells contribute.
inline void aggregate_sweep(const ExperimentConfig& cfg) {
  const std::string fp = cfg.fingerprint();
  const std::filesystem::path root = std::filesystem::path(cfg.output_dir) / fp;
  const std::filesystem::path summary_dir = root / "summary";
  std::filesystem::create_directories(summary_dir);

  struct Key {
    double p;
    bool rem;
    int task;
    int iteration;
    std::string metric;
    bool operator<(const Key& o) const {
      if (p != o.p) return p < o.p;
      if (rem != o.rem) return rem < o.rem;
      if (task != o.task) return task < o.task;
      if (iteration != o.iteration) return iteration < o.iteration;
      return metric < o.metric;
    }
  };
  std::map<Key, std::vector<double>> groups;

  std::ofstream manifest(summary_dir / "manifest.csv", std::ios::trunc);
  manifest << "p,rem_enabled,seed,status\n";
  for (const Cell& cell : plan_cells(cfg)) {
    const bool done = cell_done(cfg, cell);
    manifest << format_number(cell.p) << ',' << (cell.rem ? 1 : 0) << ',' << cell.seed << ','
             << (done ? "done" : "missing") << '\n';
    if (!done) continue;
    const auto rows = read_csv(root / cell_dirname(cell) / "derived.csv");
    for (const auto& row : rows) {
      if (row.size() != 7) continue;
      groups[{std::stod(row[1]), row[2] == "1", std::stoi(row[3]), std::stoi(row[4]), row[5]}]
          .push_back(std::stod(row[6]));
    }
  }

  const std::uint64_t ci_seed = fnv1a64(fp + "/bootstrap");
  std::ofstream out(summary_dir / "summary.csv", std::ios::trunc);
  out << "p,rem_enabled,task,iteration,metric,mean,ci_low,ci_high,n\n";
  for (const auto& [key, values] : groups) {
    double mean = 0.0;
    for (const double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double lo = mean, hi = mean;
    if (values.size() >= 2) {
      std::tie(lo, hi) = bootstrap_ci(values, 0.95, 1000, ci_seed);
    }
    out << format_number(key.p) << ',' << (key.rem ? 1 : 0) << ',' << key.task << ','
        << key.iteration << ',' << key.metric << ',' << format_number(mean) << ','
        << format_number(lo) << ',' << format_number(hi) << ',' << values.size() << '\n';
  }
}

// Run every planned cell (skipping completed ones unless forced), then
// aggregate. With jobs > 1 the cells run in child processes re-invoking this
// binary's `run` subcommand; a failed cell never blocks the others.
template <typename T>
SweepOutcome run_sweep(const ExperimentConfig& cfg, bool force, const std::string& self_exe) {
  SweepOutcome outcome;
  const std::string fp = cfg.fingerprint();
  const std::filesystem::path root = std::filesystem::path(cfg.output_dir) / fp;
  std::filesystem::create_directories(root);
  echo_config(cfg, root / "config.json");

  std::vector<Cell> pending;
  for (const Cell& cell : plan_cells(cfg)) {
    if (!force && cell_done(cfg, cell)) {
      outcome.cells.push_back({cell, "skipped"});
      ++outcome.skipped;
    } else {
      pending.push_back(cell);
    }
  }

  if (cfg.jobs <= 1 || pending.size() <= 1 || self_exe.empty()) {
    std::optional<ExperimentEnv<T>> env;
    for (const Cell& cell : pending) {
      try {
        if (!env) env = build_env<T>(cfg);
        run_cell(*env, cfg, cell);
        outcome.cells.push_back({cell, "done"});
        ++outcome.executed;
      } catch (const std::exception& e) {
        outcome.cells.push_back({cell, std::string("failed: ") + e.what()});
        ++outcome.failed;
      }
    }
  } else {
    const std::filesystem::path echoed = root / "config.json";
    struct Running {
      pid_t pid;
      Cell cell;
    };
    std::vector<Running> running;
    std::size_t next = 0;
    auto reap = [&](bool block) {
      int status = 0;
      const pid_t pid = waitpid(-1, &status, block ? 0 : WNOHANG);
      if (pid <= 0) return false;
      auto it = std::find_if(running.begin(), running.end(),
                             [&](const Running& r) { return r.pid == pid; });
      if (it == running.end()) return true;
      const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
      outcome.cells.push_back({it->cell, ok ? "done" : "failed: exit code"});
      ok ? ++outcome.executed : ++outcome.failed;
      running.erase(it);
      return true;
    };
    while (next < pending.size() || !running.empty()) {
      while (next < pending.size() && running.size() < cfg.jobs) {
        const Cell& cell = pending[next];
        const std::string p_arg = format_number(cell.p);
        const std::string rem_arg = cell.rem ? "on" : "off";
        const std::string seed_arg = std::to_string(cell.seed);
        const pid_t pid = fork();
        if (pid == 0) {
          execl(self_exe.c_str(), self_exe.c_str(), "run", "--config", echoed.c_str(), "--cell-p",
                p_arg.c_str(), "--cell-rem", rem_arg.c_str(), "--cell-seed", seed_arg.c_str(),
                static_cast<char*>(nullptr));
          _exit(127);
        }
        if (pid < 0) throw Error("fork failed while scheduling sweep cells");
        running.push_back({pid, cell});
        ++next;
      }
      reap(true);
      while (reap(false)) {
      }
    }
  }

  aggregate_sweep(cfg);
  return outcome;
}

}  // namespace sleepnet
