#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sleepnet/common.hpp"
#include "sleepnet/tensor.hpp"

namespace sleepnet {

// One evaluation snapshot during task `task` at in-task `iteration`:
// accuracies[c-1] = a_N^C, the top-1 accuracy on test examples of the classes
// introduced at task c, predictions masked to all classes seen so far.
struct MetricsRecord {
  std::uint64_t seed = 0;
  std::string fingerprint;
  double downscale_p = 0.0;
  bool rem_enabled = false;
  int task = 1;
  int iteration = 0;
  std::vector<double> accuracies;
};

inline void validate_record(const MetricsRecord& r) {
  if (r.task < 1 || r.accuracies.size() != static_cast<std::size_t>(r.task)) {
    throw Error("metrics record for task " + std::to_string(r.task) + " carries " +
                std::to_string(r.accuracies.size()) + " accuracies");
  }
  for (const double a : r.accuracies) {
    if (!(a >= 0.0 && a <= 1.0)) {
      throw Error("accuracy " + format_number(a) + " outside [0,1]");
    }
  }
}

// mu_N(i): arithmetic mean of a_N^C over C = 1..N.
inline double avg_accuracy(const MetricsRecord& r) {
  validate_record(r);
  double sum = 0.0;
  for (const double a : r.accuracies) sum += a;
  return sum / static_cast<double>(r.accuracies.size());
}

struct PrevCurrent {
  std::optional<double> prev;  // undefined for N = 1
  double current = 0.0;
};

// mu_prev = mean over C = 1..N-1, mu_current = a_N^N.
inline PrevCurrent prev_and_current(const MetricsRecord& r) {
  validate_record(r);
  PrevCurrent out;
  out.current = r.accuracies.back();
  if (r.task >= 2) {
    double sum = 0.0;
    for (std::size_t c = 0; c + 1 < r.accuracies.size(); ++c) sum += r.accuracies[c];
    out.prev = sum / static_cast<double>(r.accuracies.size() - 1);
  }
  return out;
}

// KL_N(i) = sum_C (a_N^C / (N mu)) ln(a_N^C / mu), with 0 ln 0 := 0.
// Undefined (nullopt) when every accuracy is zero.
inline std::optional<double> task_balance_kl(const MetricsRecord& r) {
  const double mu = avg_accuracy(r);
  if (mu <= 0.0) return std::nullopt;
  const double n = static_cast<double>(r.accuracies.size());
  double kl = 0.0;
  for (const double a : r.accuracies) {
    if (a > 0.0) kl += a / (n * mu) * std::log(a / mu);
  }
  return kl;
}

struct ForgettingPoint {
  int tasks_since_introduction = 0;  // m
  int iteration = 0;
  double value = 0.0;
};

// f^m_C(i) = a_{C+m}^C(i), re-indexed from the record store. Only existing
// records produce points; missing tasks simply leave gaps.
inline std::vector<ForgettingPoint> forgetting_curve(std::span<const MetricsRecord> records,
                                                     int class_set) {
  std::vector<ForgettingPoint> out;
  for (const MetricsRecord& r : records) {
    if (r.task < class_set) continue;
    validate_record(r);
    out.push_back({r.task - class_set, r.iteration,
                   r.accuracies[static_cast<std::size_t>(class_set - 1)]});
  }
  std::stable_sort(out.begin(), out.end(), [](const ForgettingPoint& a, const ForgettingPoint& b) {
    if (a.tasks_since_introduction != b.tasks_since_introduction) {
      return a.tasks_since_introduction < b.tasks_since_introduction;
    }
    return a.iteration < b.iteration;
  });
  return out;
}

struct TaskMaximum {
  int task = 0;
  double value = 0.0;
  int iteration = 0;
};

// Per-task maximum of mu_N(i) and where it occurred.
inline std::vector<TaskMaximum> max_accuracy_per_task(std::span<const MetricsRecord> records) {
  std::vector<TaskMaximum> out;
  for (const MetricsRecord& r : records) {
    const double mu = avg_accuracy(r);
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const TaskMaximum& m) { return m.task == r.task; });
    if (it == out.end()) {
      out.push_back({r.task, mu, r.iteration});
    } else if (mu > it->value) {
      it->value = mu;
      it->iteration = r.iteration;
    }
  }
  std::sort(out.begin(), out.end(),
            [](const TaskMaximum& a, const TaskMaximum& b) { return a.task < b.task; });
  return out;
}

// Histogram of strictly positive weights: 64 uniform bins over (0, max].
// A layer with no positive weights yields an empty histogram.
struct WeightHistogram {
  std::string layer;
  int task = 0;
  int iteration = 0;
  std::vector<double> edges;           // bins + 1 when non-empty
  std::vector<std::uint64_t> counts;

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto c : counts) n += c;
    return n;
  }
};

template <typename T>
WeightHistogram weight_histogram(const Tensor<T>& w, std::string layer, int task, int iteration,
                                 std::size_t bins = 64) {
  WeightHistogram h;
  h.layer = std::move(layer);
  h.task = task;
  h.iteration = iteration;
  T max_pos{};
  for (const T v : w.values()) max_pos = std::max(max_pos, v);
  if (!(max_pos > T{})) return h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    h.edges[i] = static_cast<double>(max_pos) * static_cast<double>(i) / static_cast<double>(bins);
  }
  h.counts.assign(bins, 0);
  for (const T v : w.values()) {
    if (v > T{}) {
      const double frac = static_cast<double>(v) / static_cast<double>(max_pos);
      std::size_t idx = static_cast<std::size_t>(frac * static_cast<double>(bins));
      if (idx >= bins) idx = bins - 1;
      ++h.counts[idx];
    }
  }
  return h;
}

// Percentile bootstrap interval for the mean, deterministic for a fixed
// resample seed. Quantiles use linear interpolation between order statistics.
inline std::pair<double, double> bootstrap_ci(std::span<const double> samples, double level,
                                              std::size_t resamples, std::uint64_t seed) {
  if (samples.size() < 2) {
    throw Error("bootstrap_ci: need at least 2 samples, got " + std::to_string(samples.size()));
  }
  if (!(level > 0.0 && level < 1.0)) throw Error("bootstrap_ci: level must be in (0,1)");
  Rng rng(seed);
  std::vector<double> stats(resamples);
  for (auto& s : stats) {
    double acc = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      acc += samples[static_cast<std::size_t>(rng.below(samples.size()))];
    }
    s = acc / static_cast<double>(samples.size());
  }
  std::sort(stats.begin(), stats.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(stats.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, stats.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return stats[lo] * (1.0 - frac) + stats[hi] * frac;
  };
  const double alpha = (1.0 - level) / 2.0;
  return {quantile(alpha), quantile(1.0 - alpha)};
}

// ---- CSV sinks --------------------------------------------------------------

// metrics.csv: one row per a_N^C(i).
class MetricsCsv {
 public:
  explicit MetricsCsv(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw DataError("cannot open " + path.string() + " for writing");
    out_ << "seed,p,rem_enabled,task,iteration,class_set,accuracy\n";
  }

  void write(const MetricsRecord& r) {
    validate_record(r);
    for (std::size_t c = 0; c < r.accuracies.size(); ++c) {
      out_ << r.seed << ',' << format_number(r.downscale_p) << ',' << (r.rem_enabled ? 1 : 0)
           << ',' << r.task << ',' << r.iteration << ',' << (c + 1) << ','
           << format_number(r.accuracies[c]) << '\n';
    }
  }

 private:
  std::ofstream out_;
};

// derived.csv: mu / mu_prev / mu_current / kl rows; undefined values are
// omitted rather than written as markers.
class DerivedCsv {
 public:
  explicit DerivedCsv(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw DataError("cannot open " + path.string() + " for writing");
    out_ << "seed,p,rem_enabled,task,iteration,metric,value\n";
  }

  void write(const MetricsRecord& r) {
    const double mu = avg_accuracy(r);
    const PrevCurrent pc = prev_and_current(r);
    const std::optional<double> kl = task_balance_kl(r);
    row(r, "mu", mu);
    if (pc.prev) row(r, "mu_prev", *pc.prev);
    row(r, "mu_current", pc.current);
    if (kl) row(r, "kl", *kl);
  }

 private:
  void row(const MetricsRecord& r, const char* metric, double value) {
    out_ << r.seed << ',' << format_number(r.downscale_p) << ',' << (r.rem_enabled ? 1 : 0) << ','
         << r.task << ',' << r.iteration << ',' << metric << ',' << format_number(value) << '\n';
  }

  std::ofstream out_;
};

// hist.csv: one row per bin.
class HistogramCsv {
 public:
  explicit HistogramCsv(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw DataError("cannot open " + path.string() + " for writing");
    out_ << "task,iteration,layer,bin_low,bin_high,count\n";
  }

  void write(const WeightHistogram& h) {
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      out_ << h.task << ',' << h.iteration << ',' << h.layer << ',' << format_number(h.edges[i])
           << ',' << format_number(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
    }
  }

 private:
  std::ofstream out_;
};

}  // namespace sleepnet
