#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sleepnet/adam.hpp"
#include "sleepnet/dataset.hpp"
#include "sleepnet/downscale.hpp"
#include "sleepnet/losses.hpp"
#include "sleepnet/metrics.hpp"
#include "sleepnet/model.hpp"
#include "sleepnet/replay.hpp"
#include "sleepnet/serialize.hpp"

namespace sleepnet {

// Knobs for one training run (a single (p, REM, seed) cell).
struct TrainConfig {
  std::size_t iterations = 400;
  std::size_t batch = 32;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  double temperature = 2.0;
  double downscale_p = 0.0;
  bool rem_enabled = true;
  bool snapshot_before_downscale = true;
  bool pooled_replay = false;     // default: fresh generative batches each iteration
  std::size_t replay_pool = 2048; // pool rows when pooled_replay is set
  std::size_t eval_cadence = 50;
  std::size_t eval_subsample = 64;  // test rows per class set; 0 = all
  std::uint64_t seed = 1;
  std::string fingerprint;
};

// Runs the per-task sleep loop: snapshot capture, synaptic downscaling,
// veridical + generative replay batches, combined loss, ADAM updates and
// cadence-based evaluation. Tasks must be trained strictly in order.
template <typename T>
class SleepTrainer {
 public:
  using MetricsSink = std::function<void(const MetricsRecord&)>;
  using HistogramSink = std::function<void(const WeightHistogram&)>;
  using LogSink = std::function<void(const std::string&)>;

  SleepTrainer(SleepModel<T>& model, const ConvFeatureExtractor<T>& extractor,
               const SplitDataset& data, const TaskStream& stream, const Normalization& norm,
               TrainConfig cfg)
      : model_(model),
        extractor_(extractor),
        data_(data),
        stream_(stream),
        norm_(norm),
        cfg_(std::move(cfg)),
        adam_(cfg_.adam),
        master_(cfg_.seed),
        rng_data_(master_.spawn(2)),
        rng_replay_(master_.spawn(3)),
        rng_noise_(master_.spawn(4)) {
    Rng rng_eval = master_.spawn(5);
    test_sets_.reserve(stream_.tasks.size());
    for (const Task& task : stream_.tasks) {
      std::vector<std::uint32_t> indices = task.test_indices;
      if (cfg_.eval_subsample > 0) {
        indices = subsample_indices(task.test_indices, cfg_.eval_subsample, rng_eval);
      }
      test_sets_.push_back(compute_features<T>(data_.test, indices, norm_, extractor_));
    }
  }

  void on_metrics(MetricsSink sink) { metrics_sink_ = std::move(sink); }
  void on_histogram(HistogramSink sink) { histogram_sink_ = std::move(sink); }
  void on_log(LogSink sink) { log_sink_ = std::move(sink); }

  const FrozenSnapshot<T>* snapshot() const { return snapshot_ ? snapshot_.get() : nullptr; }
  std::size_t tasks_completed() const { return next_task_ - 1; }

  void train_all() {
    for (std::size_t n = 1; n <= stream_.tasks.size(); ++n) train_task(n);
  }

  void train_task(std::size_t n) {
    if (n != next_task_) {
      throw Error("train_task: expected task " + std::to_string(next_task_) + ", got " +
                  std::to_string(n));
    }
    if (n > stream_.tasks.size()) throw Error("train_task: task index beyond stream");

    const bool replaying = cfg_.rem_enabled && n >= 2;
    if (n >= 2 && cfg_.snapshot_before_downscale) capture_snapshot(n);
    apply_downscale(n);
    if (n >= 2 && !cfg_.snapshot_before_downscale) capture_snapshot(n);

    FeatureSet<T> train_features =
        compute_features<T>(data_.train, stream_.tasks[n - 1].train_indices, norm_, extractor_);
    const std::vector<std::uint8_t> mask = stream_.mask_through(n);

    std::optional<ReplayBatch<T>> pool;
    if (replaying && cfg_.pooled_replay) {
      pool = generate_replay(*snapshot_, cfg_.replay_pool, rng_replay_);
    }

    for (std::size_t i = 1; i <= cfg_.iterations; ++i) {
      ReplayBatch<T> veridical = veridical_batch(train_features, cfg_.batch, rng_data_);
      std::optional<ReplayBatch<T>> generative;
      if (replaying) {
        generative = cfg_.pooled_replay ? sample_pool(*pool)
                                        : generate_replay(*snapshot_, cfg_.batch, rng_replay_);
      }

      Graph<T> graph;
      const auto bound = model_.bind(graph);
      const LossVars<T> losses =
          build_losses(graph, model_, bound, veridical, generative ? &*generative : nullptr, n,
                       mask, static_cast<T>(cfg_.temperature), rng_noise_);
      const LossBundle bundle = read_losses(
          graph, losses, "task " + std::to_string(n) + " iteration " + std::to_string(i));
      graph.backward(losses.total);

      auto params = model_.params();
      const auto members = SleepModel<T>::bound_members();
      std::vector<std::span<const T>> grads;
      grads.reserve(params.size());
      for (std::size_t p = 0; p < params.size(); ++p) {
        grads.push_back(graph.grad(bound.*(members[p])));
      }
      adam_.step(params, grads);

      if (i == 1 || i % cfg_.eval_cadence == 0 || i == cfg_.iterations) {
        emit_metrics(n, static_cast<int>(i));
        emit_histograms(static_cast<int>(n), static_cast<int>(i));
        if (log_sink_) {
          log_sink_("task " + std::to_string(n) + " iter " + std::to_string(i) + " loss " +
                    format_number(bundle.total) + " (C " + format_number(bundle.classifier) +
                    ", G " + format_number(bundle.generator) + ")");
        }
      }
    }
    ++next_task_;
  }

 private:
  void capture_snapshot(std::size_t n) {
    snapshot_ = std::make_unique<FrozenSnapshot<T>>(
        FrozenSnapshot<T>{model_, n - 1, stream_.mask_through(n - 1)});
  }

  void apply_downscale(std::size_t n) {
    DownscaleConfig cfg;
    cfg.fraction = cfg_.downscale_p;
    const DownscaleReport report = downscale(model_, cfg);
    if (log_sink_ && cfg.fraction > 0.0) {
      log_sink_("task " + std::to_string(n) + " downscale p=" + format_number(cfg.fraction) +
                " zeroed " + std::to_string(report.total()) + " weights");
    }
    emit_histograms(static_cast<int>(n), 0);
  }

  ReplayBatch<T> sample_pool(const ReplayBatch<T>& pool) {
    const std::size_t rows = pool.features.dim(0);
    const std::size_t width = pool.features.dim(1);
    const std::size_t classes = pool.soft_targets.dim(1);
    ReplayBatch<T> out;
    out.kind = ReplayBatch<T>::Kind::generative;
    out.features = Tensor<T>({cfg_.batch, width});
    out.soft_targets = Tensor<T>({cfg_.batch, classes});
    for (std::size_t i = 0; i < cfg_.batch; ++i) {
      const std::size_t row = static_cast<std::size_t>(rng_replay_.below(rows));
      std::copy_n(pool.features.data() + row * width, width, out.features.data() + i * width);
      std::copy_n(pool.soft_targets.data() + row * classes, classes,
                  out.soft_targets.data() + i * classes);
    }
    return out;
  }

  void emit_metrics(std::size_t n, int iteration) {
    if (!metrics_sink_) return;
    MetricsRecord record;
    record.seed = cfg_.seed;
    record.fingerprint = cfg_.fingerprint;
    record.downscale_p = cfg_.downscale_p;
    record.rem_enabled = cfg_.rem_enabled;
    record.task = static_cast<int>(n);
    record.iteration = iteration;
    const std::vector<std::uint8_t> mask = stream_.mask_through(n);
    for (std::size_t c = 1; c <= n; ++c) {
      record.accuracies.push_back(evaluate_class_set(test_sets_[c - 1], mask));
    }
    metrics_sink_(record);
  }

  double evaluate_class_set(const FeatureSet<T>& set, std::span<const std::uint8_t> mask) const {
    if (set.labels.empty()) return 0.0;
    const Tensor<T> pen = model_.penultimate_eval(set.features);
    const Tensor<T> logits = model_.classify_logits_eval(pen);
    const std::size_t classes = logits.dim(1);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < set.labels.size(); ++r) {
      const std::size_t pred = kernels::masked_argmax(logits.data() + r * classes, classes, mask);
      if (static_cast<int>(pred) == set.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(set.labels.size());
  }

  void emit_histograms(int task, int iteration) {
    if (!histogram_sink_) return;
    for (const auto& p : model_.params()) {
      if (!p.weight_matrix) continue;
      histogram_sink_(weight_histogram(*p.tensor, p.name, task, iteration));
    }
  }

  SleepModel<T>& model_;
  const ConvFeatureExtractor<T>& extractor_;
  const SplitDataset& data_;
  const TaskStream& stream_;
  const Normalization& norm_;
  TrainConfig cfg_;
  Adam<T> adam_;
  Rng master_;
  Rng rng_data_, rng_replay_, rng_noise_;
  std::vector<FeatureSet<T>> test_sets_;
  std::unique_ptr<FrozenSnapshot<T>> snapshot_;
  std::size_t next_task_ = 1;
  MetricsSink metrics_sink_;
  HistogramSink histogram_sink_;
  LogSink log_sink_;
};

// One full experiment cell: fresh model, all tasks in order, artifacts
// persisted when an output directory is given.
template <typename T>
std::vector<MetricsRecord> run_experiment(const SplitDataset& data, const TaskStream& stream,
                                          const Normalization& norm,
                                          const ConvFeatureExtractor<T>& extractor,
                                          const ModelDims& dims, const TrainConfig& cfg,
                                          const std::filesystem::path* out_dir = nullptr) {
  Rng master(cfg.seed);
  Rng init = master.spawn(1);
  SleepModel<T> model(dims, init);

  SleepTrainer<T> trainer(model, extractor, data, stream, norm, cfg);

  std::vector<MetricsRecord> records;
  std::optional<MetricsCsv> metrics_csv;
  std::optional<DerivedCsv> derived_csv;
  std::optional<HistogramCsv> hist_csv;
  std::optional<std::ofstream> log;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    metrics_csv.emplace(*out_dir / "metrics.csv");
    derived_csv.emplace(*out_dir / "derived.csv");
    hist_csv.emplace(*out_dir / "hist.csv");
    log.emplace(*out_dir / "log.txt", std::ios::trunc);
    *log << "fingerprint " << cfg.fingerprint << "\nseed " << cfg.seed << "\np "
         << format_number(cfg.downscale_p) << "\nrem " << (cfg.rem_enabled ? 1 : 0) << "\n";
  }

  trainer.on_metrics([&](const MetricsRecord& r) {
    records.push_back(r);
    if (metrics_csv) metrics_csv->write(r);
    if (derived_csv) derived_csv->write(r);
  });
  if (out_dir) {
    trainer.on_histogram([&](const WeightHistogram& h) { hist_csv->write(h); });
    trainer.on_log([&](const std::string& line) { *log << line << "\n"; });
  }

  trainer.train_all();

  if (out_dir) {
    save_model(*out_dir / "params.bin", model);
  }
  return records;
}

}  // namespace sleepnet
