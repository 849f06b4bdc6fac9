// Acceptance suite: one pass/fail line per criterion. Criteria 5-7 share one
// desk-scale training campaign; criterion 9 drives the installed CLI binary.
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "sleepnet/downscale.hpp"
#include "sleepnet/gradcheck.hpp"
#include "sleepnet/harness.hpp"
#include "sleepnet/losses.hpp"
#include "sleepnet/metrics.hpp"
#include "sleepnet/synthetic.hpp"
#include "sleepnet/trainer.hpp"

using namespace sleepnet;
namespace fs = std::filesystem;

namespace {

// The desk-scale profile shared by criteria 5-8.
struct DeskProfile {
  SynthSpec synth;  // defaults: 10 classes, 16x16, 200/40 per class, seed 99
  std::size_t tasks = 5;
  std::size_t classes_per_task = 2;
  ModelDims dims{256, 400, 32, 10};
  std::size_t iterations = 600;
  std::size_t batch = 32;
  double lr = 2e-3;
  double temperature = 2.0;
  std::size_t cadence = 25;
  std::size_t subsample = 0;  // evaluate on every test row of each class set
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct Campaign {
  SplitDataset data;
  TaskStream stream;
  Normalization norm;
  ConvFeatureExtractor<float> extractor;
  // records per (p, rem) per seed
  std::map<std::pair<double, bool>, std::map<std::uint64_t, std::vector<MetricsRecord>>> runs;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

TrainConfig make_train_config(const DeskProfile& desk, double p, bool rem, std::uint64_t seed) {
  TrainConfig tc;
  tc.iterations = desk.iterations;
  tc.batch = desk.batch;
  tc.adam = AdamConfig{desk.lr, 0.9, 0.999, 1e-8};
  tc.temperature = desk.temperature;
  tc.downscale_p = p;
  tc.rem_enabled = rem;
  tc.eval_cadence = desk.cadence;
  tc.eval_subsample = desk.subsample;
  tc.seed = seed;
  return tc;
}

Campaign run_campaign(const DeskProfile& desk) {
  Campaign c;
  c.data = make_synthetic(desk.synth);
  c.stream = split_tasks(c.data.train, c.data.test, desk.tasks, desk.classes_per_task);
  c.norm = compute_normalization(c.data.train);
  c.extractor = ConvFeatureExtractor<float>::identity(
      c.data.train.channels, c.data.train.height, c.data.train.width);

  struct Job {
    double p;
    bool rem;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const std::uint64_t seed : desk.seeds) jobs.push_back({0.0, false, seed});
  for (const double p : {0.0, 0.5, 0.75}) {
    for (const std::uint64_t seed : desk.seeds) jobs.push_back({p, true, seed});
  }

  std::mutex mu;
  std::size_t next = 0;
  const std::size_t workers = std::min<std::size_t>(std::thread::hardware_concurrency(), 4);
  auto worker = [&] {
    while (true) {
      Job job;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= jobs.size()) return;
        job = jobs[next++];
      }
      const TrainConfig tc = make_train_config(desk, job.p, job.rem, job.seed);
      auto records =
          run_experiment<float>(c.data, c.stream, c.norm, c.extractor, desk.dims, tc, nullptr);
      {
        std::lock_guard<std::mutex> lock(mu);
        c.runs[{job.p, job.rem}][job.seed] = std::move(records);
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < std::max<std::size_t>(workers, 1); ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return c;
}

const MetricsRecord& task_end(const std::vector<MetricsRecord>& records, int task,
                              std::size_t iterations) {
  for (const auto& r : records) {
    if (r.task == task && r.iteration == int(iterations)) return r;
  }
  throw Error("missing end-of-task record for task " + std::to_string(task));
}

// ---- criteria ---------------------------------------------------------------

bool criterion1() {
  const auto checks = run_gradcheck_suite(10);
  bool pass = !checks.empty();
  double worst = 0;
  std::string worst_name;
  for (const auto& c : checks) {
    pass = pass && c.pass;
    if (c.max_rel_err > worst) {
      worst = c.max_rel_err;
      worst_name = c.name;
    }
  }
  std::cout << "    " << checks.size() << " checks over 10 seeds; worst rel err "
            << format_number(worst) << " (" << worst_name << ")\n";
  return pass;
}

bool criterion2() {
  Rng rng(2024);
  bool pass = true;
  for (int trial = 0; trial < 100 && pass; ++trial) {
    const std::size_t n = 1 + rng.below(4000);
    std::vector<float> values(n);
    for (auto& v : values) v = float(rng.uniform() * 2.0 - 1.0);
    if (trial % 4 == 0) {
      for (std::size_t i = 0; i + 8 < n; i += 8) values[i] = 0.0625f;  // tie clusters
    }
    for (const double p : {0.0, 0.25, 0.5, 0.75, 0.9}) {
      Tensor<float> w({n}, values);
      const std::size_t k = std::size_t(std::floor(p * double(n)));
      if (downscale_tensor(w, p) != k) {
        pass = false;
        break;
      }
      // independent oracle: stable sort on (magnitude, index)
      std::vector<std::uint32_t> order(n);
      std::iota(order.begin(), order.end(), 0u);
      std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        const float ma = std::abs(values[a]), mb = std::abs(values[b]);
        if (ma != mb) return ma < mb;
        return a < b;
      });
      std::vector<bool> zeroed(n, false);
      for (std::size_t i = 0; i < k; ++i) zeroed[order[i]] = true;
      for (std::size_t i = 0; i < n && pass; ++i) {
        if (zeroed[i]) {
          pass = w.values()[i] == 0.0f;
        } else {
          pass = std::memcmp(&w.values()[i], &values[i], sizeof(float)) == 0;
        }
      }
      if (!pass) break;
    }
  }
  std::cout << "    100 random layers x p in {0, 0.25, 0.5, 0.75, 0.9}\n";
  return pass;
}

bool criterion3() {
  bool pass = true;
  for (std::size_t n = 1; n <= 10; ++n) {
    const auto w = loss_weights(n, n >= 2);
    if (n == 1) {
      pass = pass && w.current == 1.0 && w.replay == 0.0;
    } else {
      pass = pass && w.current == 1.0 / double(n) && w.replay == 1.0 - 1.0 / double(n);
    }
    const auto off = loss_weights(n, false);
    pass = pass && off.current == 1.0 && off.replay == 0.0;
  }

  // structural check: without replay the composed loss has no replay terms
  Rng rng(3);
  SleepModel<float> model(ModelDims{16, 12, 4, 6}, rng);
  ReplayBatch<float> veridical;
  veridical.kind = ReplayBatch<float>::Kind::veridical;
  veridical.features = Tensor<float>({2, 16});
  for (auto& v : veridical.features.values()) v = float(rng.uniform());
  veridical.labels = {0, 1};
  Graph<float> g;
  auto bound = model.bind(g);
  Rng noise(4);
  const auto vars = build_losses<float>(g, model, bound, veridical, nullptr, 3,
                                        std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1}, 2.0f, noise);
  pass = pass && !vars.has_replay && !vars.classifier_replay.valid() &&
         !vars.generator_replay.valid() && vars.weights.current == 1.0;
  std::cout << "    coefficients exact for N in 1..10; replay terms absent when off\n";
  return pass;
}

bool criterion4() {
  Rng rng(4);
  bool pass = true;
  double max_err = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int task = 1 + int(rng.below(10));
    MetricsRecord r;
    r.task = task;
    r.iteration = int(rng.below(10000));
    r.accuracies.resize(std::size_t(task));
    for (auto& a : r.accuracies) a = rng.uniform() < 0.1 ? 0.0 : rng.uniform();

    // independent brute-force evaluations
    double mu_brute = 0;
    for (const double a : r.accuracies) mu_brute += a;
    mu_brute /= double(task);
    max_err = std::max(max_err, std::abs(avg_accuracy(r) - mu_brute));
    pass = pass && std::abs(avg_accuracy(r) - mu_brute) < 1e-12;

    const auto pc = prev_and_current(r);
    pass = pass && pc.current == r.accuracies.back();
    if (task >= 2) {
      double prev_brute = 0;
      for (int c = 0; c + 1 < task; ++c) prev_brute += r.accuracies[std::size_t(c)];
      prev_brute /= double(task - 1);
      pass = pass && std::abs(*pc.prev - prev_brute) < 1e-12;
    } else {
      pass = pass && !pc.prev.has_value();
    }

    const auto kl = task_balance_kl(r);
    if (mu_brute == 0.0) {
      pass = pass && !kl.has_value();
    } else {
      double kl_brute = 0;
      for (const double a : r.accuracies) {
        if (a > 0) kl_brute += a / (double(task) * mu_brute) * std::log(a / mu_brute);
      }
      pass = pass && std::abs(*kl - kl_brute) < 1e-12 && *kl >= -1e-12;
    }
  }
  {
    // uniform records have zero divergence
    for (int n = 1; n <= 10; ++n) {
      MetricsRecord r;
      r.task = n;
      r.accuracies.assign(std::size_t(n), 0.37);
      pass = pass && std::abs(*task_balance_kl(r)) < 1e-12;
    }
  }
  {
    // forgetting surface and per-task maxima against brute-force scans
    std::vector<MetricsRecord> records;
    for (int task = 1; task <= 6; ++task) {
      for (int iter : {1, 10, 20}) {
        MetricsRecord r;
        r.task = task;
        r.iteration = iter;
        r.accuracies.resize(std::size_t(task));
        for (auto& a : r.accuracies) a = rng.uniform();
        records.push_back(r);
      }
    }
    for (int c = 1; c <= 6 && pass; ++c) {
      for (const auto& pt : forgetting_curve(records, c)) {
        bool found = false;
        for (const auto& r : records) {
          if (r.task == c + pt.tasks_since_introduction && r.iteration == pt.iteration) {
            found = r.accuracies[std::size_t(c - 1)] == pt.value;
            break;
          }
        }
        pass = pass && found;
      }
    }
    for (const auto& m : max_accuracy_per_task(records)) {
      double best = -1;
      int at = -1;
      for (const auto& r : records) {
        if (r.task != m.task) continue;
        double mu = 0;
        for (const double a : r.accuracies) mu += a;
        mu /= double(r.accuracies.size());
        if (mu > best) {
          best = mu;
          at = r.iteration;
        }
      }
      pass = pass && std::abs(m.value - best) < 1e-12 && m.iteration == at;
    }
  }
  std::cout << "    1000 randomized records, max deviation " << format_number(max_err) << "\n";
  return pass;
}

bool criterion5(const Campaign& c, const DeskProfile& desk) {
  bool pass = true;
  const auto& off = c.runs.at({0.0, false});
  for (int task = 2; task <= int(desk.tasks); ++task) {
    std::vector<double> values;
    for (const auto& [seed, records] : off) {
      values.push_back(*prev_and_current(task_end(records, task, desk.iterations)).prev);
    }
    const double med = median(values);
    const double chance = 1.0 / (2.0 * double(task));
    std::cout << "    task " << task << ": median mu_prev " << format_number(med) << " vs 1.5x chance "
              << format_number(1.5 * chance) << "\n";
    pass = pass && med < 1.5 * chance;
  }
  return pass;
}

bool criterion6(const Campaign& c, const DeskProfile& desk) {
  bool pass = true;
  const auto& on = c.runs.at({0.0, true});
  const auto& off = c.runs.at({0.0, false});

  std::vector<double> final_on, final_off;
  for (const auto& [seed, records] : on) {
    final_on.push_back(avg_accuracy(task_end(records, int(desk.tasks), desk.iterations)));
  }
  for (const auto& [seed, records] : off) {
    final_off.push_back(avg_accuracy(task_end(records, int(desk.tasks), desk.iterations)));
  }
  const double ratio = median(final_on) / median(final_off);
  std::cout << "    final mu: replay " << format_number(median(final_on)) << " vs none "
            << format_number(median(final_off)) << " (ratio " << format_number(ratio) << ")\n";
  pass = pass && median(final_on) >= 2.0 * median(final_off);

  for (int task = 2; task <= int(desk.tasks); ++task) {
    std::vector<double> values;
    for (const auto& [seed, records] : on) {
      values.push_back(*prev_and_current(task_end(records, task, desk.iterations)).prev);
    }
    const double med = median(values);
    const double floor = 3.0 / (2.0 * double(task));
    std::cout << "    task " << task << ": median mu_prev " << format_number(med) << " vs 3x chance "
              << format_number(floor) << "\n";
    pass = pass && med > floor;
  }
  return pass;
}

bool criterion7(const Campaign& c, const DeskProfile& desk) {
  bool pass = true;

  // retention of task 1's classes is non-decreasing in p
  std::vector<double> medians;
  for (const double p : {0.0, 0.5, 0.75}) {
    std::vector<double> finals;
    for (const auto& [seed, records] : c.runs.at({p, true})) {
      finals.push_back(task_end(records, int(desk.tasks), desk.iterations).accuracies[0]);
    }
    medians.push_back(median(finals));
  }
  std::cout << "    final task-1 accuracy, median: p=0 " << format_number(medians[0]) << ", p=0.5 "
            << format_number(medians[1]) << ", p=0.75 " << format_number(medians[2]) << "\n";
  pass = pass && medians[0] <= medians[1] + 1e-12 && medians[1] <= medians[2] + 1e-12;

  // recovery at p = 0.75: mid-final-task accuracy climbs >= 5 points out of
  // the post-task-3 minimum observed up to that measurement
  const int mid_iter = int(desk.iterations / 2);
  std::vector<double> recoveries;
  for (const auto& [seed, records] : c.runs.at({0.75, true})) {
    double mid = -1;
    double minimum = 2.0;
    for (const auto& r : records) {
      if (r.task == int(desk.tasks) && r.iteration == mid_iter) mid = r.accuracies[0];
    }
    for (const auto& r : records) {
      if (r.task < 4) continue;
      if (r.task == int(desk.tasks) && r.iteration >= mid_iter) continue;
      minimum = std::min(minimum, r.accuracies[0]);
    }
    recoveries.push_back(mid - minimum);
  }
  const double med_recovery = median(recoveries);
  std::cout << "    p=0.75 recovery (mid-final minus post-task-3 minimum), median "
            << format_number(med_recovery) << "\n";
  pass = pass && med_recovery >= 0.05;
  return pass;
}

bool criterion8(const DeskProfile& desk) {
  // One focused run at p = 0.75: bimodality right after downscale, regrowth
  // of the small-magnitude region after 500 iterations.
  auto data = make_synthetic(desk.synth);
  const auto stream = split_tasks(data.train, data.test, desk.tasks, desk.classes_per_task);
  const auto norm = compute_normalization(data.train);
  const auto extractor = ConvFeatureExtractor<float>::identity(
      data.train.channels, data.train.height, data.train.width);

  TrainConfig tc = make_train_config(desk, 0.75, true, 1);
  tc.iterations = 500;

  Rng init(Rng(tc.seed).spawn(1));
  SleepModel<float> model(desk.dims, init);
  SleepTrainer<float> trainer(model, extractor, data, stream, norm, tc);

  std::map<std::pair<int, int>, WeightHistogram> hists;
  trainer.on_histogram([&](const WeightHistogram& h) {
    if (h.layer == "enc1.w") hists[{h.task, h.iteration}] = h;
  });

  trainer.train_task(1);

  // pre-downscale magnitude percentile of the first encoder layer
  std::vector<float> mags;
  for (const auto& p : model.params()) {
    if (p.name == "enc1.w") {
      for (const float v : p.tensor->values()) mags.push_back(std::abs(v));
    }
  }
  std::sort(mags.begin(), mags.end());
  const std::size_t k = std::size_t(std::floor(0.75 * double(mags.size())));
  const double threshold = mags[k - 1];  // largest magnitude that downscaling removes

  trainer.train_task(2);

  auto mass_below = [&](const WeightHistogram& h) {
    std::uint64_t below = 0;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      if (h.edges[i + 1] <= threshold) below += h.counts[i];
    }
    return below;
  };

  const auto after_downscale = hists.find({2, 0});
  const auto after_training = hists.find({2, 500});
  if (after_downscale == hists.end() || after_training == hists.end()) {
    std::cout << "    missing histogram captures\n";
    return false;
  }
  const std::uint64_t gap = mass_below(after_downscale->second);
  const std::uint64_t regrown = mass_below(after_training->second);
  std::cout << "    positive mass below the pre-downscale 75th percentile: " << gap
            << " right after downscale, " << regrown << " after 500 iterations\n";
  return gap == 0 && regrown > 0;
}

// ---- criterion 9: CLI determinism and resume --------------------------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SLEEPNET_CLI_PATH) + " " + args + " > " + log.string() +
                          " 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

bool criterion9(const DeskProfile& desk) {
  const fs::path base = fs::temp_directory_path() / "sleepnet_acceptance_c9";
  fs::remove_all(base);
  fs::create_directories(base);

  // dataset via the synthetic generator tool
  if (run_cli(std::string("--help"), base / "help.log") != 0) {
    std::cout << "    CLI not runnable\n";
    return false;
  }
  {
    std::ostringstream cmd;
    cmd << SLEEPNET_SYNTHGEN_PATH << " --out " << (base / "data").string() << " --noise "
        << desk.synth.noise << " --brightness " << desk.synth.brightness << " --seed "
        << desk.synth.seed << " > " << (base / "synth.log").string() << " 2>&1";
    if (std::system(cmd.str().c_str()) != 0) {
      std::cout << "    synthetic dataset generation failed\n";
      return false;
    }
  }

  std::ostringstream common;
  common << "--dataset.path " << (base / "data").string()
         << " --tasks.count 3 --train.iterations 200 --train.lr 0.002"
         << " --sweep.p_values '[0]' --sweep.rem '[true,false]' --sweep.seeds '[1,2]'"
         << " --sweep.jobs 2";

  bool pass = true;
  auto sweep_into = [&](const std::string& dir) {
    return run_cli("sweep " + common.str() + " --output.dir " + (base / dir).string(),
                   base / (dir + ".log"));
  };

  if (sweep_into("outA") != 0 || sweep_into("outB") != 0) {
    std::cout << "    sweep invocation failed\n";
    return false;
  }

  // locate the fingerprint directory
  fs::path fpA, fpB;
  for (const auto& e : fs::directory_iterator(base / "outA")) fpA = e.path();
  for (const auto& e : fs::directory_iterator(base / "outB")) fpB = e.path();

  const std::vector<std::string> cells{"0_on_1", "0_on_2", "0_off_1", "0_off_2"};
  for (const auto& cell : cells) {
    if (slurp(fpA / cell / "metrics.csv") != slurp(fpB / cell / "metrics.csv") ||
        slurp(fpA / cell / "derived.csv") != slurp(fpB / cell / "derived.csv")) {
      std::cout << "    repeated sweep differs in cell " << cell << "\n";
      pass = false;
    }
  }
  if (slurp(fpA / "summary" / "summary.csv") != slurp(fpB / "summary" / "summary.csv")) {
    std::cout << "    repeated sweep differs in the summary\n";
    pass = false;
  }
  if (pass) std::cout << "    repeated sweeps byte-identical across 4 cells\n";

  // interrupted-and-resumed: pre-run one cell via `run`, then sweep the rest
  {
    const std::string run_args = "run " + common.str() + " --output.dir " +
                                 (base / "outC").string() +
                                 " --cell-p 0 --cell-rem on --cell-seed 2";
    if (run_cli(run_args, base / "outC_run.log") != 0) {
      std::cout << "    single-cell run failed\n";
      return false;
    }
    if (sweep_into("outC") != 0) {
      std::cout << "    resumed sweep failed\n";
      return false;
    }
    const std::string log = slurp(base / "outC.log");
    if (log.find("0_on_2: skipped") == std::string::npos) {
      std::cout << "    resume did not skip the completed cell\n";
      pass = false;
    }
    fs::path fpC;
    for (const auto& e : fs::directory_iterator(base / "outC")) fpC = e.path();
    for (const auto& cell : cells) {
      if (slurp(fpA / cell / "metrics.csv") != slurp(fpC / cell / "metrics.csv")) {
        std::cout << "    resumed sweep differs in cell " << cell << "\n";
        pass = false;
      }
    }
    if (slurp(fpA / "summary" / "summary.csv") != slurp(fpC / "summary" / "summary.csv")) {
      std::cout << "    resumed sweep summary differs\n";
      pass = false;
    }
    if (pass) std::cout << "    interrupted-and-resumed sweep matches the uninterrupted one\n";
  }

  // a re-run of a completed sweep trains nothing
  {
    if (sweep_into("outA") != 0) {
      std::cout << "    idempotent re-sweep failed\n";
      return false;
    }
    const std::string log = slurp(base / "outA.log");
    if (log.find("0 executed") == std::string::npos) {
      std::cout << "    re-sweep of a completed grid executed cells\n";
      pass = false;
    }
  }

  // report runs over the sweep output
  {
    if (run_cli("report --results " + fpA.string(), base / "report.log") != 0) {
      std::cout << "    report over the sweep output failed\n";
      pass = false;
    }
  }

  // exit-code contract: 1 config, 2 data, 0 success
  {
    auto exit_code = [](int status) { return WIFEXITED(status) ? WEXITSTATUS(status) : -1; };
    if (exit_code(run_cli("run --no-such-flag 1", base / "ec1.log")) != 1) {
      std::cout << "    unknown flag should exit 1\n";
      pass = false;
    }
    if (exit_code(run_cli("run --train.lr banana", base / "ec1b.log")) != 1) {
      std::cout << "    type mismatch should exit 1\n";
      pass = false;
    }
    if (exit_code(run_cli("run --dataset.path " + (base / "missing").string(),
                          base / "ec2.log")) != 2) {
      std::cout << "    missing dataset should exit 2\n";
      pass = false;
    }
    if (exit_code(run_cli("report --results " + (base / "missing").string(),
                          base / "ec3.log")) != 2) {
      std::cout << "    report on a missing directory should exit 2\n";
      pass = false;
    }
    if (pass) std::cout << "    exit codes: 1 config, 2 data, 0 success\n";
  }

  // pretrain a small conv extractor through the CLI and consume it in a run
  {
    const std::string fe_path = (base / "fe.bin").string();
    const std::string pretrain_args =
        "pretrain --pretrain.variant idx --pretrain.path " + (base / "data").string() +
        " --pretrain.iterations 40 --pretrain.batch 16 --pretrain.lr 0.002" +
        " --model.conv_channels '[4,8,16,32,64]' --pretrain.out " + fe_path;
    if (run_cli(pretrain_args, base / "pretrain.log") != 0) {
      std::cout << "    pretrain subcommand failed\n";
      pass = false;
    } else {
      const std::string run_args =
          "run --dataset.path " + (base / "data").string() +
          " --model.extractor conv --model.extractor_path " + fe_path +
          " --model.feature_len 64 --model.hidden 64 --model.latent 8" +
          " --tasks.count 2 --train.iterations 30 --output.dir " + (base / "outFe").string();
      if (run_cli(run_args, base / "runfe.log") != 0) {
        std::cout << "    run with the pretrained extractor failed\n";
        pass = false;
      } else {
        std::cout << "    pretrained conv extractor flows through run\n";
      }
    }
  }
  if (pass) fs::remove_all(base);
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--criterion" && i + 1 < argc) only = std::atoi(argv[i + 1]);
  }

  DeskProfile desk;
  bool all_pass = true;
  int failures = 0;

  auto report = [&](int index, const std::string& name, bool pass) {
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << index << ": " << name << "\n";
    if (!pass) {
      all_pass = false;
      ++failures;
    }
  };
  auto want = [&](int index) { return only == 0 || only == index; };

  if (want(1)) report(1, "gradient correctness (finite differences, float64)", criterion1());
  if (want(2)) report(2, "downscaling invariants", criterion2());
  if (want(3)) report(3, "loss-weighting formula", criterion3());
  if (want(4)) report(4, "metric oracle equivalence", criterion4());

  const bool needs_campaign = want(5) || want(6) || want(7);
  if (needs_campaign) {
    std::cout << "running the desk-scale campaign (20 cells)...\n";
    const Campaign campaign = run_campaign(desk);
    if (want(5)) report(5, "catastrophic-forgetting collapse without replay", criterion5(campaign, desk));
    if (want(6)) report(6, "generative-replay rescue", criterion6(campaign, desk));
    if (want(7)) report(7, "downscaling retention trend and recovery", criterion7(campaign, desk));
  }
  if (want(8)) report(8, "weight-distribution bimodality and regrowth", criterion8(desk));
  if (want(9)) report(9, "determinism and resume through the CLI", criterion9(desk));

  std::cout << (all_pass ? "ACCEPTANCE: all criteria passed"
                         : "ACCEPTANCE: " + std::to_string(failures) + " criterion(s) failed")
            << "\n";
  return all_pass ? 0 : 1;
}
