#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sleepnet/harness.hpp"
#include "sleepnet/report.hpp"
#include "sleepnet/synthetic.hpp"

using namespace sleepnet;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("sleepnet_h_" + tag + "_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

// 12-cell grid (2 p-values x 2 rem x 3 seeds) on a very small problem.
ExperimentConfig tiny_config(const fs::path& data_dir, const fs::path& out_dir) {
  return resolve_config(std::nullopt, {
                                          {"dataset.path", data_dir.string()},
                                          {"model.feature_len", "64"},
                                          {"model.hidden", "32"},
                                          {"model.latent", "8"},
                                          {"tasks.count", "2"},
                                          {"tasks.classes_per_task", "2"},
                                          {"train.iterations", "20"},
                                          {"train.batch", "8"},
                                          {"eval.cadence", "10"},
                                          {"eval.test_subsample", "16"},
                                          {"sweep.p_values", "[0, 0.5]"},
                                          {"sweep.rem", "[true, false]"},
                                          {"sweep.seeds", "[1, 2, 3]"},
                                          {"output.dir", out_dir.string()},
                                      });
}

void write_tiny_dataset(const fs::path& dir) {
  SynthSpec spec;
  spec.classes = 4;
  spec.image_size = 8;
  spec.train_per_class = 30;
  spec.test_per_class = 10;
  spec.noise = 0.1;
  spec.brightness = 0.1;
  spec.seed = 55;
  write_idx_root(make_synthetic(spec), dir);
}

}  // namespace

TEST_CASE("sweep executes the full grid, aggregates, resumes and stays deterministic") {
  TempDir data("data");
  write_tiny_dataset(data.path);
  TempDir out_a("a");
  const auto cfg = tiny_config(data.path, out_a.path);
  const std::string fp = cfg.fingerprint();

  const auto outcome = run_sweep<float>(cfg, false, "");
  CHECK(outcome.executed == 12);
  CHECK(outcome.failed == 0);
  CHECK(outcome.skipped == 0);

  const fs::path root = out_a.path / fp;
  // layout: out/<fingerprint>/<p>_<rem>_<seed>/ with the expected artifacts
  std::size_t cell_dirs = 0;
  for (const Cell& cell : plan_cells(cfg)) {
    const fs::path dir = root / cell_dirname(cell);
    ++cell_dirs;
    for (const char* name :
         {"metrics.csv", "derived.csv", "hist.csv", "params.bin", "log.txt", "done"}) {
      INFO((dir / name).string());
      CHECK(fs::exists(dir / name));
    }
  }
  CHECK(cell_dirs == 12);
  CHECK(fs::exists(root / "config.json"));
  CHECK(fs::exists(root / "summary" / "summary.csv"));
  CHECK(fs::exists(root / "summary" / "manifest.csv"));

  // manifest lists every cell as done
  std::size_t done_rows = 0;
  for (const auto& row : read_csv(root / "summary" / "manifest.csv")) {
    REQUIRE(row.size() == 4);
    CHECK(row[3] == "done");
    ++done_rows;
  }
  CHECK(done_rows == 12);

  const std::string summary_before = slurp(root / "summary" / "summary.csv");

  SUBCASE("re-running a completed sweep performs no training") {
    const auto again = run_sweep<float>(cfg, false, "");
    CHECK(again.executed == 0);
    CHECK(again.skipped == 12);
    CHECK(slurp(root / "summary" / "summary.csv") == summary_before);
  }

  SUBCASE("interrupted-and-resumed sweeps match uninterrupted ones") {
    // wipe two cells as if the sweep had been killed mid-flight
    const auto cells = plan_cells(cfg);
    const std::string bytes_0 = slurp(root / cell_dirname(cells[0]) / "metrics.csv");
    const std::string bytes_7 = slurp(root / cell_dirname(cells[7]) / "metrics.csv");
    fs::remove_all(root / cell_dirname(cells[0]));
    fs::remove(root / cell_dirname(cells[7]) / "done");  // partial cell

    const auto resumed = run_sweep<float>(cfg, false, "");
    CHECK(resumed.executed == 2);
    CHECK(resumed.skipped == 10);
    CHECK(slurp(root / cell_dirname(cells[0]) / "metrics.csv") == bytes_0);
    CHECK(slurp(root / cell_dirname(cells[7]) / "metrics.csv") == bytes_7);
    CHECK(slurp(root / "summary" / "summary.csv") == summary_before);
  }

  SUBCASE("identical configs in a fresh directory produce byte-identical artifacts") {
    TempDir out_b("b");
    auto cfg_b = tiny_config(data.path, out_b.path);
    CHECK(cfg_b.fingerprint() == fp);  // output dir is excluded from identity
    const auto second = run_sweep<float>(cfg_b, false, "");
    CHECK(second.executed == 12);
    for (const Cell& cell : plan_cells(cfg)) {
      const fs::path dir_a = root / cell_dirname(cell);
      const fs::path dir_b = out_b.path / fp / cell_dirname(cell);
      CHECK(slurp(dir_a / "metrics.csv") == slurp(dir_b / "metrics.csv"));
      CHECK(slurp(dir_a / "derived.csv") == slurp(dir_b / "derived.csv"));
      CHECK(slurp(dir_a / "hist.csv") == slurp(dir_b / "hist.csv"));
      CHECK(slurp(dir_a / "params.bin") == slurp(dir_b / "params.bin"));
    }
    CHECK(slurp(root / "summary" / "summary.csv") ==
          slurp(out_b.path / fp / "summary" / "summary.csv"));
  }

  SUBCASE("cells are order-independent") {
    TempDir out_c("c");
    auto cfg_c = tiny_config(data.path, out_c.path);
    const auto env = build_env<float>(cfg_c);
    auto cells = plan_cells(cfg_c);
    std::reverse(cells.begin(), cells.end());
    for (const Cell& cell : cells) run_cell(env, cfg_c, cell);
    for (const Cell& cell : cells) {
      CHECK(slurp(root / cell_dirname(cell) / "metrics.csv") ==
            slurp(out_c.path / fp / cell_dirname(cell) / "metrics.csv"));
    }
  }

  SUBCASE("report recomputes its tables from the raw CSVs") {
    const std::string report = make_report(root);
    // every cell appears
    for (const Cell& cell : plan_cells(cfg)) {
      const std::string row = "| " + format_number(cell.p) + " | " + (cell.rem ? "on" : "off") +
                              " | " + std::to_string(cell.seed) + " | done |";
      INFO(row);
      CHECK(report.find(row) != std::string::npos);
    }

    // independent oracle for the peak-accuracy table: recompute medians from
    // metrics.csv rows by hand
    auto median_of = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    for (const double p : {0.0, 0.5}) {
      for (const bool rem : {true, false}) {
        std::vector<double> peaks_task2;
        for (const std::uint64_t seed : {1, 2, 3}) {
          const auto rows = read_csv(root / cell_dirname({p, rem, seed}) / "metrics.csv");
          std::map<int, std::vector<double>> by_iter;  // iteration -> accuracies
          for (const auto& r : rows) {
            if (std::stoi(r[3]) == 2) by_iter[std::stoi(r[4])].push_back(std::stod(r[6]));
          }
          double best = -1;
          for (const auto& [iter, accs] : by_iter) {
            double mu = 0;
            for (const double a : accs) mu += a;
            mu /= double(accs.size());
            best = std::max(best, mu);
          }
          peaks_task2.push_back(best);
        }
        const std::string expected = "| " + format_number(p) + " | " + (rem ? "on" : "off") +
                                     " | 2 | " + report_number(median_of(peaks_task2)) + " | ";
        INFO(expected);
        CHECK(report.find(expected) != std::string::npos);
      }
    }
  }
}

TEST_CASE("report on an empty directory lists the missing files") {
  TempDir empty("empty");
  try {
    make_report(empty.path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("config.json") != std::string::npos);
    CHECK(msg.find("summary.csv") != std::string::npos);
    CHECK(msg.find("manifest.csv") != std::string::npos);
  }
}

TEST_CASE("failed cells are recorded and do not block the rest") {
  TempDir data("data2");
  write_tiny_dataset(data.path);
  TempDir out("f");
  // feature_len disagrees with the identity extractor's output length
  auto cfg = resolve_config(std::nullopt, {
                                              {"dataset.path", data.path.string()},
                                              {"model.feature_len", "99"},
                                              {"tasks.count", "2"},
                                              {"output.dir", out.path.string()},
                                          });
  const auto outcome = run_sweep<float>(cfg, false, "");
  CHECK(outcome.failed == 1);
  CHECK(outcome.executed == 0);
  // aggregation still produced a manifest naming the missing cell
  const auto rows = read_csv(fs::path(out.path) / cfg.fingerprint() / "summary" / "manifest.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0][3] == "missing");
}

TEST_CASE("build_env rejects missing datasets and extractor mismatches") {
  auto cfg = resolve_config(std::nullopt);
  CHECK_THROWS_AS(build_env<float>(cfg), ConfigError);  // empty dataset path
  auto cfg2 = resolve_config(std::nullopt, {{"dataset.path", "/nonexistent/root"}});
  CHECK_THROWS_AS(build_env<float>(cfg2), DataError);
  auto cfg3 = resolve_config(std::nullopt, {{"dataset.path", "/tmp"},
                                            {"model.extractor", "conv"},
                                            {"model.extractor_path", "/nonexistent/fe.bin"}});
  CHECK_THROWS_AS(build_env<float>(cfg3), Error);
}
