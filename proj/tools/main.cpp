// Command-line front end: pretrain, run, sweep, report, grad-check.
#include <unistd.h>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sleepnet/config.hpp"
#include "sleepnet/gradcheck.hpp"
#include "sleepnet/harness.hpp"
#include "sleepnet/pretrain.hpp"
#include "sleepnet/report.hpp"
#include "sleepnet/serialize.hpp"

namespace {

using sleepnet::Cell;
using sleepnet::ConfigError;
using sleepnet::ExperimentConfig;

struct CommonArgs {
  std::optional<std::string> config_file;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// Every leaf key of the config schema becomes a --section.key option.
void add_config_options(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", [&args](const std::vector<std::string>& vals) {
        args.config_file = vals.back();
        return true;
      },
      "JSON config file (defaults apply when omitted)")
      ->expected(1);
  const nlohmann::json schema = sleepnet::default_config("desk");
  for (const auto& [section, body] : schema.items()) {
    for (const auto& [key, value] : body.items()) {
      const std::string path = section + "." + key;
      cmd->add_option("--" + path, [&args, path](const std::vector<std::string>& vals) {
            args.overrides.emplace_back(path, vals.back());
            return true;
          },
          "override config key " + path)
          ->expected(1);
    }
  }
}

ExperimentConfig resolve(const CommonArgs& args) {
  std::optional<std::filesystem::path> file;
  if (args.config_file) file = *args.config_file;
  return sleepnet::resolve_config(file, args.overrides);
}

std::string self_exe_path() {
  char buf[4096];
  const ssize_t n = readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n <= 0) return "";
  buf[n] = '\0';
  return buf;
}

int run_command(const CommonArgs& args, const std::string& cell_p, const std::string& cell_rem,
                const std::string& cell_seed) {
  const ExperimentConfig cfg = resolve(args);
  Cell cell;
  if (!cell_p.empty() || !cell_rem.empty() || !cell_seed.empty()) {
    if (cell_p.empty() || cell_rem.empty() || cell_seed.empty()) {
      throw ConfigError("--cell-p, --cell-rem and --cell-seed must be given together");
    }
    cell.p = std::stod(cell_p);
    if (cell.p < 0.0 || cell.p >= 1.0) throw ConfigError("--cell-p must lie in [0,1)");
    if (cell_rem != "on" && cell_rem != "off") throw ConfigError("--cell-rem must be on or off");
    cell.rem = cell_rem == "on";
    cell.seed = std::stoull(cell_seed);
  } else {
    const auto cells = sleepnet::plan_cells(cfg);
    if (cells.size() != 1) {
      throw ConfigError("the sweep grid holds " + std::to_string(cells.size()) +
                        " cells; pick one with --cell-p/--cell-rem/--cell-seed or use `sweep`");
    }
    cell = cells.front();
  }
  const auto env = sleepnet::build_env<float>(cfg);
  sleepnet::run_cell(env, cfg, cell);
  std::cout << "cell " << sleepnet::cell_dirname(cell) << " complete under "
            << (std::filesystem::path(cfg.output_dir) / cfg.fingerprint()).string() << "\n";
  return 0;
}

int sweep_command(const CommonArgs& args, bool force) {
  const ExperimentConfig cfg = resolve(args);
  const auto outcome = sleepnet::run_sweep<float>(cfg, force, self_exe_path());
  for (const auto& status : outcome.cells) {
    std::cout << sleepnet::cell_dirname(status.cell) << ": " << status.status << "\n";
  }
  std::cout << outcome.executed << " executed, " << outcome.skipped << " skipped, "
            << outcome.failed << " failed; summary under "
            << (std::filesystem::path(cfg.output_dir) / cfg.fingerprint() / "summary").string()
            << "\n";
  return outcome.failed == 0 ? 0 : 3;
}

int report_command(const std::string& results, const std::string& out_file) {
  const std::string report = sleepnet::make_report(results);
  std::cout << report;
  const std::filesystem::path out = out_file.empty()
                                        ? std::filesystem::path(results) / "report.md"
                                        : std::filesystem::path(out_file);
  std::ofstream f(out, std::ios::trunc);
  f << report;
  std::cout << "report written to " << out.string() << "\n";
  return 0;
}

int pretrain_command(const CommonArgs& args) {
  const ExperimentConfig cfg = resolve(args);
  if (cfg.pretrain_path.empty()) {
    throw ConfigError("pretrain.path is not set");
  }
  const std::size_t channels = cfg.pretrain_variant == "idx" ? cfg.dataset_channels : 3;
  const auto data = sleepnet::load_dataset_root(cfg.pretrain_variant, cfg.pretrain_path, channels);
  const auto norm = sleepnet::compute_normalization(data.train);
  sleepnet::PretrainConfig pc;
  pc.iterations = cfg.pretrain_iterations;
  pc.batch = cfg.pretrain_batch;
  pc.lr = cfg.pretrain_lr;
  pc.seed = cfg.seeds.front();
  sleepnet::PretrainResult result;
  auto fe = sleepnet::pretrain_extractor<float>(data, norm, cfg.conv_channels, pc, &result);
  sleepnet::save_extractor(cfg.pretrain_out, fe);
  std::cout << "extractor trained (" << fe.layer_count() << " conv layers, feature length "
            << fe.feature_len() << "), test accuracy "
            << sleepnet::format_number(result.test_accuracy) << ", saved to " << cfg.pretrain_out
            << "\n";
  return 0;
}

int gradcheck_command(std::size_t seeds) {
  const auto checks = sleepnet::run_gradcheck_suite(seeds);
  bool all_pass = true;
  for (const auto& c : checks) {
    std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << "  (" << c.checked
              << " coords, max rel err " << sleepnet::format_number(c.max_rel_err) << ")\n";
    all_pass = all_pass && c.pass;
  }
  std::cout << (all_pass ? "gradient check passed" : "gradient check FAILED") << "\n";
  return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual-learning benchmark: veridical + generative feature replay with "
               "per-task synaptic downscaling"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, pretrain_args;
  std::string cell_p, cell_rem, cell_seed;
  bool force = false;
  std::string results_dir, report_out;
  std::size_t gradcheck_seeds = 10;

  CLI::App* run = app.add_subcommand("run", "train one (p, rem, seed) cell");
  add_config_options(run, run_args);
  run->add_option("--cell-p", cell_p, "downscale fraction of the cell");
  run->add_option("--cell-rem", cell_rem, "generative replay: on or off");
  run->add_option("--cell-seed", cell_seed, "seed of the cell");

  CLI::App* sweep = app.add_subcommand("sweep", "run the full sweep grid and aggregate");
  add_config_options(sweep, sweep_args);
  sweep->add_flag("--force", force, "re-run cells that already completed");

  CLI::App* report = app.add_subcommand("report", "summarize a sweep directory");
  report->add_option("--results", results_dir, "path to out/<fingerprint>")->required();
  report->add_option("--out", report_out, "write the report here instead of <results>/report.md");

  CLI::App* pretrain = app.add_subcommand("pretrain", "train and freeze the conv feature extractor");
  add_config_options(pretrain, pretrain_args);

  CLI::App* gradcheck = app.add_subcommand("grad-check", "finite-difference gradient audit");
  gradcheck->add_option("--seeds", gradcheck_seeds, "number of random seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return run_command(run_args, cell_p, cell_rem, cell_seed);
    if (sweep->parsed()) return sweep_command(sweep_args, force);
    if (report->parsed()) return report_command(results_dir, report_out);
    if (pretrain->parsed()) return pretrain_command(pretrain_args);
    if (gradcheck->parsed()) return gradcheck_command(gradcheck_seeds);
  } catch (const sleepnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const sleepnet::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
