#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sleepnet/common.hpp"

namespace sleepnet {

// Documented defaults for a named architecture preset. "desk" is the small
// profile used by the test suites; "full" is the paper-scale profile.
inline nlohmann::json default_config(const std::string& preset) {
  using nlohmann::json;
  json cfg;
  cfg["dataset"] = {{"variant", "idx"}, {"path", ""}, {"channels", 1}};
  cfg["model"] = {{"preset", preset},
                  {"extractor", "identity"},
                  {"extractor_path", ""},
                  {"feature_len", 256},
                  {"hidden", 400},
                  {"latent", 32},
                  {"conv_channels", json::array({16, 32, 64, 128, 256})}};
  cfg["tasks"] = {{"count", 5}, {"classes_per_task", 2}, {"shuffle_classes", false}, {"class_seed", 0}};
  cfg["train"] = {{"iterations", 500},
                  {"batch", 32},
                  {"lr", 1e-3},
                  {"beta1", 0.9},
                  {"beta2", 0.999},
                  {"eps", 1e-8},
                  {"temperature", 2.0},
                  {"snapshot_before_downscale", true}};
  cfg["replay"] = {{"mode", "continuous"}, {"pool_size", 2048}};
  cfg["eval"] = {{"cadence", 50}, {"test_subsample", 64}};
  cfg["sweep"] = {{"p_values", json::array({0.0})},
                  {"rem", json::array({true})},
                  {"seeds", json::array({1})},
                  {"jobs", 1}};
  cfg["pretrain"] = {{"variant", "cifar10"}, {"path", ""}, {"iterations", 2000},
                     {"batch", 64},          {"lr", 1e-3},  {"out", "extractor.bin"}};
  cfg["output"] = {{"dir", "out"}};

  if (preset == "full") {
    cfg["dataset"]["variant"] = "cifar100";
    cfg["dataset"]["channels"] = 3;
    cfg["model"]["extractor"] = "conv";
    cfg["model"]["feature_len"] = 1024;
    cfg["model"]["hidden"] = 2000;
    cfg["model"]["latent"] = 100;
    cfg["tasks"]["count"] = 10;
    cfg["tasks"]["classes_per_task"] = 10;
    cfg["train"]["iterations"] = 10000;
    cfg["train"]["batch"] = 256;
    cfg["train"]["lr"] = 1e-4;
    cfg["eval"]["cadence"] = 250;
    cfg["eval"]["test_subsample"] = 0;
  } else if (preset != "desk") {
    throw ConfigError("unknown model preset '" + preset + "'");
  }
  return cfg;
}

namespace detail {

inline bool same_kind(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) return true;
  if (a.is_array() && b.is_array()) return true;
  return a.type() == b.type();
}

inline void merge_strict(nlohmann::json& base, const nlohmann::json& overlay,
                         const std::string& prefix) {
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    nlohmann::json& slot = base[key];
    if (slot.is_object()) {
      if (!value.is_object()) throw ConfigError("config key '" + path + "' must be a section");
      merge_strict(slot, value, path);
    } else {
      if (!same_kind(slot, value)) {
        throw ConfigError("config key '" + path + "' has type " + std::string(value.type_name()) +
                          ", expected " + std::string(slot.type_name()));
      }
      slot = value;
    }
  }
}

}  // namespace detail

// Fully resolved experiment configuration plus its canonical JSON form.
struct ExperimentConfig {
  nlohmann::json raw;

  std::string dataset_variant, dataset_path;
  std::size_t dataset_channels = 1;

  std::string preset, extractor_kind, extractor_path;
  std::size_t feature_len = 0, hidden = 0, latent = 0;
  std::vector<std::size_t> conv_channels;

  std::size_t task_count = 0, classes_per_task = 0;
  bool shuffle_classes = false;
  std::uint64_t class_seed = 0;

  std::size_t iterations = 0, batch = 0;
  double lr = 0, beta1 = 0, beta2 = 0, eps = 0, temperature = 0;
  bool snapshot_before_downscale = true;

  std::string replay_mode;
  std::size_t replay_pool = 0;

  std::size_t eval_cadence = 0, eval_subsample = 0;

  std::vector<double> p_values;
  std::vector<bool> rem_values;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;

  std::string pretrain_variant, pretrain_path, pretrain_out;
  std::size_t pretrain_iterations = 0, pretrain_batch = 0;
  double pretrain_lr = 0;

  std::string output_dir;

  static ExperimentConfig from_json(nlohmann::json j) {
    ExperimentConfig c;
    c.dataset_variant = j.at("dataset").at("variant").get<std::string>();
    c.dataset_path = j.at("dataset").at("path").get<std::string>();
    c.dataset_channels = j.at("dataset").at("channels").get<std::size_t>();
    c.preset = j.at("model").at("preset").get<std::string>();
    c.extractor_kind = j.at("model").at("extractor").get<std::string>();
    c.extractor_path = j.at("model").at("extractor_path").get<std::string>();
    c.feature_len = j.at("model").at("feature_len").get<std::size_t>();
    c.hidden = j.at("model").at("hidden").get<std::size_t>();
    c.latent = j.at("model").at("latent").get<std::size_t>();
    c.conv_channels = j.at("model").at("conv_channels").get<std::vector<std::size_t>>();
    c.task_count = j.at("tasks").at("count").get<std::size_t>();
    c.classes_per_task = j.at("tasks").at("classes_per_task").get<std::size_t>();
    c.shuffle_classes = j.at("tasks").at("shuffle_classes").get<bool>();
    c.class_seed = j.at("tasks").at("class_seed").get<std::uint64_t>();
    c.iterations = j.at("train").at("iterations").get<std::size_t>();
    c.batch = j.at("train").at("batch").get<std::size_t>();
    c.lr = j.at("train").at("lr").get<double>();
    c.beta1 = j.at("train").at("beta1").get<double>();
    c.beta2 = j.at("train").at("beta2").get<double>();
    c.eps = j.at("train").at("eps").get<double>();
    c.temperature = j.at("train").at("temperature").get<double>();
    c.snapshot_before_downscale = j.at("train").at("snapshot_before_downscale").get<bool>();
    c.replay_mode = j.at("replay").at("mode").get<std::string>();
    c.replay_pool = j.at("replay").at("pool_size").get<std::size_t>();
    c.eval_cadence = j.at("eval").at("cadence").get<std::size_t>();
    c.eval_subsample = j.at("eval").at("test_subsample").get<std::size_t>();
    c.p_values = j.at("sweep").at("p_values").get<std::vector<double>>();
    c.rem_values = j.at("sweep").at("rem").get<std::vector<bool>>();
    c.seeds = j.at("sweep").at("seeds").get<std::vector<std::uint64_t>>();
    c.jobs = j.at("sweep").at("jobs").get<std::size_t>();
    c.pretrain_variant = j.at("pretrain").at("variant").get<std::string>();
    c.pretrain_path = j.at("pretrain").at("path").get<std::string>();
    c.pretrain_out = j.at("pretrain").at("out").get<std::string>();
    c.pretrain_iterations = j.at("pretrain").at("iterations").get<std::size_t>();
    c.pretrain_batch = j.at("pretrain").at("batch").get<std::size_t>();
    c.pretrain_lr = j.at("pretrain").at("lr").get<double>();
    c.output_dir = j.at("output").at("dir").get<std::string>();
    c.raw = std::move(j);
    c.validate();
    return c;
  }

  void validate() const {
    if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
    if (batch < 1) throw ConfigError("train.batch must be >= 1");
    if (!(temperature > 0)) throw ConfigError("train.temperature must be > 0");
    if (task_count < 1 || classes_per_task < 1) {
      throw ConfigError("tasks.count and tasks.classes_per_task must be >= 1");
    }
    if (eval_cadence < 1) throw ConfigError("eval.cadence must be >= 1");
    if (p_values.empty() || rem_values.empty() || seeds.empty()) {
      throw ConfigError("sweep.p_values, sweep.rem and sweep.seeds must be non-empty");
    }
    for (const double p : p_values) {
      if (p < 0.0 || p >= 1.0) {
        throw ConfigError("sweep.p_values entries must lie in [0,1), got " + format_number(p));
      }
    }
    if (replay_mode != "continuous" && replay_mode != "pooled") {
      throw ConfigError("replay.mode must be 'continuous' or 'pooled'");
    }
    if (extractor_kind != "identity" && extractor_kind != "conv") {
      throw ConfigError("model.extractor must be 'identity' or 'conv'");
    }
    if (jobs < 1) throw ConfigError("sweep.jobs must be >= 1");
  }

  // Stable hash of the resolved experiment identity. The output directory and
  // job count do not affect results, so they are excluded.
  std::string fingerprint() const {
    nlohmann::json j = raw;
    j.erase("output");
    j["sweep"].erase("jobs");
    return to_hex(fnv1a64(j.dump()));
  }
};

// Precedence: CLI overrides > config file > preset defaults. Overrides are
// dotted leaf paths; values parse as JSON literals, falling back to strings.
inline ExperimentConfig resolve_config(
    const std::optional<std::filesystem::path>& file,
    const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  nlohmann::json file_json = nlohmann::json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    try {
      file_json = nlohmann::json::parse(in, nullptr, true, true);  // allow comments
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + file->string() + " does not parse: " + e.what());
    }
    if (file_json.is_null()) file_json = nlohmann::json::object();
    if (!file_json.is_object()) {
      throw ConfigError("config file " + file->string() + " must hold a JSON object");
    }
  }

  // The preset decides the defaults the rest merges into.
  std::string preset = "desk";
  if (file_json.contains("model") && file_json["model"].contains("preset")) {
    preset = file_json["model"]["preset"].get<std::string>();
  }
  for (const auto& [key, value] : overrides) {
    if (key == "model.preset") preset = value;
  }

  nlohmann::json cfg = default_config(preset);
  detail::merge_strict(cfg, file_json, "");

  for (const auto& [key, value] : overrides) {
    nlohmann::json* slot = &cfg;
    std::size_t start = 0;
    std::string path;
    while (true) {
      const std::size_t dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
      path = path.empty() ? part : path + "." + part;
      if (!slot->contains(part)) throw ConfigError("unknown config key '" + key + "'");
      slot = &(*slot)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (slot->is_object()) throw ConfigError("config key '" + key + "' is a section, not a leaf");
    nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;
    if (!detail::same_kind(*slot, parsed)) {
      throw ConfigError("override '" + key + "' has type " + std::string(parsed.type_name()) +
                        ", expected " + std::string(slot->type_name()));
    }
    *slot = parsed;
  }

  // Environment fallback for the dataset root.
  if (cfg["dataset"]["path"].get<std::string>().empty()) {
    if (const char* env = std::getenv("SLEEPNET_DATA_ROOT")) cfg["dataset"]["path"] = env;
  }

  return ExperimentConfig::from_json(std::move(cfg));
}

// Atomic write; sweep cells in sibling processes may refresh the same echo
// while another child is reading it.
inline void echo_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  const std::filesystem::path tmp =
      path.parent_path() / (path.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("cannot write resolved config to " + tmp.string());
    out << cfg.raw.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace sleepnet
