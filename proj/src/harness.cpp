#include "fbl/harness.hpp"

#include "fbl/federation.hpp"
#include "fbl/metrics.hpp"
#include "fbl/network.hpp"
#include "fbl/synth_data.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

namespace fbl::harness {
namespace {

using nlohmann::json;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "schedule",        "grid",
      "channels",        "samples_per_class",
      "test_samples_per_class",
      "initial_clients", "new_clients_per_task",
      "stale_fraction",  "class_fraction",
      "sample_fraction", "clients_per_round",
      "local_epochs",    "rounds_per_task",
      "base_rounds",
      "batch_size",      "lr_base",
      "lr_incremental",  "lambda1",
      "lambda2",         "tau",
      "normalized_entropy",
      "init_weight_scale",
      "head_init_scale", "const_prob_threshold",
      "hidden",          "aggregation",
      "method",          "seed"};
  return keys;
}

const std::set<std::string>& known_methods() {
  static const std::set<std::string> methods = {"fbl", "finetune", "fbl-no-apl",
                                                "fbl-no-fsc", "fbl-no-frc"};
  return methods;
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void require_positive(int v, const char* key) {
  if (v < 1) throw ConfigError(std::string("config key '") + key + "' must be >= 1");
}

void require_fraction(double v, const char* key, bool allow_zero) {
  if (v > 1 || v < 0 || (!allow_zero && v == 0)) {
    throw ConfigError(std::string("config key '") + key + "' must be in " +
                      (allow_zero ? "[0, 1]" : "(0, 1]"));
  }
}

}  // namespace

ExperimentConfig parse_config_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known_keys().count(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  ExperimentConfig cfg;
  read_field(j, "schedule", cfg.schedule);
  if (j.contains("grid")) {
    const auto grid = j.at("grid").get<std::vector<int>>();
    if (grid.size() != 2) throw ConfigError("config key 'grid' must be [height, width]");
    cfg.grid_h = grid[0];
    cfg.grid_w = grid[1];
  }
  read_field(j, "channels", cfg.channels);
  read_field(j, "samples_per_class", cfg.samples_per_class);
  read_field(j, "test_samples_per_class", cfg.test_samples_per_class);
  read_field(j, "initial_clients", cfg.initial_clients);
  read_field(j, "new_clients_per_task", cfg.new_clients_per_task);
  read_field(j, "stale_fraction", cfg.stale_fraction);
  read_field(j, "class_fraction", cfg.class_fraction);
  read_field(j, "sample_fraction", cfg.sample_fraction);
  read_field(j, "clients_per_round", cfg.clients_per_round);
  read_field(j, "local_epochs", cfg.local_epochs);
  read_field(j, "rounds_per_task", cfg.rounds_per_task);
  read_field(j, "base_rounds", cfg.base_rounds);
  read_field(j, "batch_size", cfg.batch_size);
  read_field(j, "lr_base", cfg.lr_base);
  read_field(j, "lr_incremental", cfg.lr_incremental);
  read_field(j, "lambda1", cfg.lambda1);
  read_field(j, "lambda2", cfg.lambda2);
  read_field(j, "tau", cfg.tau);
  read_field(j, "normalized_entropy", cfg.normalized_entropy);
  read_field(j, "init_weight_scale", cfg.init_weight_scale);
  read_field(j, "head_init_scale", cfg.head_init_scale);
  read_field(j, "const_prob_threshold", cfg.const_prob_threshold);
  read_field(j, "hidden", cfg.hidden);
  read_field(j, "aggregation", cfg.aggregation);
  read_field(j, "method", cfg.method);
  read_field(j, "seed", cfg.seed);

  synth::parse_schedule(cfg.schedule);  // validates the format
  if (cfg.grid_h < 8 || cfg.grid_w < 8) throw ConfigError("config key 'grid' must be at least 8x8");
  require_positive(cfg.channels, "channels");
  require_positive(cfg.samples_per_class, "samples_per_class");
  require_positive(cfg.test_samples_per_class, "test_samples_per_class");
  require_positive(cfg.initial_clients, "initial_clients");
  if (cfg.new_clients_per_task < 0) {
    throw ConfigError("config key 'new_clients_per_task' must be >= 0");
  }
  require_fraction(cfg.stale_fraction, "stale_fraction", true);
  require_fraction(cfg.class_fraction, "class_fraction", false);
  require_fraction(cfg.sample_fraction, "sample_fraction", false);
  require_positive(cfg.clients_per_round, "clients_per_round");
  if (cfg.local_epochs < 0) throw ConfigError("config key 'local_epochs' must be >= 0");
  require_positive(cfg.rounds_per_task, "rounds_per_task");
  if (cfg.base_rounds < 0) throw ConfigError("config key 'base_rounds' must be >= 0");
  require_positive(cfg.batch_size, "batch_size");
  if (cfg.lr_base <= 0 || cfg.lr_incremental <= 0) {
    throw ConfigError("config keys 'lr_base'/'lr_incremental' must be > 0");
  }
  if (cfg.lambda1 < 0) throw ConfigError("config key 'lambda1' must be >= 0");
  if (cfg.lambda2 < 0) throw ConfigError("config key 'lambda2' must be >= 0");
  if (cfg.tau <= 0) throw ConfigError("config key 'tau' must be > 0");
  if (cfg.init_weight_scale <= 0) {
    throw ConfigError("config key 'init_weight_scale' must be > 0");
  }
  if (cfg.head_init_scale < 0) {
    throw ConfigError("config key 'head_init_scale' must be >= 0");
  }
  require_fraction(cfg.const_prob_threshold, "const_prob_threshold", false);
  if (cfg.hidden.size() != 2 || cfg.hidden[0] < 1 || cfg.hidden[1] < 1) {
    throw ConfigError("config key 'hidden' must list two positive layer widths");
  }
  if (cfg.aggregation != "samples" && cfg.aggregation != "uniform") {
    throw ConfigError("config key 'aggregation' must be 'samples' or 'uniform'");
  }
  if (!known_methods().count(cfg.method)) {
    throw ConfigError("config key 'method' must be one of fbl, finetune, "
                      "fbl-no-apl, fbl-no-fsc, fbl-no-frc");
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config_json(j);
}

json effective_config_json(const ExperimentConfig& cfg) {
  return json{{"schedule", cfg.schedule},
              {"grid", {cfg.grid_h, cfg.grid_w}},
              {"channels", cfg.channels},
              {"samples_per_class", cfg.samples_per_class},
              {"test_samples_per_class", cfg.test_samples_per_class},
              {"initial_clients", cfg.initial_clients},
              {"new_clients_per_task", cfg.new_clients_per_task},
              {"stale_fraction", cfg.stale_fraction},
              {"class_fraction", cfg.class_fraction},
              {"sample_fraction", cfg.sample_fraction},
              {"clients_per_round", cfg.clients_per_round},
              {"local_epochs", cfg.local_epochs},
              {"rounds_per_task", cfg.rounds_per_task},
              {"base_rounds", cfg.base_rounds},
              {"batch_size", cfg.batch_size},
              {"lr_base", cfg.lr_base},
              {"lr_incremental", cfg.lr_incremental},
              {"lambda1", cfg.lambda1},
              {"lambda2", cfg.lambda2},
              {"tau", cfg.tau},
              {"normalized_entropy", cfg.normalized_entropy},
              {"init_weight_scale", cfg.init_weight_scale},
              {"head_init_scale", cfg.head_init_scale},
              {"const_prob_threshold", cfg.const_prob_threshold},
              {"hidden", cfg.hidden},
              {"aggregation", cfg.aggregation},
              {"method", cfg.method},
              {"seed", cfg.seed}};
}

RunLogger::RunLogger(const std::string& path, int verbosity) : verbosity_(verbosity) {
  if (verbosity_ > 0) {
    out_.open(path);
    if (!out_) throw DataError("RunLogger: cannot open '" + path + "'");
  }
}

void RunLogger::write(int level, const json& record) {
  if (level > verbosity_ || !out_.is_open()) return;
  out_ << record.dump() << "\n";
}

int log_verbosity_from_env() {
  const char* env = std::getenv("FBL_LOG_LEVEL");
  if (!env) return 1;
  const int v = std::atoi(env);
  return v < 0 ? 0 : (v > 2 ? 2 : v);
}

int run(const ExperimentConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  try {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
      std::cerr << "error: cannot create output directory '" << out_dir << "'\n";
      return 1;
    }

    {
      std::ofstream cfg_out(out_dir + "/effective-config.json");
      if (!cfg_out) {
        std::cerr << "error: cannot write effective config in '" << out_dir << "'\n";
        return 1;
      }
      cfg_out << effective_config_json(cfg).dump(2) << "\n";
    }

    RunLogger logger(out_dir + "/run_log.jsonl", log_verbosity_from_env());
    const fed::ExperimentResult result = fed::run_experiment(
        cfg, &logger, nullptr, [&](int task, const net::NetworkParams& params) {
          net::save_checkpoint(out_dir + "/checkpoint_task_" + std::to_string(task) + ".bin",
                               params);
        });

    // Metrics CSV is assembled in memory first so a failed run leaves no
    // partial file behind.
    std::ostringstream csv;
    metrics::write_csv_header(csv);
    for (const fed::TaskResult& tr : result.tasks) {
      char buf[64];
      for (int k = 0; k < static_cast<int>(tr.class_iou.size()); ++k) {
        if (tr.class_iou[static_cast<std::size_t>(k)]) {
          std::snprintf(buf, sizeof(buf), "%d,%d,%.6f\n", tr.task, k,
                        *tr.class_iou[static_cast<std::size_t>(k)]);
          csv << buf;
        }
      }
      std::snprintf(buf, sizeof(buf), "%d,miou,%.6f\n", tr.task, tr.miou);
      csv << buf;
    }
    {
      std::ofstream csv_out(out_dir + "/metrics.csv");
      if (!csv_out) {
        std::cerr << "error: cannot write metrics.csv in '" << out_dir << "'\n";
        return 1;
      }
      csv_out << csv.str();
    }

    json result_json;
    result_json["final_miou"] = result.final_miou;
    if (result.final_old_class_iou) {
      result_json["final_old_class_iou"] = *result.final_old_class_iou;
    }
    result_json["tasks"] = json::array();
    for (const fed::TaskResult& tr : result.tasks) {
      json per_class = json::object();
      for (int k = 0; k < static_cast<int>(tr.class_iou.size()); ++k) {
        if (tr.class_iou[static_cast<std::size_t>(k)]) {
          per_class[std::to_string(k)] = *tr.class_iou[static_cast<std::size_t>(k)];
        }
      }
      result_json["tasks"].push_back(
          json{{"task", tr.task}, {"miou", tr.miou}, {"class_iou", per_class}});
    }
    std::ofstream result_out(out_dir + "/result.json");
    if (!result_out) {
      std::cerr << "error: cannot write result.json in '" << out_dir << "'\n";
      return 1;
    }
    result_out << result_json.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fbl::harness
