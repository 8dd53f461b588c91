#ifndef FBL_HARNESS_HPP
#define FBL_HARNESS_HPP

#include "fbl/types.hpp"

#include <json.hpp>

#include <fstream>

namespace fbl::harness {

// Full experiment description. Defaults follow the reference protocol where
// it pins a value (trade-offs, monitor threshold, client counts, selection
// width, local epochs); everything else is desk-scale plumbing.
struct ExperimentConfig {
  std::string schedule = "4-1x3";
  int grid_h = 16;
  int grid_w = 16;
  int channels = 3;
  int samples_per_class = 12;
  int test_samples_per_class = 4;

  int initial_clients = 10;
  int new_clients_per_task = 4;
  double stale_fraction = 0.25;   // share of surviving clients idled per task
  double class_fraction = 0.5;
  double sample_fraction = 0.6;

  int clients_per_round = 4;
  int local_epochs = 6;
  int rounds_per_task = 10;
  int base_rounds = 0;  // rounds for the first task; 0 means rounds_per_task
  int batch_size = 8;

  double lr_base = 1e-2;
  double lr_incremental = 1e-3;
  double lambda1 = 0.5;
  double lambda2 = 0.0005;
  double tau = 0.6;
  bool normalized_entropy = false;

  double init_weight_scale = 1.0;
  double head_init_scale = 0.01;
  double const_prob_threshold = 0.9;

  std::vector<int> hidden = {8, 16};
  std::string aggregation = "samples";  // or "uniform"
  std::string method = "fbl";  // fbl | finetune | fbl-no-apl | fbl-no-fsc | fbl-no-frc
  std::uint64_t seed = 1;
};

ExperimentConfig parse_config_json(const nlohmann::json& j);
ExperimentConfig parse_config(const std::string& path);
nlohmann::json effective_config_json(const ExperimentConfig& cfg);

// JSON-lines run log. Level 0 silences everything, 1 keeps round/epoch/
// transition records, 2 adds per-batch and per-client entropy records.
class RunLogger {
 public:
  RunLogger(const std::string& path, int verbosity);
  void write(int level, const nlohmann::json& record);
  int verbosity() const { return verbosity_; }

 private:
  std::ofstream out_;
  int verbosity_;
};

int log_verbosity_from_env();

// Runs the experiment described by cfg, writing effective-config.json,
// run_log.jsonl, metrics.csv, result.json and per-task checkpoints into
// out_dir. Returns 0 on success, nonzero with a diagnostic on stderr.
int run(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace fbl::harness

#endif  // FBL_HARNESS_HPP
