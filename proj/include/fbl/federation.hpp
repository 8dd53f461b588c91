#ifndef FBL_FEDERATION_HPP
#define FBL_FEDERATION_HPP

#include "fbl/harness.hpp"
#include "fbl/metrics.hpp"
#include "fbl/monitor.hpp"
#include "fbl/network.hpp"
#include "fbl/synth_data.hpp"
#include "fbl/types.hpp"

#include <functional>

namespace fbl::fed {

// Client categories per task: idle clients keeping only experience, clients
// continuing with fresh data, and newly joined clients.
enum class Group { kStale, kContinuing, kNew };

struct ClientState {
  int id = 0;
  Group group = Group::kContinuing;
  std::optional<synth::ClientShard> shard;
  std::vector<std::vector<int>> label_history;  // own label space per own task
  monitor::TransitionState monitor;
  int rounds_participated = 0;

  // Class counts from the client's own task history.
  int local_old_classes() const;
  int local_new_classes() const;
};

struct TransitionEvent {
  int round = 0;
  int client_id = 0;
  int new_estimate = 0;
  Scalar entropy = 0;
  Scalar previous_entropy = 0;
};

struct ClientRoundStats {
  int id = 0;
  long samples = 0;
  Scalar objective = 0;
  Scalar weighted_seg = 0;
  Scalar relation = 0;
  Scalar pod = 0;
};

struct RoundRecord {
  int round = 0;
  int task = 0;
  std::vector<int> selected;
  std::string model_hash;
  std::vector<ClientRoundStats> client_stats;
  std::vector<TransitionEvent> transitions;
};

// Records every interaction crossing the server boundary; used to check that
// nothing but client ids and flat parameter vectors ever reaches the server.
struct ServerAudit {
  struct Call {
    std::string op;
    std::vector<int> client_ids;
    std::vector<long> vector_lengths;
    bool carried_weights = false;
  };
  std::vector<Call> calls;
};

// The whole server: samples client ids and averages flat parameter vectors.
class Server {
 public:
  explicit Server(ServerAudit* audit = nullptr) : audit_(audit) {}

  std::vector<int> select_clients(const std::vector<int>& eligible, int count,
                                  std::uint64_t seed);

  // Weighted arithmetic mean of equally long vectors.
  Vector aggregate(const std::vector<Vector>& models,
                   const std::vector<Scalar>& weights) const;
  // Uniform mean.
  Vector aggregate(const std::vector<Vector>& models) const;

 private:
  ServerAudit* audit_;
};

// Task-to-task client evolution: the first task starts initial_clients
// continuing clients; each later task adds new ones and idles a random share
// of the survivors.
std::vector<ClientState> evolve_clients(int task_index,
                                        std::vector<ClientState> prev,
                                        const harness::ExperimentConfig& cfg,
                                        std::uint64_t seed);

// Drives one experiment: data generation, task scheduling, rounds, local
// training and aggregation. Deterministic given the config.
class Simulation {
 public:
  Simulation(const harness::ExperimentConfig& cfg, harness::RunLogger* logger = nullptr,
             ServerAudit* audit = nullptr);

  int num_tasks() const { return static_cast<int>(schedule_.tasks.size()); }
  int current_task() const { return current_task_; }
  int current_round() const { return round_; }

  void begin_task(int task_index);
  RoundRecord run_round();

  const net::NetworkParams& global_model() const { return global_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const std::vector<synth::Sample>& test_set() const { return test_set_; }
  const synth::TaskSchedule& schedule() const { return schedule_; }

  // Evaluates the current global model on the fully labeled test set,
  // ignoring pixels of classes the head cannot predict yet.
  metrics::ConfusionMatrix evaluate() const;

 private:
  void train_client(ClientState& client, net::NetworkParams& local,
                    ClientRoundStats& stats);

  harness::ExperimentConfig cfg_;
  harness::RunLogger* logger_;
  synth::TaskSchedule schedule_;
  std::vector<synth::Sample> dataset_;
  std::vector<synth::Sample> test_set_;
  net::NetworkParams global_;
  std::vector<ClientState> clients_;
  Server server_;
  int current_task_ = 0;
  int round_ = 0;
};

struct TaskResult {
  int task = 0;
  std::vector<std::optional<double>> class_iou;  // index = class id
  double miou = 0;
};

struct ExperimentResult {
  std::vector<TaskResult> tasks;
  double final_miou = 0;
  // Mean final IoU over the classes introduced before the last task.
  std::optional<double> final_old_class_iou;
};

using TaskCallback = std::function<void(int task, const net::NetworkParams&)>;

ExperimentResult run_experiment(const harness::ExperimentConfig& cfg,
                                harness::RunLogger* logger = nullptr,
                                ServerAudit* audit = nullptr,
                                const TaskCallback& on_task_end = {});

}  // namespace fbl::fed

#endif  // FBL_FEDERATION_HPP
