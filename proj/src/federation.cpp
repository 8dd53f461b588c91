#include "fbl/federation.hpp"

#include "fbl/losses.hpp"
#include "fbl/pseudo_label.hpp"

#include <algorithm>
#include <cmath>

namespace fbl::fed {

using nlohmann::json;

int ClientState::local_old_classes() const {
  int n = 0;
  for (std::size_t i = 0; i + 1 < label_history.size(); ++i) {
    n += static_cast<int>(label_history[i].size());
  }
  return n;
}

int ClientState::local_new_classes() const {
  return label_history.empty() ? 0 : static_cast<int>(label_history.back().size());
}

std::vector<int> Server::select_clients(const std::vector<int>& eligible, int count,
                                        std::uint64_t seed) {
  if (count < 1 || count > static_cast<int>(eligible.size())) {
    throw ConfigError("Server::select_clients: cannot select " + std::to_string(count) +
                      " of " + std::to_string(eligible.size()) + " eligible clients");
  }
  std::vector<int> ids = eligible;
  Rng rng(mix_seed(seed, 0x5e1ec7));
  shuffle_inplace(ids, rng);
  ids.resize(static_cast<std::size_t>(count));
  std::sort(ids.begin(), ids.end());
  if (audit_) {
    audit_->calls.push_back({"select_clients", ids, {}, false});
  }
  return ids;
}

namespace {

// Indices ordered lexicographically by vector content, then weight. Matched
// permutations of (model, weight) pairs then accumulate in the same order and
// aggregate bit-identically.
std::vector<std::size_t> canonical_order(const std::vector<Vector>& models,
                                         const std::vector<Scalar>& weights) {
  std::vector<std::size_t> order(models.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Vector& x = models[a];
    const Vector& y = models[b];
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x[i] != y[i]) return x[i] < y[i];
    }
    return weights[a] < weights[b];
  });
  return order;
}

bool all_identical(const std::vector<Vector>& models) {
  for (std::size_t i = 1; i < models.size(); ++i) {
    if (models[i] != models[0]) return false;
  }
  return true;
}

}  // namespace

Vector Server::aggregate(const std::vector<Vector>& models,
                         const std::vector<Scalar>& weights) const {
  if (models.empty() || models.size() != weights.size()) {
    throw ShapeError("Server::aggregate: models and weights misaligned");
  }
  Scalar total = 0;
  for (Scalar w : weights) {
    if (w < 0) throw ConfigError("Server::aggregate: negative weight");
    total += w;
  }
  if (total <= 0) throw ConfigError("Server::aggregate: weights sum to zero");
  for (const Vector& m : models) {
    if (m.size() != models[0].size()) {
      throw ShapeError("Server::aggregate: parameter vector length mismatch");
    }
  }
  if (audit_) {
    ServerAudit::Call call{"aggregate", {}, {}, true};
    for (const Vector& m : models) call.vector_lengths.push_back(m.size());
    audit_->calls.push_back(std::move(call));
  }
  // The mean of identical vectors is that vector; returning it directly keeps
  // the idempotence invariant exact under floating point.
  if (all_identical(models)) return models[0];
  Vector out = Vector::Zero(models[0].size());
  for (std::size_t i : canonical_order(models, weights)) {
    out += weights[i] * models[i];
  }
  return out / total;
}

Vector Server::aggregate(const std::vector<Vector>& models) const {
  if (models.empty()) throw ShapeError("Server::aggregate: no models");
  for (const Vector& m : models) {
    if (m.size() != models[0].size()) {
      throw ShapeError("Server::aggregate: parameter vector length mismatch");
    }
  }
  if (audit_) {
    ServerAudit::Call call{"aggregate_uniform", {}, {}, false};
    for (const Vector& m : models) call.vector_lengths.push_back(m.size());
    audit_->calls.push_back(std::move(call));
  }
  if (all_identical(models)) return models[0];
  const std::vector<Scalar> unit(models.size(), Scalar(1));
  Vector out = Vector::Zero(models[0].size());
  for (std::size_t i : canonical_order(models, unit)) out += models[i];
  return out / static_cast<Scalar>(models.size());
}

std::vector<ClientState> evolve_clients(int task_index, std::vector<ClientState> prev,
                                        const harness::ExperimentConfig& cfg,
                                        std::uint64_t seed) {
  if (task_index < 1) throw ConfigError("evolve_clients: task index must be >= 1");
  Rng rng(mix_seed(seed, 0xc11e47));

  if (task_index == 1) {
    std::vector<ClientState> clients(static_cast<std::size_t>(cfg.initial_clients));
    for (int i = 0; i < cfg.initial_clients; ++i) {
      clients[static_cast<std::size_t>(i)].id = i;
      clients[static_cast<std::size_t>(i)].group = Group::kContinuing;
    }
    return clients;
  }

  // Survivors are re-dealt between the idle and continuing groups each task.
  std::vector<int> order(prev.size());
  for (std::size_t i = 0; i < prev.size(); ++i) order[i] = static_cast<int>(i);
  shuffle_inplace(order, rng);
  const int stale =
      static_cast<int>(std::floor(cfg.stale_fraction * static_cast<double>(prev.size())));
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    ClientState& c = prev[static_cast<std::size_t>(order[pos])];
    c.group = pos < static_cast<std::size_t>(stale) ? Group::kStale : Group::kContinuing;
    c.shard.reset();
  }

  int next_id = 0;
  for (const ClientState& c : prev) next_id = std::max(next_id, c.id + 1);
  for (int i = 0; i < cfg.new_clients_per_task; ++i) {
    ClientState c;
    c.id = next_id++;
    c.group = Group::kNew;
    prev.push_back(std::move(c));
  }
  return prev;
}

Simulation::Simulation(const harness::ExperimentConfig& cfg,
                       harness::RunLogger* logger, ServerAudit* audit)
    : cfg_(cfg), logger_(logger), server_(audit) {
  schedule_ = synth::parse_schedule(cfg.schedule);

  synth::DatasetConfig data_cfg;
  data_cfg.num_classes = schedule_.total_classes();
  data_cfg.height = cfg.grid_h;
  data_cfg.width = cfg.grid_w;
  data_cfg.channels = cfg.channels;
  data_cfg.samples_per_class = cfg.samples_per_class;
  data_cfg.seed = mix_seed(cfg.seed, 0xDA7A);
  dataset_ = synth::generate_dataset(data_cfg);

  data_cfg.samples_per_class = cfg.test_samples_per_class;
  data_cfg.seed = mix_seed(cfg.seed, 0x7E57);
  test_set_ = synth::generate_dataset(data_cfg);

  net::ShapeSpec shape;
  shape.in_channels = cfg.channels;
  shape.kernel = 3;
  shape.hidden = cfg.hidden;
  shape.classes_per_task = {static_cast<int>(schedule_.tasks[0].new_classes.size())};
  global_ = net::init_network(shape, cfg.init_weight_scale, mix_seed(cfg.seed, 0x1217));
}

void Simulation::begin_task(int task_index) {
  if (task_index < 1 || task_index > num_tasks()) {
    throw ConfigError("Simulation::begin_task: task index out of schedule");
  }
  if (task_index != current_task_ + 1) {
    throw ProtocolError("Simulation::begin_task: tasks must run in order");
  }
  current_task_ = task_index;
  const synth::TaskSpec& task = schedule_.tasks[static_cast<std::size_t>(task_index - 1)];

  if (task_index >= 2) {
    global_ = net::extend_head(global_, static_cast<int>(task.new_classes.size()),
                               cfg_.head_init_scale,
                               mix_seed(cfg_.seed, 0x6e3d, task_index));
  }

  clients_ = evolve_clients(task_index, std::move(clients_), cfg_,
                            mix_seed(cfg_.seed, 0xe70e, task_index));

  std::vector<int> data_client_ids;
  for (const ClientState& c : clients_) {
    if (c.group != Group::kStale) data_client_ids.push_back(c.id);
  }

  const std::vector<int> pool_idx = synth::select_task_pool(dataset_, task.new_classes);
  std::vector<synth::Sample> pool;
  pool.reserve(pool_idx.size());
  for (int i : pool_idx) pool.push_back(dataset_[static_cast<std::size_t>(i)]);

  std::vector<synth::ClientShard> shards = synth::partition_non_iid(
      pool, data_client_ids, task_index, task.new_classes, cfg_.class_fraction,
      cfg_.sample_fraction, schedule_.total_classes(),
      mix_seed(cfg_.seed, 0x4a57, task_index));

  for (synth::ClientShard& shard : shards) {
    for (ClientState& c : clients_) {
      if (c.id != shard.client_id) continue;
      c.label_history.push_back(shard.label_space);
      c.shard = std::move(shard);
      break;
    }
  }

  if (logger_) {
    json rec{{"type", "task"},
             {"task", task_index},
             {"new_classes", task.new_classes},
             {"clients", clients_.size()},
             {"head_outputs", global_.num_outputs()}};
    logger_->write(1, rec);
  }
}

RoundRecord Simulation::run_round() {
  if (current_task_ < 1) throw ProtocolError("Simulation::run_round: no active task");
  ++round_;
  RoundRecord rec;
  rec.round = round_;
  rec.task = current_task_;

  const net::NetworkParams broadcast = global_;

  // Every data-holding client tracks its entropy trail and checks for a
  // transition locally; the retained previous broadcast becomes the old model
  // the moment a rise fires.
  for (ClientState& c : clients_) {
    if (!c.shard || c.shard->samples.empty()) {
      c.monitor.last_broadcast = broadcast;
      continue;
    }
    const Scalar entropy =
        monitor::average_entropy(broadcast, c.shard->samples, cfg_.normalized_entropy);
    const Scalar previous = c.monitor.history.records.empty()
                                ? Scalar(0)
                                : c.monitor.history.records.back().value;
    if (monitor::observe_entropy(c.monitor, round_, entropy, cfg_.tau)) {
      rec.transitions.push_back({round_, c.id, c.monitor.task_estimate, entropy, previous});
      if (logger_) {
        logger_->write(1, json{{"type", "transition"},
                               {"round", round_},
                               {"client", c.id},
                               {"estimate", c.monitor.task_estimate},
                               {"entropy", entropy},
                               {"previous", previous}});
      }
    }
    if (logger_) {
      logger_->write(2, json{{"type", "entropy"},
                             {"round", round_},
                             {"client", c.id},
                             {"value", entropy}});
    }
    c.monitor.last_broadcast = broadcast;
  }

  std::vector<int> eligible;
  for (const ClientState& c : clients_) {
    if (c.group != Group::kStale && c.shard && !c.shard->samples.empty()) {
      eligible.push_back(c.id);
    }
  }
  rec.selected = server_.select_clients(eligible, cfg_.clients_per_round,
                                        mix_seed(cfg_.seed, 0x3e1e, round_));

  std::vector<Vector> updated;
  std::vector<Scalar> weights;
  for (int id : rec.selected) {
    auto it = std::find_if(clients_.begin(), clients_.end(),
                           [id](const ClientState& c) { return c.id == id; });
    ClientState& c = *it;
    net::NetworkParams local = broadcast;
    ClientRoundStats stats;
    stats.id = id;
    stats.samples = static_cast<long>(c.shard->samples.size());
    train_client(c, local, stats);
    ++c.rounds_participated;
    updated.push_back(net::flatten(local));
    weights.push_back(static_cast<Scalar>(stats.samples));
    rec.client_stats.push_back(stats);
  }

  const Vector merged = cfg_.aggregation == "uniform"
                            ? server_.aggregate(updated)
                            : server_.aggregate(updated, weights);
  global_ = net::unflatten(merged, global_.shape);
  rec.model_hash = hex64(hash_vector(merged));

  if (logger_) {
    json stats_json = json::array();
    for (const ClientRoundStats& s : rec.client_stats) {
      stats_json.push_back(json{{"id", s.id},
                                {"samples", s.samples},
                                {"objective", s.objective},
                                {"seg", s.weighted_seg},
                                {"relation", s.relation},
                                {"pod", s.pod}});
    }
    logger_->write(1, json{{"type", "round"},
                           {"round", round_},
                           {"task", current_task_},
                           {"selected", rec.selected},
                           {"model_hash", rec.model_hash},
                           {"clients", stats_json}});
  }
  return rec;
}

void Simulation::train_client(ClientState& c, net::NetworkParams& local,
                              ClientRoundStats& stats) {
  const std::vector<synth::Sample>& samples = c.shard->samples;
  const bool incremental =
      cfg_.method != "finetune" && c.monitor.task_estimate >= 2;
  if (incremental && !c.monitor.old_model) {
    throw ProtocolError("train_client: task estimate advanced without an old model");
  }
  // The learning-rate schedule follows the experiment's task plan (base task
  // vs increments); what the client infers locally only drives the losses.
  const Scalar lr = current_task_ == 1 ? cfg_.lr_base : cfg_.lr_incremental;

  losses::ObjectiveOptions opt;
  opt.lambda1 = cfg_.method == "fbl-no-frc" ? 0.0 : cfg_.lambda1;
  opt.lambda2 = cfg_.lambda2;
  opt.reweight = cfg_.method != "fbl-no-fsc";
  opt.labels = cfg_.method == "fbl-no-apl" ? losses::LabelSource::kPseudoConstProb
                                           : losses::LabelSource::kPseudoAdaptive;
  opt.const_prob_threshold = cfg_.const_prob_threshold;
  opt.local_old_classes = c.local_old_classes();
  opt.local_new_classes = c.local_new_classes();

  std::vector<int> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(mix_seed(cfg_.seed, 0x7a11, static_cast<std::uint64_t>(c.id), round_));

  Scalar total_sum = 0, seg_sum = 0, rel_sum = 0, pod_sum = 0;
  long batches = 0;

  for (int epoch = 0; epoch < cfg_.local_epochs; ++epoch) {
    std::optional<pseudo::ThresholdTable> thresholds;
    double rho = 0;
    if (incremental && opt.labels == losses::LabelSource::kPseudoAdaptive) {
      rho = pseudo::rho_schedule(c.monitor.epochs_in_task);
      thresholds =
          pseudo::compute_thresholds(samples, *c.monitor.old_model, local, rho);
    }

    shuffle_inplace(order, rng);
    long kept = 0, pseudo_old = 0, background = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg_.batch_size)) {
      std::vector<const synth::Sample*> batch;
      for (std::size_t i = start;
           i < std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
           ++i) {
        batch.push_back(&samples[static_cast<std::size_t>(order[i])]);
      }

      losses::BatchObjective obj =
          incremental
              ? losses::BatchObjective::incremental(
                    batch, local, *c.monitor.old_model,
                    thresholds ? &*thresholds : nullptr, opt)
              : losses::BatchObjective::plain(batch, local);

      const Vector grad = obj.gradient();
      local = net::unflatten(net::flatten(local) - lr * grad, local.shape);

      const losses::BatchObjective::Parts parts = obj.parts();
      total_sum += parts.total;
      seg_sum += parts.weighted_seg;
      rel_sum += parts.relation;
      pod_sum += parts.pod;
      ++batches;
      for (const IntVector& prov : obj.provenance()) {
        for (Eigen::Index j = 0; j < prov.size(); ++j) {
          if (prov[j] == static_cast<int>(pseudo::Provenance::kKeptLabel)) ++kept;
          else if (prov[j] == static_cast<int>(pseudo::Provenance::kPseudoOld)) ++pseudo_old;
          else ++background;
        }
      }

      if (logger_ && logger_->verbosity() >= 2) {
        logger_->write(2, json{{"type", "batch"},
                               {"round", round_},
                               {"client", c.id},
                               {"epoch", epoch},
                               {"seg", parts.weighted_seg},
                               {"relation", parts.relation},
                               {"pod", parts.pod},
                               {"total", parts.total}});
      }
    }

    if (logger_ && incremental) {
      json gammas = json::object();
      if (thresholds) {
        for (int k = 1; k <= thresholds->num_old_classes(); ++k) {
          if (thresholds->at(k)) gammas[std::to_string(k)] = *thresholds->at(k);
        }
      }
      logger_->write(1, json{{"type", "epoch"},
                             {"round", round_},
                             {"client", c.id},
                             {"epoch", epoch},
                             {"rho", rho},
                             {"thresholds", gammas},
                             {"provenance",
                              json{{"kept", kept},
                                   {"pseudo_old", pseudo_old},
                                   {"background", background}}}});
    }
    ++c.monitor.epochs_in_task;
  }

  if (batches > 0) {
    stats.objective = total_sum / static_cast<Scalar>(batches);
    stats.weighted_seg = seg_sum / static_cast<Scalar>(batches);
    stats.relation = rel_sum / static_cast<Scalar>(batches);
    stats.pod = pod_sum / static_cast<Scalar>(batches);
  }
}

metrics::ConfusionMatrix Simulation::evaluate() const {
  const int total = schedule_.total_classes();
  const int max_class = global_.num_outputs() - 1;
  metrics::ConfusionMatrix cm(total + 1);
  for (const synth::Sample& s : test_set_) {
    const net::ForwardTrace t = net::forward(global_, s.image, s.height, s.width);
    IntVector pred(t.probs.rows());
    for (Eigen::Index j = 0; j < t.probs.rows(); ++j) {
      Eigen::Index k = 0;
      t.probs.row(j).maxCoeff(&k);
      pred[j] = static_cast<int>(k);
    }
    cm.accumulate_capped(s.gt_label, pred, max_class);
  }
  return cm;
}

ExperimentResult run_experiment(const harness::ExperimentConfig& cfg,
                                harness::RunLogger* logger, ServerAudit* audit,
                                const TaskCallback& on_task_end) {
  Simulation sim(cfg, logger, audit);
  ExperimentResult result;

  for (int t = 1; t <= sim.num_tasks(); ++t) {
    sim.begin_task(t);
    const int rounds =
        (t == 1 && cfg.base_rounds > 0) ? cfg.base_rounds : cfg.rounds_per_task;
    for (int r = 0; r < rounds; ++r) sim.run_round();

    const metrics::ConfusionMatrix cm = sim.evaluate();
    TaskResult task_result;
    task_result.task = t;
    for (int k = 0; k <= sim.schedule().total_classes(); ++k) {
      task_result.class_iou.push_back(cm.iou(k));
    }
    task_result.miou = cm.miou();
    result.tasks.push_back(task_result);
    if (on_task_end) on_task_end(t, sim.global_model());
  }

  const TaskResult& final_task = result.tasks.back();
  result.final_miou = final_task.miou;

  // Old classes: everything introduced before the last task.
  std::vector<int> old_classes;
  for (int t = 0; t + 1 < sim.num_tasks(); ++t) {
    for (int k : sim.schedule().tasks[static_cast<std::size_t>(t)].new_classes) {
      old_classes.push_back(k);
    }
  }
  if (!old_classes.empty()) {
    double sum = 0;
    int present = 0;
    for (int k : old_classes) {
      if (final_task.class_iou[static_cast<std::size_t>(k)]) {
        sum += *final_task.class_iou[static_cast<std::size_t>(k)];
        ++present;
      }
    }
    if (present > 0) result.final_old_class_iou = sum / present;
  }
  return result;
}

}  // namespace fbl::fed
