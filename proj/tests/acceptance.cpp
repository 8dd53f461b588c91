// Acceptance suite: one pass/fail line per criterion, exit code 0 only when
// every checked criterion holds. Run with --criterion N to check one.

#include "fbl/federation.hpp"
#include "fbl/harness.hpp"
#include "fbl/losses.hpp"
#include "fbl/metrics.hpp"
#include "fbl/monitor.hpp"
#include "fbl/network.hpp"
#include "fbl/pseudo_label.hpp"
#include "fbl/synth_data.hpp"

#include "test_util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace fbl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(int criterion, bool pass, const std::string& what,
            const std::string& detail = "") {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": "
            << what;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
}

// ---------------------------------------------------------------------------
// Shared desk-scale benchmark configs.
// ---------------------------------------------------------------------------

harness::ExperimentConfig forgetting_benchmark(const std::string& method,
                                               std::uint64_t seed) {
  harness::ExperimentConfig cfg;
  cfg.schedule = "4-1x3";
  cfg.grid_h = 16;
  cfg.grid_w = 16;
  cfg.channels = 3;
  cfg.samples_per_class = 12;
  cfg.test_samples_per_class = 4;
  cfg.initial_clients = 10;
  cfg.new_clients_per_task = 4;
  cfg.stale_fraction = 0.25;
  cfg.class_fraction = 0.5;
  cfg.sample_fraction = 0.6;
  cfg.clients_per_round = 4;
  cfg.local_epochs = 6;
  cfg.rounds_per_task = 10;
  cfg.batch_size = 8;
  cfg.lr_base = 2e-3;
  cfg.lr_incremental = 5e-4;
  cfg.lambda1 = 0.5;
  cfg.lambda2 = 0.0005;
  cfg.tau = 0.6;
  cfg.head_init_scale = 0.3;
  cfg.aggregation = "uniform";
  cfg.method = method;
  cfg.seed = seed;
  return cfg;
}

// Monitor fidelity run: full-batch local steps and near-full participation
// keep the entropy trail free of sampling noise, so the only rises left are
// the genuine new-class arrivals the monitor is supposed to flag.
harness::ExperimentConfig monitor_benchmark(std::uint64_t seed) {
  harness::ExperimentConfig cfg = forgetting_benchmark("fbl", seed);
  cfg.schedule = "4-1x2";
  cfg.rounds_per_task = 8;
  cfg.clients_per_round = 10;
  cfg.batch_size = 64;
  cfg.lr_base = 5e-4;
  cfg.lr_incremental = 2e-4;
  return cfg;
}

// Cached criterion-9 runs, shared with criteria 10 and 11.
struct BenchmarkOutcome {
  std::map<std::string, std::vector<fed::ExperimentResult>> by_method;
  fed::ServerAudit audit;
  double seconds = 0;
};

const BenchmarkOutcome& benchmark_outcome() {
  static BenchmarkOutcome outcome = [] {
    BenchmarkOutcome out;
    const auto start = Clock::now();
    const std::vector<std::string> methods = {"fbl", "finetune", "fbl-no-apl",
                                              "fbl-no-fsc", "fbl-no-frc"};
    for (const std::string& method : methods) {
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        out.by_method[method].push_back(
            fed::run_experiment(forgetting_benchmark(method, seed), nullptr, &out.audit));
      }
    }
    out.seconds = seconds_since(start);
    return out;
  }();
  return outcome;
}

double seed_mean(const std::vector<fed::ExperimentResult>& runs,
                 const std::function<double(const fed::ExperimentResult&)>& pick) {
  double sum = 0;
  for (const auto& r : runs) sum += pick(r);
  return sum / static_cast<double>(runs.size());
}

// ---------------------------------------------------------------------------
// Criterion 1: analytic gradients vs central finite differences.
// ---------------------------------------------------------------------------

bool criterion_1() {
  const auto start = Clock::now();
  Rng rng(2024);

  // 6x6x3 image, 3 foreground classes split 2+1 across two tasks.
  const test::ToyIncrementalSetup setup = test::toy_incremental(3, 2, 1, 404);
  std::vector<synth::Sample> data;
  for (int i = 0; i < 2; ++i) {
    synth::Sample s = test::random_sample(6, 6, 3, 3, rng);
    for (Eigen::Index j = 0; j < s.train_label.size(); ++j) {
      s.train_label[j] = s.train_label[j] == 3 ? 3 : 0;  // background shift view
    }
    data.push_back(std::move(s));
  }
  const std::vector<const synth::Sample*> batch{&data[0], &data[1]};
  const pseudo::ThresholdTable thresholds =
      pseudo::compute_thresholds(data, setup.old_model, setup.current, 0.6);

  losses::ObjectiveOptions base;
  base.local_old_classes = 2;
  base.local_new_classes = 1;

  struct Case {
    const char* name;
    losses::BatchObjective objective;
  };
  std::vector<Case> cases;

  cases.push_back({"seg_loss", losses::BatchObjective::plain(batch, setup.current)});

  losses::ObjectiveOptions fs = base;
  fs.lambda1 = 0;
  fs.lambda2 = 0;
  cases.push_back({"fs_loss", losses::BatchObjective::incremental(
                                  batch, setup.current, setup.old_model, &thresholds, fs)});

  losses::ObjectiveOptions fr = base;
  fr.include_seg = false;
  fr.lambda1 = 1.0;
  fr.lambda2 = 0;
  cases.push_back({"fr_loss", losses::BatchObjective::incremental(
                                  batch, setup.current, setup.old_model, &thresholds, fr)});

  losses::ObjectiveOptions pod = base;
  pod.include_seg = false;
  pod.lambda1 = 0;
  pod.lambda2 = 1.0;
  cases.push_back({"pod_loss", losses::BatchObjective::incremental(
                                   batch, setup.current, setup.old_model, &thresholds, pod)});

  losses::ObjectiveOptions total = base;
  total.lambda1 = 0.5;
  total.lambda2 = 0.0005;
  cases.push_back({"total_objective",
                   losses::BatchObjective::incremental(batch, setup.current,
                                                       setup.old_model, &thresholds, total)});

  bool pass = true;
  std::ostringstream detail;
  for (const Case& c : cases) {
    const Vector analytic = c.objective.gradient();
    const Vector fd = test::finite_difference(
        [&](const net::NetworkParams& q) { return c.objective.value(q); },
        setup.current, 1e-4);
    const Scalar err = test::max_rel_error(analytic, fd);
    detail << c.name << " err=" << err << "  ";
    pass &= err < 1e-3;
  }
  const double elapsed = seconds_since(start);
  pass &= elapsed < 10.0;
  detail << "elapsed=" << elapsed << "s";
  report(1, pass, "gradients of all losses match finite differences", detail.str());
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 2: threshold selection equals an independent brute-force oracle.
// ---------------------------------------------------------------------------

bool criterion_2() {
  Rng rng(77);
  bool pass = true;
  for (int trial = 0; trial < 30 && pass; ++trial) {
    const int old_outputs = 2 + uniform_index(rng, 4);   // <= 5 channels
    const int cur_outputs = old_outputs + 1 + uniform_index(rng, 2);
    const int pixels = 20 + uniform_index(rng, 181);     // <= 200 pixels
    const int samples = 1 + uniform_index(rng, 3);

    std::vector<Matrix> old_probs, cur_probs;
    for (int s = 0; s < samples; ++s) {
      old_probs.push_back(test::random_prob_map(pixels, old_outputs, rng));
      cur_probs.push_back(test::random_prob_map(pixels, cur_outputs, rng));
    }

    for (double rho : {0.2, 0.5, 0.8, 1.0}) {
      const pseudo::ThresholdTable table =
          pseudo::compute_thresholds_from_maps(old_probs, cur_probs, rho);

      // Brute-force oracle with its own entropy, argmax and quantile logic.
      for (int k = 1; k < old_outputs; ++k) {
        std::vector<Scalar> pool;
        for (int s = 0; s < samples; ++s) {
          for (int j = 0; j < pixels; ++j) {
            int arg = 0;
            for (int c = 1; c < old_outputs; ++c) {
              if (old_probs[static_cast<std::size_t>(s)](j, c) >
                  old_probs[static_cast<std::size_t>(s)](j, arg)) {
                arg = c;
              }
            }
            if (arg != k) continue;
            Scalar h = 0;
            for (int c = 0; c < cur_outputs; ++c) {
              const Scalar p = cur_probs[static_cast<std::size_t>(s)](j, c);
              h -= p * std::log(std::max(p, kProbFloor));
            }
            pool.push_back(h);
          }
        }
        const auto& got = table.gamma[static_cast<std::size_t>(k)];
        if (pool.empty()) {
          pass &= !got.has_value();
          continue;
        }
        std::sort(pool.begin(), pool.end());
        std::size_t idx = static_cast<std::size_t>(pool.size() * rho);
        if (idx >= pool.size()) idx = pool.size() - 1;
        pass &= got.has_value() && *got == pool[idx];
      }
    }
  }
  report(2, pass, "class thresholds match the brute-force sort-and-index oracle");
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 3: pseudo-label three-branch semantics, boundary included.
// ---------------------------------------------------------------------------

bool criterion_3() {
  Rng rng(99);
  bool pass = true;
  bool saw_boundary = false, saw_absent = false, saw_kept = false, saw_pseudo = false;

  for (int trial = 0; trial < 200 && pass; ++trial) {
    const int old_outputs = 3;
    const int cur_outputs = 5;
    const int pixels = 40;
    const Matrix old_probs = test::random_prob_map(pixels, old_outputs, rng);
    const Matrix cur = test::random_prob_map(pixels, cur_outputs, rng);
    const Vector h = entropy_rows(cur);

    IntVector train(pixels);
    for (int j = 0; j < pixels; ++j) {
      train[j] = uniform_unit(rng) < 0.3 ? 3 + uniform_index(rng, 2) : 0;
    }

    // Random thresholds; sometimes pinned exactly to a pixel entropy to hit
    // the boundary, sometimes removed entirely.
    pseudo::ThresholdTable table;
    table.gamma.resize(3);
    for (int k = 1; k <= 2; ++k) {
      const double coin = uniform_unit(rng);
      if (coin < 0.25) {
        table.gamma[static_cast<std::size_t>(k)] = std::nullopt;
      } else if (coin < 0.5) {
        table.gamma[static_cast<std::size_t>(k)] = h[uniform_index(rng, pixels)];
      } else {
        table.gamma[static_cast<std::size_t>(k)] = uniform_range(rng, 0.5, 1.7);
      }
    }

    const pseudo::PseudoLabelMap out =
        pseudo::generate_pseudo_labels(train, old_probs, cur, table);

    for (int j = 0; j < pixels && pass; ++j) {
      if (train[j] != 0) {
        pass &= out.labels[j] == train[j];
        saw_kept = true;
        continue;
      }
      int arg = 0;
      for (int c = 1; c < old_outputs; ++c) {
        if (old_probs(j, c) > old_probs(j, arg)) arg = c;
      }
      if (arg == 0) {
        pass &= out.labels[j] == 0;
        continue;
      }
      const auto& gamma = table.gamma[static_cast<std::size_t>(arg)];
      if (!gamma.has_value()) {
        pass &= out.labels[j] == 0;
        saw_absent = true;
      } else if (h[j] <= *gamma) {
        pass &= out.labels[j] == arg;
        saw_pseudo = true;
        if (h[j] == *gamma) saw_boundary = true;
      } else {
        pass &= out.labels[j] == 0;
      }
    }
  }
  pass &= saw_boundary && saw_absent && saw_kept && saw_pseudo;
  report(3, pass, "pseudo-label branches are exhaustive, boundary selected",
         saw_boundary ? "boundary case exercised" : "boundary case missing");
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 4: reweighted CE degeneracy, normalization, scale invariance.
// ---------------------------------------------------------------------------

bool criterion_4() {
  bool pass = true;
  const ClassTaskMap map = ClassTaskMap::from_counts({2, 1});
  Rng rng(11);

  // Constant per-group scalars: the reweighted loss equals the plain loss.
  {
    const int hw = 30;
    IntVector labels(hw);
    Matrix probs(hw, 4);
    for (int j = 0; j < hw; ++j) {
      labels[j] = j % 4;
      const Scalar own = labels[j] == 0 ? 0.7 : (labels[j] == 3 ? 0.5 : 0.6);
      for (int c = 0; c < 4; ++c) probs(j, c) = (1 - own) / 3;
      probs(j, labels[j]) = own;
    }
    const std::vector<Vector> scalars{losses::adaptive_scalars(probs, labels, 2, 2, 1)};
    const std::vector<IntVector> lab{labels};
    const losses::GradientStats stats = losses::gradient_means(scalars, lab, map);
    const Scalar fs = losses::balanced_seg_loss({probs}, lab, scalars, stats, map);
    const Scalar seg = losses::segmentation_loss({probs}, lab);
    pass &= std::abs(fs - seg) < 1e-9;
  }

  // Random scalars: per-group mean weight 1, invariance under rescaling.
  for (int trial = 0; trial < 20 && pass; ++trial) {
    const int hw = 60;
    IntVector labels(hw);
    Vector scalars(hw);
    for (int j = 0; j < hw; ++j) {
      labels[j] = uniform_index(rng, 4);
      scalars[j] = 0.05 + uniform_unit(rng);
    }
    const losses::GradientStats stats = losses::gradient_means({scalars}, {labels}, map);
    const Vector w = losses::balanced_weights(scalars, labels, stats, map);

    std::map<int, std::pair<Scalar, long>> group_sums;
    for (int j = 0; j < hw; ++j) {
      const int group = labels[j] == 0 ? 0 : map.task_of(labels[j]);
      group_sums[group].first += w[j];
      group_sums[group].second += 1;
    }
    for (const auto& [group, sum_count] : group_sums) {
      pass &= std::abs(sum_count.first / sum_count.second - 1.0) < 1e-9;
    }

    for (Scalar c : {0.1, 10.0}) {
      const Vector scaled = c * scalars;
      const losses::GradientStats stats2 =
          losses::gradient_means({scaled}, {labels}, map);
      const Vector w2 = losses::balanced_weights(scaled, labels, stats2, map);
      pass &= test::max_rel_error(w2, w) < 1e-9;
    }
  }
  report(4, pass, "weight degeneracy, per-group normalization and rescale invariance");
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 5: relation-loss identities and the hand-computed KL value.
// ---------------------------------------------------------------------------

bool criterion_5() {
  bool pass = true;
  const ClassTaskMap map = ClassTaskMap::from_counts({2});
  losses::GradientStats stats;
  stats.task_means.resize(1);
  stats.task_counts.assign(1, 0);
  stats.class_means.resize(3);
  stats.class_counts.assign(3, 0);

  losses::RelationshipPrototypes protos;
  protos.total_outputs = 2;
  losses::ClassPrototype p;
  p.prob_mean = Vector(2);
  p.prob_mean << 0.5, 0.5;
  p.label_mean = Vector(2);
  p.label_mean << 0.9, 0.1;
  p.count = 1;
  protos.by_class[1] = p;

  const Scalar hand = losses::relation_loss(protos, stats, map);
  pass &= std::abs(hand - 0.255413) < 1e-6;

  protos.by_class[1].label_mean = protos.by_class[1].prob_mean;
  pass &= losses::relation_loss(protos, stats, map) == 0.0;

  Rng rng(123);
  for (int trial = 0; trial < 100 && pass; ++trial) {
    losses::RelationshipPrototypes random_protos;
    random_protos.total_outputs = 4;
    for (int k = 1; k <= 2; ++k) {
      losses::ClassPrototype proto;
      proto.prob_mean = test::random_prob_map(1, 4, rng).row(0).transpose();
      proto.label_mean = test::random_prob_map(1, 4, rng).row(0).transpose();
      proto.count = 1 + uniform_index(rng, 5);
      random_protos.by_class[k] = proto;
    }
    pass &= losses::relation_loss(random_protos, stats, map) >= 0.0;
  }
  report(5, pass, "relation loss: zero at equality, nonnegative, 0.255413 hand case");
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 6: the selection proportion schedule.
// ---------------------------------------------------------------------------

bool criterion_6() {
  bool pass = true;
  const double expected[] = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  for (int e = 0; e < 7; ++e) {
    pass &= std::abs(pseudo::rho_schedule(e) - expected[e]) < 1e-12;
  }
  for (int e = 7; e < 30; ++e) pass &= pseudo::rho_schedule(e) == 0.8;
  report(6, pass, "selection proportion runs 0.2 to the 0.8 cap in 0.1 steps");
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 7: monitor fidelity on a scripted 3-task run.
// ---------------------------------------------------------------------------

bool criterion_7() {
  const auto start = Clock::now();
  bool pass = true;
  std::ostringstream detail;
  int total_fn = 0, max_fp = 0;

  for (std::uint64_t seed = 1; seed <= 5 && pass; ++seed) {
    const harness::ExperimentConfig cfg = monitor_benchmark(seed);
    fed::Simulation sim(cfg);
    const int rounds = cfg.rounds_per_task;

    std::map<int, Vector> broadcast_by_round;
    std::map<int, int> fp_per_task;
    for (int t = 1; t <= sim.num_tasks(); ++t) {
      sim.begin_task(t);
      // New data reaches the clients at the first round of the task; the
      // monitor may confirm on that round's entropy or on the next one, once
      // the fitting of the new classes has begun to show.
      const int boundary = (t - 1) * rounds + 1;

      std::set<int> eligible;
      if (t >= 2) {
        for (const auto& c : sim.clients()) {
          if (c.shard && !c.monitor.history.records.empty()) eligible.insert(c.id);
        }
      }

      std::set<int> detected_at_boundary;
      for (int r = 0; r < rounds; ++r) {
        const int round_index = sim.current_round() + 1;
        broadcast_by_round[round_index] = net::flatten(sim.global_model());
        const fed::RoundRecord rec = sim.run_round();

        for (const fed::TransitionEvent& ev : rec.transitions) {
          const bool in_window =
              t >= 2 && (rec.round == boundary || rec.round == boundary + 1);
          if (in_window) {
            detected_at_boundary.insert(ev.client_id);
            // Snapshot must equal the previous round's broadcast bit for bit.
            const auto it = std::find_if(
                sim.clients().begin(), sim.clients().end(),
                [&](const fed::ClientState& c) { return c.id == ev.client_id; });
            const Vector snapshot = net::flatten(*it->monitor.old_model);
            pass &= snapshot == broadcast_by_round[rec.round - 1];
          } else {
            ++fp_per_task[(rec.round - 1) / rounds + 1];
          }
        }
      }

      for (int id : eligible) {
        if (!detected_at_boundary.count(id)) {
          ++total_fn;
          pass = false;
        }
      }
    }
    for (const auto& [task, fp] : fp_per_task) {
      max_fp = std::max(max_fp, fp);
      if (fp > 1) pass = false;
    }
  }

  const double elapsed = seconds_since(start);
  pass &= elapsed < 300.0;
  detail << "false_negatives=" << total_fn << " worst_fp_per_task=" << max_fp
         << " elapsed=" << elapsed << "s";
  report(7, pass, "transitions detected at every boundary, snapshots bit-identical",
         detail.str());
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 8: aggregation algebra, exact.
// ---------------------------------------------------------------------------

bool criterion_8() {
  bool pass = true;
  fed::Server server;

  Vector a(1), b(1);
  a << 0.0;
  b << 3.0;
  pass &= server.aggregate({a, b}, {1.0, 2.0})[0] == 2.0;

  Rng rng(5);
  Vector m(20);
  for (int i = 0; i < 20; ++i) m[i] = uniform_unit(rng);
  pass &= server.aggregate({m, m, m}, {0.3, 0.5, 0.2}) == m;

  Vector x = m, y = (2 * m).eval(), z = (0.25 * m).eval();
  pass &= server.aggregate({x, y, z}, {1, 2, 3}) == server.aggregate({z, y, x}, {3, 2, 1});
  report(8, pass, "aggregation is idempotent, permutation invariant and exact");
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 9: directional forgetting and ablation ordering.
// ---------------------------------------------------------------------------

bool criterion_9() {
  const BenchmarkOutcome& outcome = benchmark_outcome();
  bool pass = true;
  std::ostringstream detail;

  const auto old_iou = [](const fed::ExperimentResult& r) {
    return r.final_old_class_iou.value_or(0.0);
  };
  const auto miou = [](const fed::ExperimentResult& r) { return r.final_miou; };

  const double fbl_old = seed_mean(outcome.by_method.at("fbl"), old_iou);
  const double ft_old = seed_mean(outcome.by_method.at("finetune"), old_iou);
  const double margin = (fbl_old - ft_old) * 100.0;
  pass &= margin >= 10.0;
  detail << "old-IoU fbl=" << fbl_old * 100 << " finetune=" << ft_old * 100
         << " margin=" << margin << "pts";

  const double fbl_miou = seed_mean(outcome.by_method.at("fbl"), miou);
  for (const std::string& ablation : {"fbl-no-apl", "fbl-no-fsc", "fbl-no-frc"}) {
    const double abl = seed_mean(outcome.by_method.at(ablation), miou);
    detail << "  " << ablation << "=" << abl * 100;
    pass &= abl < fbl_miou;
  }
  detail << "  fbl-miou=" << fbl_miou * 100;
  pass &= outcome.seconds < 1800.0;
  detail << "  elapsed=" << outcome.seconds << "s";
  report(9, pass, "full method beats fine-tuning by >= 10 old-class IoU points "
                  "and every ablation scores below it",
         detail.str());
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 10: byte-identical metrics on re-run.
// ---------------------------------------------------------------------------

bool criterion_10() {
  namespace fs = std::filesystem;
  const harness::ExperimentConfig cfg = forgetting_benchmark("fbl", 1);
  const std::string out_a = (fs::temp_directory_path() / "fbl_acc_det_a").string();
  const std::string out_b = (fs::temp_directory_path() / "fbl_acc_det_b").string();
  fs::remove_all(out_a);
  fs::remove_all(out_b);

  bool pass = harness::run(cfg, out_a) == 0 && harness::run(cfg, out_b) == 0;
  if (pass) {
    const auto slurp = [](const std::string& p) {
      std::ifstream in(p, std::ios::binary);
      std::ostringstream os;
      os << in.rdbuf();
      return os.str();
    };
    const std::string csv_a = slurp(out_a + "/metrics.csv");
    pass = !csv_a.empty() && csv_a == slurp(out_b + "/metrics.csv");
  }
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  report(10, pass, "identical config and seed reproduce metrics.csv byte for byte");
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 11: the server saw nothing but client ids and parameter vectors.
// ---------------------------------------------------------------------------

bool criterion_11() {
  const BenchmarkOutcome& outcome = benchmark_outcome();
  bool pass = !outcome.audit.calls.empty();
  long selects = 0, aggregates = 0;
  for (const auto& call : outcome.audit.calls) {
    if (call.op == "select_clients") {
      ++selects;
      pass &= call.vector_lengths.empty();
    } else if (call.op == "aggregate_uniform") {
      ++aggregates;
      pass &= call.client_ids.empty() && !call.carried_weights;
    } else {
      pass = false;  // nothing else may cross the server boundary
    }
  }
  std::ostringstream detail;
  detail << selects << " selections, " << aggregates << " aggregations audited";
  report(11, pass, "server boundary carried only client ids and parameter vectors",
         detail.str());
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0) only = std::atoi(argv[i + 1]);
  }

  const std::vector<std::pair<int, bool (*)()>> criteria = {
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4},
      {5, criterion_5}, {6, criterion_6}, {7, criterion_7}, {8, criterion_8},
      {9, criterion_9}, {10, criterion_10}, {11, criterion_11}};

  bool all = true;
  for (const auto& [num, fn] : criteria) {
    if (only != 0 && num != only) continue;
    try {
      all &= fn();
    } catch (const std::exception& e) {
      report(num, false, std::string("exception: ") + e.what());
      all = false;
    }
  }
  return all ? 0 : 1;
}
