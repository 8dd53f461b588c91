#include "fbl/synth_data.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <set>

using namespace fbl;
using namespace fbl::synth;

namespace {

bool samples_equal(const Sample& a, const Sample& b) {
  return a.height == b.height && a.width == b.width && a.image == b.image &&
         a.gt_label == b.gt_label && a.train_label == b.train_label;
}

}  // namespace

TEST_SUITE("synth_data") {

TEST_CASE("identical seed gives bit-identical datasets") {
  const auto a = generate_dataset(4, {16, 16}, 3, 7);
  const auto b = generate_dataset(4, {16, 16}, 3, 7);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(samples_equal(a[i], b[i]));
}

TEST_CASE("single class is rejected") {
  CHECK_THROWS_AS(generate_dataset(1, {16, 16}, 3, 7), ConfigError);
  CHECK_THROWS_AS(generate_dataset(4, {4, 16}, 3, 7), ConfigError);
}

TEST_CASE("every class appears in at least samples_per_class images") {
  const int spc = 10;
  const auto data = generate_dataset(4, {16, 16}, spc, 3);
  std::vector<int> occurrences(5, 0);
  for (const Sample& s : data) {
    std::set<int> present;
    for (Eigen::Index j = 0; j < s.gt_label.size(); ++j) present.insert(s.gt_label[j]);
    for (int k : present) {
      if (k >= 1) ++occurrences[static_cast<std::size_t>(k)];
    }
  }
  for (int k = 1; k <= 4; ++k) CHECK(occurrences[static_cast<std::size_t>(k)] >= spc);
}

TEST_CASE("images are finite and in unit range") {
  const auto data = generate_dataset(5, {16, 16}, 4, 11);
  for (const Sample& s : data) {
    CHECK(s.image.allFinite());
    CHECK(s.image.minCoeff() >= 0.0);
    CHECK(s.image.maxCoeff() <= 1.0);
  }
}

TEST_CASE("background shift keeps visible classes and zeroes the rest") {
  IntVector gt(6);
  gt << 0, 1, 2, 3, 3, 1;

  const IntVector only3 = apply_background_shift(gt, {3}, 3);
  for (Eigen::Index j = 0; j < gt.size(); ++j) {
    CHECK(only3[j] == (gt[j] == 3 ? 3 : 0));
  }

  const IntVector all = apply_background_shift(gt, {1, 2, 3}, 3);
  CHECK(all == gt);

  const IntVector none = apply_background_shift(gt, {}, 3);
  CHECK(none.isZero());
}

TEST_CASE("background shift is idempotent and monotone in visibility") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    IntVector gt(64);
    for (Eigen::Index j = 0; j < gt.size(); ++j) gt[j] = uniform_index(rng, 6);
    std::vector<int> small, large;
    for (int k = 1; k <= 5; ++k) {
      if (uniform_unit(rng) < 0.4) small.push_back(k);
    }
    large = small;
    for (int k = 1; k <= 5; ++k) {
      if (std::find(large.begin(), large.end(), k) == large.end() &&
          uniform_unit(rng) < 0.5) {
        large.push_back(k);
      }
    }
    const IntVector once = apply_background_shift(gt, small, 5);
    const IntVector twice = apply_background_shift(once, small, 5);
    CHECK(once == twice);

    const IntVector wider = apply_background_shift(gt, large, 5);
    for (Eigen::Index j = 0; j < gt.size(); ++j) {
      if (once[j] != 0) CHECK(wider[j] == once[j]);
    }
  }
}

TEST_CASE("schedule parsing") {
  const TaskSchedule s = parse_schedule("4-1x3");
  REQUIRE(s.tasks.size() == 4);
  CHECK(s.tasks[0].new_classes == std::vector<int>{1, 2, 3, 4});
  CHECK(s.tasks[1].new_classes == std::vector<int>{5});
  CHECK(s.tasks[3].new_classes == std::vector<int>{7});
  CHECK(s.total_classes() == 7);

  const TaskSchedule single = parse_schedule("6");
  CHECK(single.tasks.size() == 1);
  CHECK(single.total_classes() == 6);

  CHECK_THROWS_AS(parse_schedule("x"), ConfigError);
  CHECK_THROWS_AS(parse_schedule(""), ConfigError);
  CHECK_THROWS_AS(parse_schedule("1"), ConfigError);

  // New-class sets are pairwise disjoint and ordered.
  std::set<int> seen;
  for (const auto& task : s.tasks) {
    for (int k : task.new_classes) {
      CHECK(!seen.count(k));
      seen.insert(k);
    }
  }
}

TEST_CASE("full-coverage single client shard equals the pool") {
  const auto data = generate_dataset(4, {16, 16}, 4, 9);
  const auto shards =
      partition_non_iid(data, {0}, 1, {1, 2, 3, 4}, 1.0, 1.0, 4, 123);
  REQUIRE(shards.size() == 1);
  CHECK(shards[0].label_space == std::vector<int>{1, 2, 3, 4});
  REQUIRE(shards[0].samples.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(shards[0].samples[i].train_label == data[i].gt_label);
  }
}

TEST_CASE("half class fraction gives two classes per client with full union") {
  const auto data = generate_dataset(4, {16, 16}, 6, 5);
  const std::vector<int> ids{0, 1, 2, 3};
  const auto shards = partition_non_iid(data, ids, 1, {1, 2, 3, 4}, 0.5, 0.6, 4, 77);
  REQUIRE(shards.size() == 4);
  std::set<int> covered;
  for (const auto& shard : shards) {
    CHECK(shard.label_space.size() == 2);
    covered.insert(shard.label_space.begin(), shard.label_space.end());
    CHECK(!shard.samples.empty());
    // Shard invariant: training labels live in the client's space plus bg.
    std::set<int> space(shard.label_space.begin(), shard.label_space.end());
    for (const Sample& s : shard.samples) {
      for (Eigen::Index j = 0; j < s.train_label.size(); ++j) {
        const int v = s.train_label[j];
        CHECK((v == 0 || space.count(v)));
      }
    }
  }
  CHECK(covered == std::set<int>{1, 2, 3, 4});
}

TEST_CASE("same seed gives identical shards") {
  const auto data = generate_dataset(4, {16, 16}, 5, 2);
  const std::vector<int> ids{0, 1, 2};
  const auto a = partition_non_iid(data, ids, 1, {1, 2, 3, 4}, 0.5, 0.5, 4, 99);
  const auto b = partition_non_iid(data, ids, 1, {1, 2, 3, 4}, 0.5, 0.5, 4, 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label_space == b[i].label_space);
    REQUIRE(a[i].samples.size() == b[i].samples.size());
    for (std::size_t j = 0; j < a[i].samples.size(); ++j) {
      CHECK(samples_equal(a[i].samples[j], b[i].samples[j]));
    }
  }
}

TEST_CASE("empty client list is rejected") {
  const auto data = generate_dataset(2, {8, 8}, 2, 1);
  CHECK_THROWS_AS(partition_non_iid(data, {}, 1, {1, 2}, 0.5, 0.5, 2, 1), ConfigError);
}

TEST_CASE("task pools split by the newest class present") {
  const auto data = generate_dataset(6, {16, 16}, 3, 13);
  const auto pool = select_task_pool(data, {5});
  CHECK(!pool.empty());
  for (int idx : pool) {
    const IntVector& gt = data[static_cast<std::size_t>(idx)].gt_label;
    int newest = 0;
    for (Eigen::Index j = 0; j < gt.size(); ++j) newest = std::max(newest, gt[j]);
    CHECK(newest == 5);
  }
  // Pools over consecutive class ranges partition the whole set.
  const auto base = select_task_pool(data, {1, 2, 3, 4});
  const auto last = select_task_pool(data, {6});
  CHECK(base.size() + pool.size() + last.size() == data.size());

  // No image contains a class newer than its pool's task.
  for (int idx : base) {
    const IntVector& gt = data[static_cast<std::size_t>(idx)].gt_label;
    CHECK(gt.maxCoeff() <= 4);
  }
}

TEST_CASE("dataset dump and load round-trips") {
  namespace fs = std::filesystem;
  DatasetConfig cfg;
  cfg.num_classes = 3;
  cfg.height = 8;
  cfg.width = 8;
  cfg.samples_per_class = 2;
  cfg.seed = 21;
  const auto data = generate_dataset(cfg);

  const std::string dir = (fs::temp_directory_path() / "fbl_dataset_rt").string();
  fs::remove_all(dir);
  dump_dataset(dir, data, cfg);
  const auto [loaded, loaded_cfg] = load_dataset(dir);
  CHECK(loaded_cfg.num_classes == cfg.num_classes);
  CHECK(loaded_cfg.seed == cfg.seed);
  REQUIRE(loaded.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(samples_equal(loaded[i], data[i]));
  fs::remove_all(dir);
}

}  // TEST_SUITE
