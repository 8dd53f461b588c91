#include "fbl/synth_data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace fbl::synth {
namespace {

using json = nlohmann::json;

// Saturated color wheel. The first eight hues are interleaved so that each
// newly introduced class sits between hues of earlier classes (novel content
// lands on learned decision boundaries instead of deep inside one region);
// later classes fall back to golden-angle spacing.
void class_color(int cls, int num_classes, Scalar rgb[3]) {
  (void)num_classes;
  static const double table[8] = {0.0, 0.5, 0.25, 0.75, 0.125, 0.625, 0.375, 0.875};
  const double golden = 0.6180339887498949;
  const double turn =
      cls <= 8 ? table[cls - 1] : std::fmod(cls * golden, 1.0);
  const double h = 6.0 * turn;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double v = 0.9, p = 0.12, q = v - (v - p) * f, t = p + (v - p) * f;
  switch (sector) {
    case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
    case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
    case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
    case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
    case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
    default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
  }
}

enum class ShapeKind { kDisk, kBox, kDiamond, kCross };

bool inside_shape(ShapeKind kind, int y, int x, int cy, int cx, int r) {
  const int dy = y - cy;
  const int dx = x - cx;
  switch (kind) {
    case ShapeKind::kDisk:
      return dy * dy + dx * dx <= r * r;
    case ShapeKind::kBox:
      return std::abs(dy) <= r && std::abs(dx) <= r;
    case ShapeKind::kDiamond:
      return std::abs(dy) + std::abs(dx) <= r;
    case ShapeKind::kCross:
      return (std::abs(dy) <= r && std::abs(dx) <= 1) ||
             (std::abs(dx) <= r && std::abs(dy) <= 1);
  }
  return false;
}

void stamp_class(Sample& s, int cls, int num_classes, Rng& rng, bool primary) {
  const int h = s.height, w = s.width;
  const ShapeKind kind = static_cast<ShapeKind>((cls - 1) % 4);
  // Secondary shapes stay small so one class dominates each image.
  const int rmax = std::max(2, std::min(h, w) / (primary ? 3 : 8));
  const int r = 2 + uniform_index(rng, rmax - 1);
  const int cy = r + uniform_index(rng, std::max(h - 2 * r, 1));
  const int cx = r + uniform_index(rng, std::max(w - 2 * r, 1));

  Scalar rgb[3];
  class_color(cls, num_classes, rgb);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!inside_shape(kind, y, x, cy, cx, r)) continue;
      const int j = y * w + x;
      s.gt_label[j] = cls;
      for (int c = 0; c < s.image.cols(); ++c) {
        const Scalar base = c < 3 ? rgb[c] : 0.5;
        s.image(j, c) = std::clamp(base + uniform_range(rng, -0.05, 0.05), 0.0, 1.0);
      }
    }
  }
}

Sample make_sample(int primary, const DatasetConfig& cfg, Rng& rng) {
  Sample s;
  s.height = cfg.height;
  s.width = cfg.width;
  const int hw = cfg.height * cfg.width;
  s.image.resize(hw, cfg.channels);
  s.gt_label = IntVector::Zero(hw);

  // Textured near-achromatic background: per-image base level plus pixel
  // noise, so background stays genuinely non-trivial to predict.
  const Scalar base_level = uniform_range(rng, 0.10, 0.55);
  for (int j = 0; j < hw; ++j) {
    const Scalar level = std::clamp(base_level + uniform_range(rng, -0.15, 0.15), 0.0, 0.65);
    for (int c = 0; c < cfg.channels; ++c) {
      s.image(j, c) = std::clamp(level + uniform_range(rng, -0.08, 0.08), 0.0, 1.0);
    }
  }

  // Extras first, primary last so the primary class always survives overlap.
  // Extras come from classes introduced no later than the primary: earlier
  // classes recur in later images (background shift), while a class stays
  // unseen until its own arrival.
  const int n_extra = primary > 1 ? uniform_index(rng, 3) : 0;
  std::vector<int> extras;
  for (int i = 0; i < n_extra; ++i) {
    int cls = 1 + uniform_index(rng, primary);
    if (cls == primary ||
        std::find(extras.begin(), extras.end(), cls) != extras.end()) {
      continue;
    }
    extras.push_back(cls);
  }
  for (int cls : extras) stamp_class(s, cls, cfg.num_classes, rng, false);
  stamp_class(s, primary, cfg.num_classes, rng, true);

  s.train_label = s.gt_label;
  return s;
}

}  // namespace

std::vector<Sample> generate_dataset(const DatasetConfig& cfg) {
  if (cfg.num_classes < 2) {
    throw ConfigError("generate_dataset: num_classes must be >= 2");
  }
  if (cfg.height < 8 || cfg.width < 8) {
    throw ConfigError("generate_dataset: grid must be at least 8x8");
  }
  if (cfg.channels < 1) throw ConfigError("generate_dataset: channels must be >= 1");
  if (cfg.samples_per_class < 1) {
    throw ConfigError("generate_dataset: samples_per_class must be >= 1");
  }

  Rng rng(mix_seed(cfg.seed, 0x5d47a1));
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(cfg.num_classes) * cfg.samples_per_class);
  for (int rep = 0; rep < cfg.samples_per_class; ++rep) {
    for (int cls = 1; cls <= cfg.num_classes; ++cls) {
      out.push_back(make_sample(cls, cfg, rng));
    }
  }
  return out;
}

std::vector<Sample> generate_dataset(int num_classes, std::pair<int, int> grid,
                                     int samples_per_class, std::uint64_t seed) {
  DatasetConfig cfg;
  cfg.num_classes = num_classes;
  cfg.height = grid.first;
  cfg.width = grid.second;
  cfg.samples_per_class = samples_per_class;
  cfg.seed = seed;
  return generate_dataset(cfg);
}

IntVector apply_background_shift(const IntVector& gt_label,
                                 const std::vector<int>& visible, int num_classes) {
  std::vector<char> keep(static_cast<std::size_t>(num_classes) + 1, 0);
  for (int v : visible) {
    if (v < 1 || v > num_classes) {
      throw ConfigError("apply_background_shift: visible class out of range");
    }
    keep[static_cast<std::size_t>(v)] = 1;
  }
  IntVector out(gt_label.size());
  for (Eigen::Index j = 0; j < gt_label.size(); ++j) {
    const int g = gt_label[j];
    out[j] = (g >= 1 && g <= num_classes && keep[static_cast<std::size_t>(g)]) ? g : 0;
  }
  return out;
}

int TaskSchedule::total_classes() const {
  int n = 0;
  for (const auto& t : tasks) n += static_cast<int>(t.new_classes.size());
  return n;
}

std::vector<int> TaskSchedule::classes_per_task() const {
  std::vector<int> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) out.push_back(static_cast<int>(t.new_classes.size()));
  return out;
}

TaskSchedule parse_schedule(const std::string& spec) {
  int base = 0, inc = 0, reps = 0;
  char extra = 0;
  if (std::sscanf(spec.c_str(), "%d-%dx%d%c", &base, &inc, &reps, &extra) == 3) {
    // "B-IxN"
  } else if (std::sscanf(spec.c_str(), "%d%c", &base, &extra) == 1) {
    inc = 0;
    reps = 0;
  } else {
    throw ConfigError("parse_schedule: cannot parse '" + spec + "'");
  }
  if (base < 1 || inc < 0 || reps < 0 || (reps > 0 && inc < 1)) {
    throw ConfigError("parse_schedule: invalid counts in '" + spec + "'");
  }
  TaskSchedule sched;
  int next = 1;
  TaskSpec first;
  first.task_id = 1;
  for (int i = 0; i < base; ++i) first.new_classes.push_back(next++);
  sched.tasks.push_back(first);
  for (int t = 0; t < reps; ++t) {
    TaskSpec spec_t;
    spec_t.task_id = t + 2;
    for (int i = 0; i < inc; ++i) spec_t.new_classes.push_back(next++);
    sched.tasks.push_back(spec_t);
  }
  if (sched.total_classes() < 2) {
    throw ConfigError("parse_schedule: schedule must cover at least 2 classes");
  }
  return sched;
}

std::vector<int> select_task_pool(const std::vector<Sample>& dataset,
                                  const std::vector<int>& task_classes) {
  // An image belongs to the task that introduced its newest class, so a task
  // never trains on classes from the future while old classes keep appearing
  // (and get relabeled as background) in later tasks.
  std::set<int> wanted(task_classes.begin(), task_classes.end());
  std::vector<int> pool;
  for (int i = 0; i < static_cast<int>(dataset.size()); ++i) {
    const IntVector& gt = dataset[static_cast<std::size_t>(i)].gt_label;
    int newest = 0;
    for (Eigen::Index j = 0; j < gt.size(); ++j) newest = std::max(newest, gt[j]);
    if (newest >= 1 && wanted.count(newest)) pool.push_back(i);
  }
  return pool;
}

std::vector<ClientShard> partition_non_iid(const std::vector<Sample>& pool,
                                           const std::vector<int>& client_ids,
                                           int task_id,
                                           const std::vector<int>& task_classes,
                                           double class_fraction,
                                           double sample_fraction,
                                           int num_classes_total,
                                           std::uint64_t seed) {
  if (client_ids.empty()) throw ConfigError("partition_non_iid: no clients");
  if (class_fraction <= 0 || class_fraction > 1) {
    throw ConfigError("partition_non_iid: class_fraction must be in (0, 1]");
  }
  if (sample_fraction <= 0 || sample_fraction > 1) {
    throw ConfigError("partition_non_iid: sample_fraction must be in (0, 1]");
  }
  if (pool.empty()) throw ConfigError("partition_non_iid: empty sample pool");

  const int k = static_cast<int>(task_classes.size());
  const int per_client =
      std::min(k, static_cast<int>(std::ceil(class_fraction * k)));

  Rng rng(mix_seed(seed, 0x9c1e));
  const int max_retries = 100;
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    std::vector<std::vector<int>> spaces;
    std::set<int> covered;
    bool feasible = true;
    std::vector<std::vector<int>> eligible_per_client;

    for (std::size_t c = 0; c < client_ids.size(); ++c) {
      std::vector<int> classes = task_classes;
      shuffle_inplace(classes, rng);
      classes.resize(static_cast<std::size_t>(per_client));
      std::sort(classes.begin(), classes.end());

      std::set<int> mine(classes.begin(), classes.end());
      std::vector<int> eligible;
      for (int i = 0; i < static_cast<int>(pool.size()); ++i) {
        const IntVector& gt = pool[static_cast<std::size_t>(i)].gt_label;
        for (Eigen::Index j = 0; j < gt.size(); ++j) {
          if (mine.count(gt[j])) {
            eligible.push_back(i);
            break;
          }
        }
      }
      if (eligible.empty()) {
        feasible = false;
        break;
      }
      covered.insert(classes.begin(), classes.end());
      spaces.push_back(std::move(classes));
      eligible_per_client.push_back(std::move(eligible));
    }

    if (!feasible || static_cast<int>(covered.size()) != k) continue;

    std::vector<ClientShard> shards;
    for (std::size_t c = 0; c < client_ids.size(); ++c) {
      ClientShard shard;
      shard.client_id = client_ids[c];
      shard.task_id = task_id;
      shard.label_space = spaces[c];

      std::vector<int>& eligible = eligible_per_client[c];
      shuffle_inplace(eligible, rng);
      const int take = std::max(
          1, static_cast<int>(std::ceil(sample_fraction * eligible.size())));
      eligible.resize(static_cast<std::size_t>(std::min<int>(take, eligible.size())));
      std::sort(eligible.begin(), eligible.end());

      for (int idx : eligible) {
        Sample s = pool[static_cast<std::size_t>(idx)];
        s.train_label =
            apply_background_shift(s.gt_label, shard.label_space, num_classes_total);
        shard.samples.push_back(std::move(s));
      }
      shards.push_back(std::move(shard));
    }
    return shards;
  }
  throw ConfigError("partition_non_iid: could not cover the task label space after 100 attempts");
}

void dump_dataset(const std::string& dir, const std::vector<Sample>& samples,
                  const DatasetConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  json manifest;
  manifest["height"] = cfg.height;
  manifest["width"] = cfg.width;
  manifest["channels"] = cfg.channels;
  manifest["num_classes"] = cfg.num_classes;
  manifest["samples_per_class"] = cfg.samples_per_class;
  manifest["seed"] = cfg.seed;
  manifest["count"] = samples.size();
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw DataError("dump_dataset: cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";

  std::ofstream imgs(dir + "/images.bin", std::ios::binary);
  std::ofstream gts(dir + "/gt_labels.bin", std::ios::binary);
  std::ofstream trains(dir + "/train_labels.bin", std::ios::binary);
  if (!imgs || !gts || !trains) throw DataError("dump_dataset: cannot open outputs");
  for (const Sample& s : samples) {
    for (Eigen::Index j = 0; j < s.image.rows(); ++j) {
      for (Eigen::Index c = 0; c < s.image.cols(); ++c) {
        const double v = s.image(j, c);
        imgs.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
    for (Eigen::Index j = 0; j < s.gt_label.size(); ++j) {
      const std::int32_t g = s.gt_label[j];
      const std::int32_t t = s.train_label[j];
      gts.write(reinterpret_cast<const char*>(&g), sizeof(g));
      trains.write(reinterpret_cast<const char*>(&t), sizeof(t));
    }
  }
}

std::pair<std::vector<Sample>, DatasetConfig> load_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw DataError("load_dataset: missing manifest in " + dir);
  json manifest = json::parse(mf);

  DatasetConfig cfg;
  cfg.height = manifest.at("height").get<int>();
  cfg.width = manifest.at("width").get<int>();
  cfg.channels = manifest.at("channels").get<int>();
  cfg.num_classes = manifest.at("num_classes").get<int>();
  cfg.samples_per_class = manifest.at("samples_per_class").get<int>();
  cfg.seed = manifest.at("seed").get<std::uint64_t>();
  const auto count = manifest.at("count").get<std::size_t>();

  std::ifstream imgs(dir + "/images.bin", std::ios::binary);
  std::ifstream gts(dir + "/gt_labels.bin", std::ios::binary);
  std::ifstream trains(dir + "/train_labels.bin", std::ios::binary);
  if (!imgs || !gts || !trains) throw DataError("load_dataset: missing binary grids");

  const int hw = cfg.height * cfg.width;
  std::vector<Sample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Sample s;
    s.height = cfg.height;
    s.width = cfg.width;
    s.image.resize(hw, cfg.channels);
    s.gt_label.resize(hw);
    s.train_label.resize(hw);
    for (int j = 0; j < hw; ++j) {
      for (int c = 0; c < cfg.channels; ++c) {
        double v = 0;
        imgs.read(reinterpret_cast<char*>(&v), sizeof(v));
        s.image(j, c) = v;
      }
    }
    for (int j = 0; j < hw; ++j) {
      std::int32_t g = 0, t = 0;
      gts.read(reinterpret_cast<char*>(&g), sizeof(g));
      trains.read(reinterpret_cast<char*>(&t), sizeof(t));
      s.gt_label[j] = g;
      s.train_label[j] = t;
    }
    if (!imgs || !gts || !trains) throw DataError("load_dataset: truncated binary grids");
    samples.push_back(std::move(s));
  }
  return {std::move(samples), cfg};
}

}  // namespace fbl::synth
