#ifndef FBL_SYNTH_DATA_HPP
#define FBL_SYNTH_DATA_HPP

#include "fbl/types.hpp"

#include <utility>

namespace fbl::synth {

// One image with its full ground-truth label map and the training view that
// the current task actually exposes (non-visible classes relabeled to 0).
// Pixels are stored row-major: pixel j = y * width + x; image is HW x channels.
struct Sample {
  int height = 0;
  int width = 0;
  Matrix image;
  IntVector gt_label;
  IntVector train_label;
};

struct DatasetConfig {
  int num_classes = 4;
  int height = 16;
  int width = 16;
  int channels = 3;
  int samples_per_class = 8;
  std::uint64_t seed = 0;
};

// Renders one deterministic dataset: each class has a fixed shape family and
// color signature with per-sample jitter, every image holds 1-3 foreground
// classes on a noisy background, and each class is the primary subject of
// exactly samples_per_class images. train_label starts equal to gt_label.
std::vector<Sample> generate_dataset(const DatasetConfig& cfg);
std::vector<Sample> generate_dataset(int num_classes, std::pair<int, int> grid,
                                     int samples_per_class, std::uint64_t seed);

// Relabels every pixel whose class is not in `visible` as background.
IntVector apply_background_shift(const IntVector& gt_label,
                                 const std::vector<int>& visible, int num_classes);

struct TaskSpec {
  int task_id = 0;                // 1-based
  std::vector<int> new_classes;   // disjoint across tasks, globally ordered
};

struct TaskSchedule {
  std::vector<TaskSpec> tasks;
  int total_classes() const;
  std::vector<int> classes_per_task() const;
};

// Parses "B" (single task) or "B-IxN" (B base classes, then I classes N times).
TaskSchedule parse_schedule(const std::string& spec);

// Indices of samples holding at least one pixel of any listed class.
std::vector<int> select_task_pool(const std::vector<Sample>& dataset,
                                  const std::vector<int>& task_classes);

struct ClientShard {
  int client_id = 0;
  int task_id = 0;
  std::vector<int> label_space;  // sorted subset of the task's classes
  std::vector<Sample> samples;   // train_label restricted to label_space
};

// Non-IID split: each client draws ceil(class_fraction * K) task classes and
// receives sample_fraction of the pool samples containing them; a sample may
// land on several clients. Class coverage of the full task label set is
// enforced by resampling (at most 100 retries).
std::vector<ClientShard> partition_non_iid(const std::vector<Sample>& pool,
                                           const std::vector<int>& client_ids,
                                           int task_id,
                                           const std::vector<int>& task_classes,
                                           double class_fraction,
                                           double sample_fraction,
                                           int num_classes_total,
                                           std::uint64_t seed);

// Reproducibility audit dump: flat binary grids plus a JSON manifest.
void dump_dataset(const std::string& dir, const std::vector<Sample>& samples,
                  const DatasetConfig& cfg);
std::pair<std::vector<Sample>, DatasetConfig> load_dataset(const std::string& dir);

}  // namespace fbl::synth

#endif  // FBL_SYNTH_DATA_HPP
