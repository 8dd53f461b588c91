#ifndef FBL_TYPES_HPP
#define FBL_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbl {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using IntVector = Eigen::VectorXi;

// Error categories shared by all modules.
struct ConfigError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ShapeError : std::runtime_error { using std::runtime_error::runtime_error; };
struct DataError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ProtocolError : std::runtime_error { using std::runtime_error::runtime_error; };
struct EvalError : std::runtime_error { using std::runtime_error::runtime_error; };

// Floor applied to probabilities before any log.
inline constexpr Scalar kProbFloor = 1e-12;

// ---------------------------------------------------------------------------
// Deterministic randomness. All draws go through these helpers so that a seed
// produces bit-identical streams regardless of the standard library.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                              std::uint64_t d) {
  return mix_seed(mix_seed(a, b, c), d);
}

// Uniform in [0, 1) with 53 bits of precision.
inline double uniform_unit(Rng& g) { return double(g() >> 11) * 0x1.0p-53; }

inline double uniform_range(Rng& g, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(g);
}

// Uniform index in [0, n).
inline int uniform_index(Rng& g, int n) {
  return static_cast<int>(uniform_unit(g) * n) % n;
}

// Box-Muller; two raw draws per call, no cached state.
double gaussian(Rng& g);

template <typename T>
void shuffle_inplace(std::vector<T>& v, Rng& g) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    std::swap(v[i], v[uniform_index(g, i + 1)]);
  }
}

// ---------------------------------------------------------------------------
// Hashing, used for run-log reproducibility records.
// ---------------------------------------------------------------------------

std::uint64_t fnv1a(const void* data, std::size_t n);
std::uint64_t hash_vector(const Vector& v);
std::string hex64(std::uint64_t v);

// ---------------------------------------------------------------------------
// Shared numeric helpers.
// ---------------------------------------------------------------------------

// Row-wise softmax with max-subtraction; every row of the result sums to 1.
Matrix softmax_rows(const Matrix& logits);

// Shannon entropy -sum p log p per row, probabilities floored before the log.
Vector entropy_rows(const Matrix& probs);

// KL(p || q); both arguments are floored at kProbFloor and renormalized.
Scalar kl_divergence(Vector p, Vector q);

// Maps a class id to the index of the task that introduced it (1-based);
// class 0 (background) maps to task 0.
struct ClassTaskMap {
  std::vector<int> task_of_class;  // size total_classes + 1
  int num_tasks = 0;

  static ClassTaskMap from_counts(const std::vector<int>& classes_per_task);
  int total_classes() const { return static_cast<int>(task_of_class.size()) - 1; }
  int task_of(int cls) const;
};

}  // namespace fbl

#endif  // FBL_TYPES_HPP
