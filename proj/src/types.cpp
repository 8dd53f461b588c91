#include "fbl/types.hpp"

#include <cmath>

namespace fbl {

double gaussian(Rng& g) {
  const double u1 = std::max(uniform_unit(g), 1e-300);
  const double u2 = uniform_unit(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t fnv1a(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_vector(const Vector& v) {
  return fnv1a(v.data(), sizeof(Scalar) * static_cast<std::size_t>(v.size()));
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    Vector e = (logits.row(r).array() - m).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

Vector entropy_rows(const Matrix& probs) {
  Vector out(probs.rows());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Scalar h = 0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const Scalar p = probs(r, c);
      h -= p * std::log(std::max(p, kProbFloor));
    }
    out[r] = std::max(h, Scalar(0));
  }
  return out;
}

Scalar kl_divergence(Vector p, Vector q) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: size mismatch");
  p = p.cwiseMax(kProbFloor);
  q = q.cwiseMax(kProbFloor);
  p /= p.sum();
  q /= q.sum();
  Scalar kl = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, Scalar(0));
}

ClassTaskMap ClassTaskMap::from_counts(const std::vector<int>& classes_per_task) {
  ClassTaskMap map;
  map.num_tasks = static_cast<int>(classes_per_task.size());
  map.task_of_class.push_back(0);  // background
  for (int t = 0; t < map.num_tasks; ++t) {
    for (int i = 0; i < classes_per_task[static_cast<std::size_t>(t)]; ++i) {
      map.task_of_class.push_back(t + 1);
    }
  }
  return map;
}

int ClassTaskMap::task_of(int cls) const {
  if (cls < 0 || cls >= static_cast<int>(task_of_class.size())) {
    throw DataError("ClassTaskMap: class id " + std::to_string(cls) + " out of range");
  }
  return task_of_class[static_cast<std::size_t>(cls)];
}

}  // namespace fbl
