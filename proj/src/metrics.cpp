#include "fbl/metrics.hpp"

#include <cstdio>
#include <ostream>

namespace fbl::metrics {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw ConfigError("ConfusionMatrix: need at least one class");
}

void ConfusionMatrix::accumulate(const IntVector& gt, const IntVector& pred) {
  if (gt.size() != pred.size()) {
    throw ShapeError("ConfusionMatrix::accumulate: label maps differ in size");
  }
  for (Eigen::Index i = 0; i < gt.size(); ++i) {
    const int g = gt[i];
    const int p = pred[i];
    if (g < 0 || g >= num_classes_ || p < 0 || p >= num_classes_) {
      throw DataError("ConfusionMatrix::accumulate: label out of range");
    }
    ++counts_[static_cast<std::size_t>(g) * num_classes_ + p];
  }
}

void ConfusionMatrix::accumulate_capped(const IntVector& gt, const IntVector& pred,
                                        int max_class) {
  if (gt.size() != pred.size()) {
    throw ShapeError("ConfusionMatrix::accumulate_capped: label maps differ in size");
  }
  for (Eigen::Index i = 0; i < gt.size(); ++i) {
    const int g = gt[i];
    if (g > max_class) continue;
    const int p = pred[i];
    if (g < 0 || p < 0 || g >= num_classes_ || p >= num_classes_) {
      throw DataError("ConfusionMatrix::accumulate_capped: label out of range");
    }
    ++counts_[static_cast<std::size_t>(g) * num_classes_ + p];
  }
}

ConfusionMatrix& ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) {
    throw ShapeError("ConfusionMatrix::merge: class count mismatch");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

long ConfusionMatrix::at(int gt, int pred) const {
  if (gt < 0 || gt >= num_classes_ || pred < 0 || pred >= num_classes_) {
    throw DataError("ConfusionMatrix::at: index out of range");
  }
  return counts_[static_cast<std::size_t>(gt) * num_classes_ + pred];
}

long ConfusionMatrix::total() const {
  long t = 0;
  for (long c : counts_) t += c;
  return t;
}

std::optional<double> ConfusionMatrix::iou(int cls) const {
  long row = 0;
  long col = 0;
  for (int j = 0; j < num_classes_; ++j) {
    row += at(cls, j);
    col += at(j, cls);
  }
  const long diag = at(cls, cls);
  const long denom = row + col - diag;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(diag) / static_cast<double>(denom);
}

double ConfusionMatrix::miou() const {
  double sum = 0;
  int present = 0;
  for (int k = 0; k < num_classes_; ++k) {
    if (auto v = iou(k)) {
      sum += *v;
      ++present;
    }
  }
  if (present == 0) throw EvalError("ConfusionMatrix::miou: no class present");
  return sum / present;
}

void write_csv_header(std::ostream& os) { os << "task,class,iou\n"; }

void append_csv(std::ostream& os, int task, const ConfusionMatrix& cm) {
  char buf[64];
  for (int k = 0; k < cm.num_classes(); ++k) {
    if (auto v = cm.iou(k)) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%.6f\n", task, k, *v);
      os << buf;
    }
  }
  std::snprintf(buf, sizeof(buf), "%d,miou,%.6f\n", task, cm.miou());
  os << buf;
}

}  // namespace fbl::metrics
