#ifndef FBL_METRICS_HPP
#define FBL_METRICS_HPP

#include "fbl/types.hpp"

#include <iosfwd>
#include <optional>

namespace fbl::metrics {

// Pixel-level confusion matrix; rows are ground truth, columns predictions.
// Matrices over the same class count merge by addition, so evaluation can be
// split across images in any order.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void accumulate(const IntVector& gt, const IntVector& pred);
  // Skips pixels whose ground-truth class exceeds max_class; used while later
  // tasks' classes are not yet predictable.
  void accumulate_capped(const IntVector& gt, const IntVector& pred, int max_class);

  ConfusionMatrix& merge(const ConfusionMatrix& other);

  long at(int gt, int pred) const;
  long total() const;
  int num_classes() const { return num_classes_; }

  // Intersection over union for one class: diag / (row + col - diag).
  // Empty when the class appears in neither ground truth nor prediction.
  std::optional<double> iou(int cls) const;

  // Mean of the present per-class IoUs, background included.
  double miou() const;

 private:
  int num_classes_;
  std::vector<long> counts_;
};

// CSV rows "task,class,iou" for every present class plus a "task,miou,value"
// summary row. Fixed 6-decimal formatting keeps re-runs byte-identical.
void append_csv(std::ostream& os, int task, const ConfusionMatrix& cm);
void write_csv_header(std::ostream& os);

}  // namespace fbl::metrics

#endif  // FBL_METRICS_HPP
