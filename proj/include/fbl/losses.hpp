#ifndef FBL_LOSSES_HPP
#define FBL_LOSSES_HPP

#include "fbl/distill.hpp"
#include "fbl/network.hpp"
#include "fbl/pseudo_label.hpp"
#include "fbl/synth_data.hpp"
#include "fbl/types.hpp"

#include <map>

namespace fbl::losses {

// Mean over the batch of per-pixel cross-entropy summed over pixels.
Scalar segmentation_loss(const std::vector<Matrix>& probs,
                         const std::vector<IntVector>& labels);

// Cross-entropy gradient at the label logit: p - 1, in [-1, 0].
Scalar gradient_scalar(Scalar prob_of_label_class);

// Magnitude of the gradient scalar, raised to local_old/(local_old+local_new)
// for pixels labeled with an old class; unchanged for new classes and
// background. Class ids 1..num_old_classes count as old.
Scalar adaptive_gradient_scalar(Scalar gamma, int pixel_class, int num_old_classes,
                                int local_old, int local_new);

// Per-pixel adaptive scalars for one sample.
Vector adaptive_scalars(const Matrix& probs, const IntVector& labels,
                        int num_old_classes, int local_old, int local_new);

// Group means of the adaptive scalars: background, per task, per class.
// A mean is absent exactly when its pixel group is empty in the batch.
struct GradientStats {
  std::optional<Scalar> background_mean;
  long background_count = 0;
  std::vector<std::optional<Scalar>> task_means;  // index task-1
  std::vector<long> task_counts;
  std::vector<std::optional<Scalar>> class_means;  // index class id
  std::vector<long> class_counts;
};

GradientStats gradient_means(const std::vector<Vector>& scalars,
                             const std::vector<IntVector>& labels,
                             const ClassTaskMap& task_map);

// Per-pixel reweighting factors: scalar over its group mean; 1 wherever the
// group mean is absent or zero. The mean weight within a populated group is 1.
Vector balanced_weights(const Vector& scalars, const IntVector& labels,
                        const GradientStats& stats, const ClassTaskMap& task_map);

// Reweighted cross-entropy, same (1/B) sum-over-pixels structure as
// segmentation_loss. Weights are treated as constants.
Scalar balanced_seg_loss(const std::vector<Matrix>& probs,
                         const std::vector<IntVector>& labels,
                         const std::vector<Vector>& weights);

// Convenience form that derives the weights from stats computed on the batch.
Scalar balanced_seg_loss(const std::vector<Matrix>& probs,
                         const std::vector<IntVector>& labels,
                         const std::vector<Vector>& scalars,
                         const GradientStats& stats, const ClassTaskMap& task_map);

// Per-pixel relation target: the old model's distribution over the first
// 1 + K_old channels, the one-hot tail for a new-class label, renormalized.
Vector relation_label(int label, const Vector& old_probs, int total_outputs);

struct ClassPrototype {
  Vector prob_mean;   // mean current-model distribution over the class pixels
  Vector label_mean;  // mean relation target over the same pixels
  long count = 0;
};

struct RelationshipPrototypes {
  std::map<int, ClassPrototype> by_class;  // only classes with pixels present
  int total_outputs = 0;
};

RelationshipPrototypes class_prototypes(const std::vector<Matrix>& probs,
                                        const std::vector<Matrix>& relation_labels,
                                        const std::vector<IntVector>& labels);

// Gradient-weighted mean KL between prototypes and their relation targets,
// normalized by the total foreground class count. Background is excluded;
// classes whose gradient weight is unavailable fall back to weight 1.
Scalar relation_loss(const RelationshipPrototypes& prototypes,
                     const GradientStats& stats, const ClassTaskMap& task_map);

// ---------------------------------------------------------------------------
// Composite batch objective.
//
// Built once per training step from the batch and the freeze-point model:
// pseudo labels, reweighting factors, relation targets and old pooled
// signatures are captured as constants, so value() is a pure function of the
// parameters and gradient() is its exact derivative at the freeze point.
// ---------------------------------------------------------------------------

enum class LabelSource { kTraining, kPseudoAdaptive, kPseudoConstProb };

struct ObjectiveOptions {
  Scalar lambda1 = 0.5;
  Scalar lambda2 = 0.0005;
  bool include_seg = true;   // keep the (re)weighted CE term
  bool reweight = true;      // false: plain CE on the same labels
  LabelSource labels = LabelSource::kPseudoAdaptive;
  Scalar const_prob_threshold = 0.9;
  int local_old_classes = 0;
  int local_new_classes = 0;
};

class BatchObjective {
 public:
  // First-task / fine-tuning path: plain CE on the training labels.
  static BatchObjective plain(std::vector<const synth::Sample*> batch,
                              const net::NetworkParams& params);

  // Incremental path; requires the old model. Thresholds may be null only for
  // the constant-probability label source.
  static BatchObjective incremental(std::vector<const synth::Sample*> batch,
                                    const net::NetworkParams& params,
                                    const net::NetworkParams& old_model,
                                    const pseudo::ThresholdTable* thresholds,
                                    const ObjectiveOptions& options);

  // Loss at arbitrary parameters with all captured statistics held fixed.
  Scalar value(const net::NetworkParams& params) const;

  // Analytic gradient at the freeze-point parameters.
  Vector gradient() const;

  struct Parts {
    Scalar weighted_seg = 0;
    Scalar relation = 0;
    Scalar pod = 0;
    Scalar total = 0;
  };
  Parts parts() const { return parts_; }

  const std::vector<IntVector>& labels() const { return labels_; }
  const std::vector<Vector>& weights() const { return weights_; }
  const std::vector<IntVector>& provenance() const { return provenance_; }

 private:
  BatchObjective() = default;

  struct Eval {
    Scalar weighted_seg = 0;
    Scalar relation = 0;
    Scalar pod = 0;
    Scalar total = 0;
    std::vector<net::ForwardTrace> traces;
    RelationshipPrototypes prototypes;
  };
  Eval evaluate(const net::NetworkParams& params) const;

  std::vector<const synth::Sample*> batch_;
  net::NetworkParams frozen_params_;
  ObjectiveOptions options_;
  bool incremental_ = false;

  std::vector<IntVector> labels_;
  std::vector<IntVector> provenance_;
  std::vector<Vector> weights_;               // per pixel; all ones when plain
  std::vector<Matrix> relation_labels_;       // per sample, HW x outputs
  std::map<int, Scalar> relation_weights_;    // per class, frozen
  std::vector<distill::PooledSignature> old_signatures_;
  Parts parts_;
};

// Scalar total objective: plain CE at task 1, the composite loss afterwards.
Scalar total_objective(const std::vector<const synth::Sample*>& batch,
                       const net::NetworkParams& params,
                       const net::NetworkParams* old_model, int task_index,
                       const pseudo::ThresholdTable* thresholds,
                       const ObjectiveOptions& options);

}  // namespace fbl::losses

#endif  // FBL_LOSSES_HPP
