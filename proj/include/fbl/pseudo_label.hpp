#ifndef FBL_PSEUDO_LABEL_HPP
#define FBL_PSEUDO_LABEL_HPP

#include "fbl/network.hpp"
#include "fbl/synth_data.hpp"
#include "fbl/types.hpp"

namespace fbl::pseudo {

// Per-pixel Shannon entropy of a probability map.
Vector entropy_map(const Matrix& probs);

// Selection proportion: starts at 20%, grows 10% per epoch, capped at 80%.
double rho_schedule(int epoch);

// Per-old-class entropy threshold. A class the old model never predicts has
// no threshold and yields no pseudo labels.
struct ThresholdTable {
  std::vector<std::optional<Scalar>> gamma;  // index = class id; [0] unused

  int num_old_classes() const { return static_cast<int>(gamma.size()) - 1; }
  const std::optional<Scalar>& at(int cls) const;
};

// Ascending sort, then the value at index floor(len * rho) clamped to the
// last index; empty input yields no threshold.
std::optional<Scalar> quantile_threshold(std::vector<Scalar> values, double rho);

// For every old class k: collect the current model's pixel entropies wherever
// the old model's argmax is k (over the whole dataset, in sample order), sort
// ascending and pick the value at floor(len * rho), clamped to the last index.
ThresholdTable compute_thresholds(const std::vector<synth::Sample>& dataset,
                                  const net::NetworkParams& old_model,
                                  const net::NetworkParams& current_model,
                                  double rho);

// Same selection rule expressed on probability maps directly; old_probs and
// current_probs hold one matrix per sample.
ThresholdTable compute_thresholds_from_maps(const std::vector<Matrix>& old_probs,
                                            const std::vector<Matrix>& current_probs,
                                            double rho);

enum class Provenance : int { kBackground = 0, kKeptLabel = 1, kPseudoOld = 2 };

struct PseudoLabelMap {
  IntVector labels;
  IntVector provenance;  // Provenance per pixel
};

// Three-branch rule: keep any non-background training label; give a
// background pixel the old model's argmax k when the current-model entropy is
// within class k's threshold; otherwise background.
PseudoLabelMap generate_pseudo_labels(const IntVector& train_label,
                                      const Matrix& old_probs,
                                      const Matrix& current_probs,
                                      const ThresholdTable& thresholds);

// Constant-threshold variant: a background pixel takes the old argmax k >= 1
// when its old-model probability reaches prob_threshold.
PseudoLabelMap generate_pseudo_labels_const_threshold(const IntVector& train_label,
                                                      const Matrix& old_probs,
                                                      double prob_threshold);

}  // namespace fbl::pseudo

#endif  // FBL_PSEUDO_LABEL_HPP
