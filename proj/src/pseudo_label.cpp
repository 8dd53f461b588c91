#include "fbl/pseudo_label.hpp"

#include <algorithm>
#include <cmath>

namespace fbl::pseudo {

Vector entropy_map(const Matrix& probs) { return entropy_rows(probs); }

double rho_schedule(int epoch) {
  if (epoch < 0) throw ConfigError("rho_schedule: epoch must be >= 0");
  return std::min(0.2 + 0.1 * epoch, 0.8);
}

const std::optional<Scalar>& ThresholdTable::at(int cls) const {
  if (cls < 1 || cls >= static_cast<int>(gamma.size())) {
    throw DataError("ThresholdTable: class id out of range");
  }
  return gamma[static_cast<std::size_t>(cls)];
}

std::optional<Scalar> quantile_threshold(std::vector<Scalar> values, double rho) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const auto idx = std::min<std::size_t>(
      static_cast<std::size_t>(values.size() * rho), values.size() - 1);
  return values[idx];
}

ThresholdTable compute_thresholds_from_maps(const std::vector<Matrix>& old_probs,
                                            const std::vector<Matrix>& current_probs,
                                            double rho) {
  if (old_probs.empty() || old_probs.size() != current_probs.size()) {
    throw ConfigError("compute_thresholds_from_maps: empty or misaligned inputs");
  }
  if (rho <= 0 || rho > 1) {
    throw ConfigError("compute_thresholds_from_maps: rho must be in (0, 1]");
  }
  const int old_classes = static_cast<int>(old_probs[0].cols()) - 1;
  std::vector<std::vector<Scalar>> pools(static_cast<std::size_t>(old_classes) + 1);

  for (std::size_t i = 0; i < old_probs.size(); ++i) {
    if (old_probs[i].rows() != current_probs[i].rows()) {
      throw ShapeError("compute_thresholds_from_maps: pixel count mismatch");
    }
    const Vector h = entropy_rows(current_probs[i]);
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      Eigen::Index k = 0;
      old_probs[i].row(j).maxCoeff(&k);
      if (k >= 1) pools[static_cast<std::size_t>(k)].push_back(h[j]);
    }
  }

  ThresholdTable table;
  table.gamma.resize(static_cast<std::size_t>(old_classes) + 1);
  for (int k = 1; k <= old_classes; ++k) {
    table.gamma[static_cast<std::size_t>(k)] =
        quantile_threshold(std::move(pools[static_cast<std::size_t>(k)]), rho);
  }
  return table;
}

ThresholdTable compute_thresholds(const std::vector<synth::Sample>& dataset,
                                  const net::NetworkParams& old_model,
                                  const net::NetworkParams& current_model,
                                  double rho) {
  if (dataset.empty()) throw ConfigError("compute_thresholds: empty dataset");
  std::vector<Matrix> old_probs;
  std::vector<Matrix> cur_probs;
  old_probs.reserve(dataset.size());
  cur_probs.reserve(dataset.size());
  for (const synth::Sample& s : dataset) {
    cur_probs.push_back(net::forward(current_model, s.image, s.height, s.width).probs);
    old_probs.push_back(net::forward(old_model, s.image, s.height, s.width).probs);
  }
  return compute_thresholds_from_maps(old_probs, cur_probs, rho);
}

PseudoLabelMap generate_pseudo_labels(const IntVector& train_label,
                                      const Matrix& old_probs,
                                      const Matrix& current_probs,
                                      const ThresholdTable& thresholds) {
  if (old_probs.rows() != train_label.size() ||
      current_probs.rows() != train_label.size()) {
    throw ShapeError("generate_pseudo_labels: map sizes do not match");
  }
  const Vector h = entropy_rows(current_probs);

  PseudoLabelMap out;
  out.labels.resize(train_label.size());
  out.provenance.resize(train_label.size());
  for (Eigen::Index j = 0; j < train_label.size(); ++j) {
    if (train_label[j] != 0) {
      out.labels[j] = train_label[j];
      out.provenance[j] = static_cast<int>(Provenance::kKeptLabel);
      continue;
    }
    Eigen::Index k = 0;
    old_probs.row(j).maxCoeff(&k);
    if (k >= 1 && k <= thresholds.num_old_classes()) {
      const auto& gamma = thresholds.at(static_cast<int>(k));
      if (gamma && h[j] <= *gamma) {
        out.labels[j] = static_cast<int>(k);
        out.provenance[j] = static_cast<int>(Provenance::kPseudoOld);
        continue;
      }
    }
    out.labels[j] = 0;
    out.provenance[j] = static_cast<int>(Provenance::kBackground);
  }
  return out;
}

PseudoLabelMap generate_pseudo_labels_const_threshold(const IntVector& train_label,
                                                      const Matrix& old_probs,
                                                      double prob_threshold) {
  if (old_probs.rows() != train_label.size()) {
    throw ShapeError("generate_pseudo_labels_const_threshold: map sizes do not match");
  }
  PseudoLabelMap out;
  out.labels.resize(train_label.size());
  out.provenance.resize(train_label.size());
  for (Eigen::Index j = 0; j < train_label.size(); ++j) {
    if (train_label[j] != 0) {
      out.labels[j] = train_label[j];
      out.provenance[j] = static_cast<int>(Provenance::kKeptLabel);
      continue;
    }
    Eigen::Index k = 0;
    const Scalar p = old_probs.row(j).maxCoeff(&k);
    if (k >= 1 && p >= prob_threshold) {
      out.labels[j] = static_cast<int>(k);
      out.provenance[j] = static_cast<int>(Provenance::kPseudoOld);
    } else {
      out.labels[j] = 0;
      out.provenance[j] = static_cast<int>(Provenance::kBackground);
    }
  }
  return out;
}

}  // namespace fbl::pseudo
