#include "fbl/losses.hpp"

#include <cmath>

namespace fbl::losses {
namespace {

Scalar pixel_ce(const Matrix& probs, Eigen::Index j, int label) {
  if (label < 0 || label >= probs.cols()) {
    throw DataError("cross-entropy: label " + std::to_string(label) + " out of range");
  }
  return -std::log(std::max(probs(j, label), kProbFloor));
}

std::map<int, Scalar> frozen_relation_weights(const GradientStats& stats,
                                              const ClassTaskMap& task_map) {
  std::map<int, Scalar> weights;
  for (int k = 1; k <= task_map.total_classes(); ++k) {
    if (k >= static_cast<int>(stats.class_means.size())) break;
    const auto& class_mean = stats.class_means[static_cast<std::size_t>(k)];
    if (!class_mean) continue;
    const int task = task_map.task_of(k);
    std::optional<Scalar> task_mean;
    if (task >= 1 && task <= static_cast<int>(stats.task_means.size())) {
      task_mean = stats.task_means[static_cast<std::size_t>(task - 1)];
    }
    weights[k] = (task_mean && *task_mean > 0) ? *class_mean / *task_mean : Scalar(1);
  }
  return weights;
}

}  // namespace

Scalar segmentation_loss(const std::vector<Matrix>& probs,
                         const std::vector<IntVector>& labels) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw ShapeError("segmentation_loss: batch size mismatch");
  }
  Scalar loss = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].rows() != labels[i].size()) {
      throw ShapeError("segmentation_loss: pixel count mismatch");
    }
    for (Eigen::Index j = 0; j < labels[i].size(); ++j) {
      loss += pixel_ce(probs[i], j, labels[i][j]);
    }
  }
  return loss / static_cast<Scalar>(probs.size());
}

Scalar gradient_scalar(Scalar prob_of_label_class) {
  if (prob_of_label_class < 0 || prob_of_label_class > 1) {
    throw DataError("gradient_scalar: probability outside [0, 1]");
  }
  return prob_of_label_class - 1;
}

Scalar adaptive_gradient_scalar(Scalar gamma, int pixel_class, int num_old_classes,
                                int local_old, int local_new) {
  const Scalar mag = std::min(std::abs(gamma), Scalar(1));
  if (pixel_class >= 1 && pixel_class <= num_old_classes) {
    const int denom = local_old + local_new;
    const Scalar exponent = denom > 0 ? Scalar(local_old) / denom : Scalar(0);
    return std::pow(mag, exponent);
  }
  return mag;
}

Vector adaptive_scalars(const Matrix& probs, const IntVector& labels,
                        int num_old_classes, int local_old, int local_new) {
  if (probs.rows() != labels.size()) {
    throw ShapeError("adaptive_scalars: pixel count mismatch");
  }
  Vector out(labels.size());
  for (Eigen::Index j = 0; j < labels.size(); ++j) {
    const int k = labels[j];
    if (k < 0 || k >= probs.cols()) {
      throw DataError("adaptive_scalars: label out of range");
    }
    out[j] = adaptive_gradient_scalar(gradient_scalar(probs(j, k)), k,
                                      num_old_classes, local_old, local_new);
  }
  return out;
}

GradientStats gradient_means(const std::vector<Vector>& scalars,
                             const std::vector<IntVector>& labels,
                             const ClassTaskMap& task_map) {
  if (scalars.size() != labels.size()) {
    throw ShapeError("gradient_means: batch size mismatch");
  }
  GradientStats stats;
  stats.task_means.resize(static_cast<std::size_t>(task_map.num_tasks));
  stats.task_counts.assign(static_cast<std::size_t>(task_map.num_tasks), 0);
  stats.class_means.resize(static_cast<std::size_t>(task_map.total_classes()) + 1);
  stats.class_counts.assign(static_cast<std::size_t>(task_map.total_classes()) + 1, 0);

  Scalar bg_sum = 0;
  std::vector<Scalar> task_sums(static_cast<std::size_t>(task_map.num_tasks), 0);
  std::vector<Scalar> class_sums(static_cast<std::size_t>(task_map.total_classes()) + 1,
                                 0);

  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].size() != labels[i].size()) {
      throw ShapeError("gradient_means: pixel count mismatch");
    }
    for (Eigen::Index j = 0; j < labels[i].size(); ++j) {
      const int k = labels[i][j];
      const Scalar v = scalars[i][j];
      if (k == 0) {
        bg_sum += v;
        ++stats.background_count;
      } else {
        const int task = task_map.task_of(k);
        task_sums[static_cast<std::size_t>(task - 1)] += v;
        ++stats.task_counts[static_cast<std::size_t>(task - 1)];
        class_sums[static_cast<std::size_t>(k)] += v;
        ++stats.class_counts[static_cast<std::size_t>(k)];
      }
    }
  }

  if (stats.background_count > 0) stats.background_mean = bg_sum / stats.background_count;
  for (std::size_t t = 0; t < task_sums.size(); ++t) {
    if (stats.task_counts[t] > 0) stats.task_means[t] = task_sums[t] / stats.task_counts[t];
  }
  for (std::size_t k = 0; k < class_sums.size(); ++k) {
    if (stats.class_counts[k] > 0) stats.class_means[k] = class_sums[k] / stats.class_counts[k];
  }
  return stats;
}

Vector balanced_weights(const Vector& scalars, const IntVector& labels,
                        const GradientStats& stats, const ClassTaskMap& task_map) {
  if (scalars.size() != labels.size()) {
    throw ShapeError("balanced_weights: pixel count mismatch");
  }
  Vector out(labels.size());
  for (Eigen::Index j = 0; j < labels.size(); ++j) {
    const int k = labels[j];
    std::optional<Scalar> mean;
    if (k == 0) {
      mean = stats.background_mean;
    } else {
      const int task = task_map.task_of(k);
      if (task >= 1 && task <= static_cast<int>(stats.task_means.size())) {
        mean = stats.task_means[static_cast<std::size_t>(task - 1)];
      }
    }
    out[j] = (mean && *mean > 0) ? scalars[j] / *mean : Scalar(1);
  }
  return out;
}

Scalar balanced_seg_loss(const std::vector<Matrix>& probs,
                         const std::vector<IntVector>& labels,
                         const std::vector<Vector>& weights) {
  if (probs.size() != labels.size() || probs.size() != weights.size() || probs.empty()) {
    throw ShapeError("balanced_seg_loss: batch size mismatch");
  }
  Scalar loss = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    for (Eigen::Index j = 0; j < labels[i].size(); ++j) {
      loss += weights[i][j] * pixel_ce(probs[i], j, labels[i][j]);
    }
  }
  return loss / static_cast<Scalar>(probs.size());
}

Scalar balanced_seg_loss(const std::vector<Matrix>& probs,
                         const std::vector<IntVector>& labels,
                         const std::vector<Vector>& scalars,
                         const GradientStats& stats, const ClassTaskMap& task_map) {
  std::vector<Vector> weights;
  weights.reserve(scalars.size());
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    weights.push_back(balanced_weights(scalars[i], labels[i], stats, task_map));
  }
  return balanced_seg_loss(probs, labels, weights);
}

Vector relation_label(int label, const Vector& old_probs, int total_outputs) {
  const Eigen::Index old_size = old_probs.size();
  if (total_outputs < old_size) {
    throw ShapeError("relation_label: output count below old class count");
  }
  if (label < 0 || label >= total_outputs) {
    throw DataError("relation_label: label out of range");
  }
  Vector v = Vector::Zero(total_outputs);
  v.head(old_size) = old_probs;
  if (label >= old_size) v[label] = 1;
  const Scalar sum = v.sum();
  if (sum > 0) v /= sum;
  return v;
}

RelationshipPrototypes class_prototypes(const std::vector<Matrix>& probs,
                                        const std::vector<Matrix>& relation_labels,
                                        const std::vector<IntVector>& labels) {
  if (probs.size() != relation_labels.size() || probs.size() != labels.size()) {
    throw ShapeError("class_prototypes: batch size mismatch");
  }
  RelationshipPrototypes out;
  if (probs.empty()) return out;
  out.total_outputs = static_cast<int>(probs[0].cols());

  std::map<int, ClassPrototype> acc;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    for (Eigen::Index j = 0; j < labels[i].size(); ++j) {
      const int k = labels[i][j];
      auto [it, inserted] = acc.try_emplace(k);
      ClassPrototype& proto = it->second;
      if (inserted) {
        proto.prob_mean = Vector::Zero(out.total_outputs);
        proto.label_mean = Vector::Zero(out.total_outputs);
      }
      proto.prob_mean += probs[i].row(j).transpose();
      proto.label_mean += relation_labels[i].row(j).transpose();
      ++proto.count;
    }
  }
  for (auto& [k, proto] : acc) {
    proto.prob_mean /= static_cast<Scalar>(proto.count);
    proto.label_mean /= static_cast<Scalar>(proto.count);
  }
  out.by_class = std::move(acc);
  return out;
}

Scalar relation_loss(const RelationshipPrototypes& prototypes,
                     const GradientStats& stats, const ClassTaskMap& task_map) {
  const int foreground = task_map.total_classes();
  if (foreground == 0) return 0;
  const std::map<int, Scalar> weights = frozen_relation_weights(stats, task_map);
  Scalar loss = 0;
  for (const auto& [k, proto] : prototypes.by_class) {
    if (k == 0) continue;
    const auto it = weights.find(k);
    const Scalar w = it == weights.end() ? Scalar(1) : it->second;
    loss += w * kl_divergence(proto.prob_mean, proto.label_mean);
  }
  return loss / foreground;
}

// ---------------------------------------------------------------------------
// BatchObjective
// ---------------------------------------------------------------------------

BatchObjective BatchObjective::plain(std::vector<const synth::Sample*> batch,
                                     const net::NetworkParams& params) {
  if (batch.empty()) throw ConfigError("BatchObjective: empty batch");
  BatchObjective obj;
  obj.batch_ = std::move(batch);
  obj.frozen_params_ = params;
  obj.options_.lambda1 = 0;
  obj.options_.lambda2 = 0;
  obj.options_.reweight = false;
  obj.options_.labels = LabelSource::kTraining;
  obj.incremental_ = false;

  for (const synth::Sample* s : obj.batch_) {
    obj.labels_.push_back(s->train_label);
    obj.provenance_.push_back(IntVector::Zero(s->train_label.size()));
    obj.weights_.push_back(Vector::Ones(s->train_label.size()));
  }
  const Eval ev = obj.evaluate(params);
  obj.parts_ = {ev.weighted_seg, ev.relation, ev.pod, ev.total};
  return obj;
}

BatchObjective BatchObjective::incremental(std::vector<const synth::Sample*> batch,
                                           const net::NetworkParams& params,
                                           const net::NetworkParams& old_model,
                                           const pseudo::ThresholdTable* thresholds,
                                           const ObjectiveOptions& options) {
  if (batch.empty()) throw ConfigError("BatchObjective: empty batch");
  if (old_model.num_outputs() > params.num_outputs()) {
    throw ProtocolError("BatchObjective: old model cannot predict more classes");
  }
  BatchObjective obj;
  obj.batch_ = std::move(batch);
  obj.frozen_params_ = params;
  obj.options_ = options;
  obj.incremental_ = true;

  const int num_old = old_model.num_outputs() - 1;
  const ClassTaskMap task_map =
      ClassTaskMap::from_counts(params.shape.classes_per_task);

  std::vector<Matrix> cur_probs;
  std::vector<Matrix> old_probs;
  std::vector<Vector> scalars;
  for (const synth::Sample* s : obj.batch_) {
    net::ForwardTrace cur = net::forward(params, s->image, s->height, s->width);
    net::ForwardTrace old = net::forward(old_model, s->image, s->height, s->width);

    pseudo::PseudoLabelMap pl;
    switch (options.labels) {
      case LabelSource::kTraining:
        pl.labels = s->train_label;
        pl.provenance = IntVector::Zero(s->train_label.size());
        break;
      case LabelSource::kPseudoAdaptive:
        if (!thresholds) {
          throw ProtocolError("BatchObjective: adaptive labels need thresholds");
        }
        pl = pseudo::generate_pseudo_labels(s->train_label, old.probs, cur.probs,
                                            *thresholds);
        break;
      case LabelSource::kPseudoConstProb:
        pl = pseudo::generate_pseudo_labels_const_threshold(
            s->train_label, old.probs, options.const_prob_threshold);
        break;
    }
    obj.labels_.push_back(pl.labels);
    obj.provenance_.push_back(pl.provenance);
    scalars.push_back(adaptive_scalars(cur.probs, pl.labels, num_old,
                                       options.local_old_classes,
                                       options.local_new_classes));

    if (options.lambda2 != 0) {
      obj.old_signatures_.push_back(distill::pooled_signature(old));
    }
    cur_probs.push_back(std::move(cur.probs));
    old_probs.push_back(std::move(old.probs));
  }

  const GradientStats stats = gradient_means(scalars, obj.labels_, task_map);
  for (std::size_t i = 0; i < obj.batch_.size(); ++i) {
    obj.weights_.push_back(
        options.reweight
            ? balanced_weights(scalars[i], obj.labels_[i], stats, task_map)
            : Vector::Ones(obj.labels_[i].size()));
  }

  if (options.lambda1 != 0) {
    obj.relation_weights_ = frozen_relation_weights(stats, task_map);
    for (std::size_t i = 0; i < obj.batch_.size(); ++i) {
      const IntVector& lab = obj.labels_[i];
      Matrix rel(lab.size(), params.num_outputs());
      for (Eigen::Index j = 0; j < lab.size(); ++j) {
        rel.row(j) = relation_label(lab[j], old_probs[i].row(j).transpose(),
                                    params.num_outputs())
                         .transpose();
      }
      obj.relation_labels_.push_back(std::move(rel));
    }
  }

  const Eval ev = obj.evaluate(params);
  obj.parts_ = {ev.weighted_seg, ev.relation, ev.pod, ev.total};
  return obj;
}

BatchObjective::Eval BatchObjective::evaluate(const net::NetworkParams& params) const {
  Eval ev;
  std::vector<Matrix> probs;
  for (const synth::Sample* s : batch_) {
    ev.traces.push_back(net::forward(params, s->image, s->height, s->width));
    probs.push_back(ev.traces.back().probs);
  }

  if (options_.include_seg) {
    ev.weighted_seg = balanced_seg_loss(probs, labels_, weights_);
  }

  if (options_.lambda1 != 0) {
    ev.prototypes = class_prototypes(probs, relation_labels_, labels_);
    const int foreground =
        ClassTaskMap::from_counts(params.shape.classes_per_task).total_classes();
    Scalar rel = 0;
    for (const auto& [k, proto] : ev.prototypes.by_class) {
      if (k == 0) continue;
      const auto it = relation_weights_.find(k);
      const Scalar w = it == relation_weights_.end() ? Scalar(1) : it->second;
      rel += w * kl_divergence(proto.prob_mean, proto.label_mean);
    }
    ev.relation = foreground > 0 ? rel / foreground : 0;
  }

  if (options_.lambda2 != 0) {
    ev.pod = distill::pod_loss_batch(ev.traces, old_signatures_);
  }

  ev.total = ev.weighted_seg + options_.lambda1 * ev.relation +
             options_.lambda2 * ev.pod;
  return ev;
}

Scalar BatchObjective::value(const net::NetworkParams& params) const {
  return evaluate(params).total;
}

Vector BatchObjective::gradient() const {
  const net::NetworkParams& params = frozen_params_;
  const Eval ev = evaluate(params);
  const Scalar batch = static_cast<Scalar>(batch_.size());
  const int outputs = params.num_outputs();
  const int foreground =
      ClassTaskMap::from_counts(params.shape.classes_per_task).total_classes();

  // Per-class coefficient of the relation term w.r.t. the prototype entries.
  std::map<int, Vector> relation_coef;
  if (options_.lambda1 != 0) {
    for (const auto& [k, proto] : ev.prototypes.by_class) {
      if (k == 0 || foreground == 0) continue;
      const auto it = relation_weights_.find(k);
      const Scalar w = it == relation_weights_.end() ? Scalar(1) : it->second;
      Vector coef(outputs);
      for (int c = 0; c < outputs; ++c) {
        const Scalar p = std::max(proto.prob_mean[c], kProbFloor);
        const Scalar q = std::max(proto.label_mean[c], kProbFloor);
        coef[c] = std::log(p / q) + 1;
      }
      relation_coef[k] = (options_.lambda1 * w /
                          (static_cast<Scalar>(foreground) * proto.count)) *
                         coef;
    }
  }

  Vector grad = Vector::Zero(params.shape.param_count());
  for (std::size_t i = 0; i < batch_.size(); ++i) {
    const synth::Sample* s = batch_[i];
    const net::ForwardTrace& trace = ev.traces[i];
    Matrix dlogits = Matrix::Zero(trace.logits.rows(), outputs);

    for (Eigen::Index j = 0; j < labels_[i].size(); ++j) {
      const int label = labels_[i][j];
      if (options_.include_seg) {
        const Scalar w = weights_[i][j] / batch;
        dlogits.row(j) += w * trace.probs.row(j);
        dlogits(j, label) -= w;
      }
      if (options_.lambda1 != 0 && label >= 1) {
        const auto it = relation_coef.find(label);
        if (it != relation_coef.end()) {
          // Softmax Jacobian applied to the prototype-mean coefficients.
          const Vector& g = it->second;
          const Scalar dot = g.dot(trace.probs.row(j).transpose());
          dlogits.row(j) +=
              (trace.probs.row(j).array() * (g.transpose().array() - dot)).matrix();
        }
      }
    }

    if (options_.lambda2 != 0) {
      std::vector<Matrix> dfeat = distill::pod_feature_gradient(trace, old_signatures_[i]);
      for (Matrix& m : dfeat) m *= options_.lambda2 / batch;
      grad += net::backward(params, s->image, s->height, s->width, trace, dlogits,
                            &dfeat);
    } else {
      grad += net::backward(params, s->image, s->height, s->width, trace, dlogits);
    }
  }
  return grad;
}

Scalar total_objective(const std::vector<const synth::Sample*>& batch,
                       const net::NetworkParams& params,
                       const net::NetworkParams* old_model, int task_index,
                       const pseudo::ThresholdTable* thresholds,
                       const ObjectiveOptions& options) {
  if (task_index < 1) throw ConfigError("total_objective: task index must be >= 1");
  if (task_index == 1) {
    return BatchObjective::plain(batch, params).parts().total;
  }
  if (!old_model) {
    throw ProtocolError("total_objective: incremental task without an old model");
  }
  return BatchObjective::incremental(batch, params, *old_model, thresholds, options)
      .parts()
      .total;
}

}  // namespace fbl::losses
