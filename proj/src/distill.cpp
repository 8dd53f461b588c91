#include "fbl/distill.hpp"

namespace fbl::distill {

PooledSignature pooled_signature(const net::ForwardTrace& trace) {
  if (trace.features.empty()) throw ShapeError("pooled_signature: trace has no features");
  const int h = trace.height, w = trace.width;
  PooledSignature sig;
  for (const Matrix& f : trace.features) {
    const Eigen::Index c = f.cols();
    Vector wm = Vector::Zero(static_cast<Eigen::Index>(h) * c);
    Vector hm = Vector::Zero(static_cast<Eigen::Index>(w) * c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Eigen::Index j = static_cast<Eigen::Index>(y) * w + x;
        wm.segment(static_cast<Eigen::Index>(y) * c, c) += f.row(j) / Scalar(w);
        hm.segment(static_cast<Eigen::Index>(x) * c, c) += f.row(j) / Scalar(h);
      }
    }
    sig.width_mean.push_back(std::move(wm));
    sig.height_mean.push_back(std::move(hm));
  }
  return sig;
}

Scalar pod_loss(const PooledSignature& current, const PooledSignature& old_sig) {
  if (current.width_mean.size() != old_sig.width_mean.size()) {
    throw ShapeError("pod_loss: layer count mismatch");
  }
  Scalar loss = 0;
  for (std::size_t l = 0; l < current.width_mean.size(); ++l) {
    if (current.width_mean[l].size() != old_sig.width_mean[l].size() ||
        current.height_mean[l].size() != old_sig.height_mean[l].size()) {
      throw ShapeError("pod_loss: pooled dimensions mismatch at layer " +
                       std::to_string(l));
    }
    loss += (current.width_mean[l] - old_sig.width_mean[l]).squaredNorm();
    loss += (current.height_mean[l] - old_sig.height_mean[l]).squaredNorm();
  }
  return loss;
}

Scalar pod_loss(const net::ForwardTrace& current, const net::ForwardTrace& old_trace) {
  return pod_loss(pooled_signature(current), pooled_signature(old_trace));
}

Scalar pod_loss_batch(const std::vector<net::ForwardTrace>& current,
                      const std::vector<PooledSignature>& old_sigs) {
  if (current.size() != old_sigs.size() || current.empty()) {
    throw ShapeError("pod_loss_batch: batch size mismatch");
  }
  Scalar loss = 0;
  for (std::size_t i = 0; i < current.size(); ++i) {
    loss += pod_loss(pooled_signature(current[i]), old_sigs[i]);
  }
  return loss / static_cast<Scalar>(current.size());
}

std::vector<Matrix> pod_feature_gradient(const net::ForwardTrace& current,
                                         const PooledSignature& old_sig) {
  const PooledSignature cur = pooled_signature(current);
  const int h = current.height, w = current.width;
  std::vector<Matrix> grads;
  for (std::size_t l = 0; l < current.features.size(); ++l) {
    const Matrix& f = current.features[l];
    const Eigen::Index c = f.cols();
    const Vector dw = 2.0 * (cur.width_mean[l] - old_sig.width_mean[l]);
    const Vector dh = 2.0 * (cur.height_mean[l] - old_sig.height_mean[l]);
    Matrix g = Matrix::Zero(f.rows(), c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Eigen::Index j = static_cast<Eigen::Index>(y) * w + x;
        g.row(j) = dw.segment(static_cast<Eigen::Index>(y) * c, c).transpose() / Scalar(w) +
                   dh.segment(static_cast<Eigen::Index>(x) * c, c).transpose() / Scalar(h);
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace fbl::distill
