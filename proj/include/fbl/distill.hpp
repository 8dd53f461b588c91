#ifndef FBL_DISTILL_HPP
#define FBL_DISTILL_HPP

#include "fbl/network.hpp"
#include "fbl/types.hpp"

namespace fbl::distill {

// Per feature layer: channel means along the width (one entry per row and
// channel, laid out row-major) and along the height (per column and channel).
struct PooledSignature {
  std::vector<Vector> width_mean;   // layer -> size height * channels
  std::vector<Vector> height_mean;  // layer -> size width * channels
};

PooledSignature pooled_signature(const net::ForwardTrace& trace);

// Sum over layers of squared Euclidean distance between pooled signatures.
Scalar pod_loss(const net::ForwardTrace& current, const net::ForwardTrace& old_trace);
Scalar pod_loss(const PooledSignature& current, const PooledSignature& old_sig);

// Batch form: mean over per-sample losses.
Scalar pod_loss_batch(const std::vector<net::ForwardTrace>& current,
                      const std::vector<PooledSignature>& old_sigs);

// d pod_loss / d feature map, one matrix per layer (single sample).
std::vector<Matrix> pod_feature_gradient(const net::ForwardTrace& current,
                                         const PooledSignature& old_sig);

}  // namespace fbl::distill

#endif  // FBL_DISTILL_HPP
