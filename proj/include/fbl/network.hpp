#ifndef FBL_NETWORK_HPP
#define FBL_NETWORK_HPP

#include "fbl/types.hpp"

namespace fbl::net {

// Architecture descriptor. The head carries one output per class plus
// background; classes_per_task records how the head grew, so the task that
// introduced any class can be recovered from the parameters alone.
struct ShapeSpec {
  int in_channels = 3;
  int kernel = 3;
  std::vector<int> hidden = {8, 16};
  std::vector<int> classes_per_task;

  int num_outputs() const;
  long param_count() const;
  bool operator==(const ShapeSpec&) const = default;
};

// Two same-padded conv layers with tanh, then a 1x1 linear head and a
// per-pixel softmax. Parameters are immutable values; training replaces them
// wholesale through flatten/unflatten.
struct NetworkParams {
  ShapeSpec shape;
  Matrix conv1;        // (kernel^2 * in_channels) x hidden[0]
  Vector bias1;
  Matrix conv2;        // (kernel^2 * hidden[0]) x hidden[1]
  Vector bias2;
  Matrix head_weight;  // hidden[1] x num_outputs
  Vector head_bias;

  int version() const { return static_cast<int>(shape.classes_per_task.size()); }
  int num_outputs() const { return shape.num_outputs(); }
};

struct ForwardTrace {
  int height = 0;
  int width = 0;
  std::vector<Matrix> features;  // post-activation maps, each HW x channels
  Matrix logits;                 // HW x num_outputs
  Matrix probs;                  // row-wise softmax of logits
};

// Seeded Gaussian init for the feature layers (scaled by 1/sqrt(fan_in));
// the head starts at zero so an untrained model is exactly uniform.
NetworkParams init_network(const ShapeSpec& shape, Scalar weight_scale,
                           std::uint64_t seed);

ForwardTrace forward(const NetworkParams& params, const Matrix& image, int height,
                     int width);

// Appends new output neurons without touching existing ones. New weights and
// biases are Gaussian with sigma init_scale (zero when init_scale == 0).
NetworkParams extend_head(const NetworkParams& params, int new_classes,
                          Scalar init_scale, std::uint64_t seed);

// Flat parameter order: conv1, bias1, conv2, bias2, head_weight, head_bias,
// each block in Eigen's column-major coefficient order.
Vector flatten(const NetworkParams& params);
NetworkParams unflatten(const Vector& flat, const ShapeSpec& shape);

// Gradient of a scalar loss with respect to every parameter, given the loss
// gradient at the logits and optionally at each post-activation feature map.
// `trace` must come from forward(params, image, ...).
Vector backward(const NetworkParams& params, const Matrix& image, int height,
                int width, const ForwardTrace& trace, const Matrix& dlogits,
                const std::vector<Matrix>* dfeatures = nullptr);

// im2col with zero padding; row j holds pixel j's receptive field laid out as
// (dy, dx, channel). col2im_add is its transpose (scatter-add).
Matrix im2col(const Matrix& img, int height, int width, int channels, int kernel);
Matrix col2im_add(const Matrix& cols, int height, int width, int channels,
                  int kernel);

// Checkpoint = JSON header (shape + version) followed by the raw flat vector.
void save_checkpoint(const std::string& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::string& path);

}  // namespace fbl::net

#endif  // FBL_NETWORK_HPP
