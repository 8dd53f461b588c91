#include "fbl/network.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace fbl::net {
namespace {

using json = nlohmann::json;

void check_shape(const ShapeSpec& s) {
  if (s.in_channels < 1 || s.kernel < 1 || s.kernel % 2 == 0) {
    throw ConfigError("ShapeSpec: channels must be >= 1 and kernel odd");
  }
  if (s.hidden.size() != 2 || s.hidden[0] < 1 || s.hidden[1] < 1) {
    throw ConfigError("ShapeSpec: exactly two feature layers expected");
  }
  if (s.classes_per_task.empty()) {
    throw ConfigError("ShapeSpec: classes_per_task must not be empty");
  }
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Scalar sigma, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = sigma * gaussian(rng);
  }
  return m;
}

void append_block(Vector& flat, Eigen::Index& pos, const Matrix& m) {
  Eigen::Map<const Vector> v(m.data(), m.size());
  flat.segment(pos, m.size()) = v;
  pos += m.size();
}

void append_block(Vector& flat, Eigen::Index& pos, const Vector& v) {
  flat.segment(pos, v.size()) = v;
  pos += v.size();
}

Matrix take_matrix(const Vector& flat, Eigen::Index& pos, Eigen::Index rows,
                   Eigen::Index cols) {
  Matrix m(rows, cols);
  Eigen::Map<Vector>(m.data(), m.size()) = flat.segment(pos, rows * cols);
  pos += rows * cols;
  return m;
}

Vector take_vector(const Vector& flat, Eigen::Index& pos, Eigen::Index n) {
  Vector v = flat.segment(pos, n);
  pos += n;
  return v;
}

}  // namespace

int ShapeSpec::num_outputs() const {
  int n = 1;
  for (int k : classes_per_task) n += k;
  return n;
}

long ShapeSpec::param_count() const {
  const long k2 = static_cast<long>(kernel) * kernel;
  const long c = num_outputs();
  return k2 * in_channels * hidden[0] + hidden[0] +
         k2 * hidden[0] * hidden[1] + hidden[1] +
         static_cast<long>(hidden[1]) * c + c;
}

NetworkParams init_network(const ShapeSpec& shape, Scalar weight_scale,
                           std::uint64_t seed) {
  check_shape(shape);
  Rng rng(mix_seed(seed, 0x11e7));
  const int k2 = shape.kernel * shape.kernel;
  NetworkParams p;
  p.shape = shape;
  p.conv1 = gaussian_matrix(k2 * shape.in_channels, shape.hidden[0],
                            weight_scale / std::sqrt(Scalar(k2 * shape.in_channels)),
                            rng);
  p.bias1 = Vector::Zero(shape.hidden[0]);
  p.conv2 = gaussian_matrix(k2 * shape.hidden[0], shape.hidden[1],
                            weight_scale / std::sqrt(Scalar(k2 * shape.hidden[0])),
                            rng);
  p.bias2 = Vector::Zero(shape.hidden[1]);
  p.head_weight = Matrix::Zero(shape.hidden[1], shape.num_outputs());
  p.head_bias = Vector::Zero(shape.num_outputs());
  return p;
}

Matrix im2col(const Matrix& img, int height, int width, int channels, int kernel) {
  if (img.rows() != static_cast<Eigen::Index>(height) * width ||
      img.cols() != channels) {
    throw ShapeError("im2col: image dimensions do not match");
  }
  const int pad = kernel / 2;
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(height) * width,
                            static_cast<Eigen::Index>(kernel) * kernel * channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Index row = static_cast<Eigen::Index>(y) * width + x;
      for (int dy = 0; dy < kernel; ++dy) {
        const int sy = y + dy - pad;
        if (sy < 0 || sy >= height) continue;
        for (int dx = 0; dx < kernel; ++dx) {
          const int sx = x + dx - pad;
          if (sx < 0 || sx >= width) continue;
          out.row(row).segment((static_cast<Eigen::Index>(dy) * kernel + dx) * channels,
                               channels) =
              img.row(static_cast<Eigen::Index>(sy) * width + sx);
        }
      }
    }
  }
  return out;
}

Matrix col2im_add(const Matrix& cols, int height, int width, int channels,
                  int kernel) {
  const int pad = kernel / 2;
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(height) * width, channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Index row = static_cast<Eigen::Index>(y) * width + x;
      for (int dy = 0; dy < kernel; ++dy) {
        const int sy = y + dy - pad;
        if (sy < 0 || sy >= height) continue;
        for (int dx = 0; dx < kernel; ++dx) {
          const int sx = x + dx - pad;
          if (sx < 0 || sx >= width) continue;
          out.row(static_cast<Eigen::Index>(sy) * width + sx) +=
              cols.row(row).segment(
                  (static_cast<Eigen::Index>(dy) * kernel + dx) * channels, channels);
        }
      }
    }
  }
  return out;
}

ForwardTrace forward(const NetworkParams& params, const Matrix& image, int height,
                     int width) {
  const ShapeSpec& s = params.shape;
  if (image.rows() != static_cast<Eigen::Index>(height) * width ||
      image.cols() != s.in_channels) {
    throw ShapeError("forward: image dimensions do not match network input");
  }
  ForwardTrace t;
  t.height = height;
  t.width = width;

  Matrix z1 = im2col(image, height, width, s.in_channels, s.kernel) * params.conv1;
  z1.rowwise() += params.bias1.transpose();
  Matrix f1 = z1.array().tanh();

  Matrix z2 = im2col(f1, height, width, s.hidden[0], s.kernel) * params.conv2;
  z2.rowwise() += params.bias2.transpose();
  Matrix f2 = z2.array().tanh();

  t.logits = f2 * params.head_weight;
  t.logits.rowwise() += params.head_bias.transpose();
  t.probs = softmax_rows(t.logits);
  t.features.push_back(std::move(f1));
  t.features.push_back(std::move(f2));
  return t;
}

NetworkParams extend_head(const NetworkParams& params, int new_classes,
                          Scalar init_scale, std::uint64_t seed) {
  if (new_classes < 1) throw ConfigError("extend_head: new class count must be >= 1");
  Rng rng(mix_seed(seed, 0x43ad));
  NetworkParams out = params;
  const Eigen::Index old_c = params.head_weight.cols();
  out.head_weight.conservativeResize(Eigen::NoChange, old_c + new_classes);
  out.head_bias.conservativeResize(old_c + new_classes);
  for (Eigen::Index c = old_c; c < old_c + new_classes; ++c) {
    for (Eigen::Index r = 0; r < out.head_weight.rows(); ++r) {
      out.head_weight(r, c) = init_scale * gaussian(rng);
    }
    out.head_bias[c] = init_scale * gaussian(rng);
  }
  out.shape.classes_per_task.push_back(new_classes);
  return out;
}

Vector flatten(const NetworkParams& params) {
  Vector flat(params.shape.param_count());
  Eigen::Index pos = 0;
  append_block(flat, pos, params.conv1);
  append_block(flat, pos, params.bias1);
  append_block(flat, pos, params.conv2);
  append_block(flat, pos, params.bias2);
  append_block(flat, pos, params.head_weight);
  append_block(flat, pos, params.head_bias);
  return flat;
}

NetworkParams unflatten(const Vector& flat, const ShapeSpec& shape) {
  check_shape(shape);
  if (flat.size() != shape.param_count()) {
    throw ShapeError("unflatten: expected " + std::to_string(shape.param_count()) +
                     " parameters, got " + std::to_string(flat.size()));
  }
  const int k2 = shape.kernel * shape.kernel;
  NetworkParams p;
  p.shape = shape;
  Eigen::Index pos = 0;
  p.conv1 = take_matrix(flat, pos, k2 * shape.in_channels, shape.hidden[0]);
  p.bias1 = take_vector(flat, pos, shape.hidden[0]);
  p.conv2 = take_matrix(flat, pos, k2 * shape.hidden[0], shape.hidden[1]);
  p.bias2 = take_vector(flat, pos, shape.hidden[1]);
  p.head_weight = take_matrix(flat, pos, shape.hidden[1], shape.num_outputs());
  p.head_bias = take_vector(flat, pos, shape.num_outputs());
  return p;
}

Vector backward(const NetworkParams& params, const Matrix& image, int height,
                int width, const ForwardTrace& trace, const Matrix& dlogits,
                const std::vector<Matrix>* dfeatures) {
  const ShapeSpec& s = params.shape;
  if (dlogits.rows() != trace.logits.rows() || dlogits.cols() != trace.logits.cols()) {
    throw ShapeError("backward: dlogits does not match trace");
  }
  const Matrix& f1 = trace.features[0];
  const Matrix& f2 = trace.features[1];

  NetworkParams g;
  g.shape = s;
  g.head_weight = f2.transpose() * dlogits;
  g.head_bias = dlogits.colwise().sum().transpose();

  Matrix df2 = dlogits * params.head_weight.transpose();
  if (dfeatures && dfeatures->size() > 1 && (*dfeatures)[1].size() > 0) {
    df2 += (*dfeatures)[1];
  }
  Matrix dz2 = df2.array() * (1.0 - f2.array().square());

  const Matrix cols2 = im2col(f1, height, width, s.hidden[0], s.kernel);
  g.conv2 = cols2.transpose() * dz2;
  g.bias2 = dz2.colwise().sum().transpose();

  Matrix df1 = col2im_add(dz2 * params.conv2.transpose(), height, width, s.hidden[0],
                          s.kernel);
  if (dfeatures && !dfeatures->empty() && (*dfeatures)[0].size() > 0) {
    df1 += (*dfeatures)[0];
  }
  Matrix dz1 = df1.array() * (1.0 - f1.array().square());

  const Matrix cols1 = im2col(image, height, width, s.in_channels, s.kernel);
  g.conv1 = cols1.transpose() * dz1;
  g.bias1 = dz1.colwise().sum().transpose();

  return flatten(g);
}

void save_checkpoint(const std::string& path, const NetworkParams& params) {
  json header;
  header["in_channels"] = params.shape.in_channels;
  header["kernel"] = params.shape.kernel;
  header["hidden"] = params.shape.hidden;
  header["classes_per_task"] = params.shape.classes_per_task;
  header["version"] = params.version();
  header["param_count"] = params.shape.param_count();
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  const Vector flat = flatten(params);
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(sizeof(Scalar) * flat.size()));
  if (!out) throw DataError("save_checkpoint: short write to " + path);
}

NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  if (!in) throw DataError("load_checkpoint: truncated header in " + path);
  json header = json::parse(htext);

  ShapeSpec shape;
  shape.in_channels = header.at("in_channels").get<int>();
  shape.kernel = header.at("kernel").get<int>();
  shape.hidden = header.at("hidden").get<std::vector<int>>();
  shape.classes_per_task = header.at("classes_per_task").get<std::vector<int>>();

  Vector flat(shape.param_count());
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(sizeof(Scalar) * flat.size()));
  if (!in) throw DataError("load_checkpoint: truncated parameters in " + path);
  return unflatten(flat, shape);
}

}  // namespace fbl::net
