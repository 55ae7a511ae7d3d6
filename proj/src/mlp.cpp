#include "mlp.hpp"

#include <cmath>

#include "error.hpp"

namespace contmgr {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  require(sizes_.size() >= 2, "mlp: need at least input and output sizes");
  Eigen::Index total = 0;
  for (int l = 0; l < num_layers(); ++l) {
    require(sizes_[l] > 0 && sizes_[l + 1] > 0, "mlp: layer sizes must be positive");
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Vector::Zero(total);
}

Mlp::Mlp(std::vector<int> sizes, Rng& rng, double out_gain)
    : Mlp(std::move(sizes)) {
  for (int l = 0; l < num_layers(); ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    const double gain = l + 1 == num_layers() ? out_gain : 1.0;
    const double bound = gain * std::sqrt(3.0 / in);
    double* w = params_.data() + offsets_[l];
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(in) * out; ++k)
      w[k] = rng.uniform(-bound, bound);
  }
}

Eigen::Map<const Mlp::RowMajor> Mlp::weight(int layer) const {
  return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
}

Eigen::Map<const Vector> Mlp::bias(int layer) const {
  return {params_.data() + offsets_[layer] +
              static_cast<Eigen::Index>(sizes_[layer + 1]) * sizes_[layer],
          sizes_[layer + 1]};
}

Vector Mlp::forward(std::span<const double> x) const {
  require(static_cast<int>(x.size()) == input_size(),
          "mlp: input has length " + std::to_string(x.size()) + ", expected " +
              std::to_string(input_size()));
  Vector h = Eigen::Map<const Vector>(x.data(), input_size());
  for (int l = 0; l < num_layers(); ++l) {
    Vector z = weight(l) * h + bias(l);
    h = l + 1 == num_layers() ? std::move(z) : Vector(z.array().tanh());
  }
  return h;
}

Matrix Mlp::forward(const Matrix& x, Cache* cache) const {
  require(x.rows() == input_size(), "mlp: batch has wrong input dimension");
  if (cache) {
    cache->activations.resize(sizes_.size());
    cache->activations[0] = x;
  }
  Matrix h = x;
  for (int l = 0; l < num_layers(); ++l) {
    Matrix z = weight(l) * h;
    z.colwise() += bias(l);
    if (l + 1 < num_layers()) z = z.array().tanh();
    h = std::move(z);
    if (cache) cache->activations[l + 1] = h;
  }
  return h;
}

void Mlp::backward(const Cache& cache, const Matrix& d_out, Vector& grad) const {
  grad = Vector::Zero(params_.size());
  Matrix delta = d_out;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const Matrix& in = cache.activations[l];
    const int rows = sizes_[l + 1], cols = sizes_[l];
    Eigen::Map<RowMajor> gw(grad.data() + offsets_[l], rows, cols);
    Eigen::Map<Vector> gb(grad.data() + offsets_[l] +
                              static_cast<Eigen::Index>(rows) * cols,
                          rows);
    gw.noalias() = delta * in.transpose();
    gb = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = weight(l).transpose() * delta;
      // tanh' = 1 - tanh^2, evaluated on the stored activation
      delta = back.array() * (1.0 - in.array().square());
    }
  }
}

}  // namespace contmgr
