#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rng.hpp"

namespace contmgr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Feed-forward network with tanh hidden layers and a linear output layer.
//
// All parameters live in one flat vector, layer by layer: the weight matrix
// (out x in, row-major) followed by the bias vector. That vector is what the
// optimizer, the freeze logic and the weight file operate on.
class Mlp {
 public:
  // Activations of one batched forward pass, kept for backprop.
  struct Cache {
    std::vector<Matrix> activations;  // [0] = input, back() = output
  };

  Mlp() = default;
  explicit Mlp(std::vector<int> sizes);
  // Uniform fan-in init scaled by `gain`; the output layer uses `out_gain`.
  Mlp(std::vector<int> sizes, Rng& rng, double out_gain);

  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  Eigen::Index num_params() const { return params_.size(); }

  // Single input (column vector).
  Vector forward(std::span<const double> x) const;
  // Batch: one column per sample.
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  // Gradient of sum(d_out .* output) w.r.t. params, written to `grad`
  // (resized and overwritten).
  void backward(const Cache& cache, const Matrix& d_out, Vector& grad) const;

 private:
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>;
  Eigen::Map<const RowMajor> weight(int layer) const;
  Eigen::Map<const Vector> bias(int layer) const;

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;  // start of each layer's weights
  Vector params_;
};

}  // namespace contmgr
