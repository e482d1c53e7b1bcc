#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace drivestyle {

/// Fully connected network with ReLU hidden layers and a linear output.
/// Parameters live in one flat vector, layer by layer, each layer stored as
/// a column-major (out x in) weight block followed by its bias.
/// Batches are column-wise: an input is (input_dim x batch).
class Mlp {
 public:
  Mlp() = default;
  /// Zero-initialized network. Throws UsageError for fewer than two sizes or a
  /// non-positive size.
  explicit Mlp(std::vector<int> sizes);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static Mlp random(std::vector<int> sizes, std::mt19937_64& rng);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t layer_count() const { return sizes_.size() - 1; }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

  /// Per-layer activations kept for backprop. activations[0] is the input.
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;
  };

  /// Throws UsageError on an input dimension mismatch.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, Cache& cache) const;

  /// Backpropagates `upstream` = dL/d(output) through the cached pass.
  /// Parameter gradients, summed over the batch, are added to `param_grad`
  /// when it is non-null. Returns dL/d(input).
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& upstream, Eigen::VectorXd* param_grad) const;

  bool operator==(const Mlp& other) const { return sizes_ == other.sizes_ && params_ == other.params_; }

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;  // start of each layer's weight block
  Eigen::VectorXd params_;
};

/// target <- tau * online + (1 - tau) * target
void soft_update(Eigen::VectorXd& target, const Eigen::VectorXd& online, double tau);

/// Adam minimizer over one flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t parameter_count, double learning_rate);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  double learning_rate() const { return lr_; }
  long steps() const { return t_; }

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

}  // namespace drivestyle
