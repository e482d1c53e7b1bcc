#include "drivestyle/learn/mlp.hpp"

#include <cmath>
#include <string>

#include "drivestyle/error.hpp"

namespace drivestyle {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw UsageError("an MLP needs at least input and output sizes");
  std::size_t total = 0;
  for (std::size_t l = 0; l < sizes_.size(); ++l) {
    if (sizes_[l] <= 0) throw UsageError("MLP layer sizes must be positive");
    if (l + 1 < sizes_.size()) {
      offsets_.push_back(total);
      total += static_cast<std::size_t>(sizes_[l + 1]) * static_cast<std::size_t>(sizes_[l] + 1);
    }
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
}

Mlp Mlp::random(std::vector<int> sizes, std::mt19937_64& rng) {
  Mlp net(std::move(sizes));
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = net.weight(l);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
    }
    auto b = net.bias(l);
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = dist(rng);
  }
  return net;
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(std::size_t layer) {
  return {params_.data() + offsets_.at(layer), sizes_[layer + 1], sizes_[layer]};
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(std::size_t layer) const {
  return {params_.data() + offsets_.at(layer), sizes_[layer + 1], sizes_[layer]};
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(std::size_t layer) {
  const auto off = offsets_.at(layer) + static_cast<std::size_t>(sizes_[layer + 1]) * sizes_[layer];
  return {params_.data() + off, sizes_[layer + 1]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t layer) const {
  const auto off = offsets_.at(layer) + static_cast<std::size_t>(sizes_[layer + 1]) * sizes_[layer];
  return {params_.data() + off, sizes_[layer + 1]};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input) const {
  Cache scratch;
  return forward(input, scratch);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, Cache& cache) const {
  if (sizes_.empty()) throw UsageError("forward on an empty MLP");
  if (input.rows() != input_dim()) {
    throw UsageError("MLP input has " + std::to_string(input.rows()) + " rows, expected " +
                     std::to_string(input_dim()));
  }
  cache.activations.resize(sizes_.size());
  cache.activations[0] = input;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weight(l) * cache.activations[l];
    z.colwise() += bias(l);
    if (l + 1 < layer_count()) z = z.cwiseMax(0.0);
    cache.activations[l + 1] = std::move(z);
  }
  return cache.activations.back();
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& upstream,
                              Eigen::VectorXd* param_grad) const {
  if (cache.activations.size() != sizes_.size()) throw UsageError("backward without a matching forward pass");
  if (upstream.rows() != output_dim() || upstream.cols() != cache.activations.back().cols()) {
    throw UsageError("MLP upstream gradient has the wrong shape");
  }
  if (param_grad && param_grad->size() != params_.size()) throw UsageError("gradient buffer has the wrong size");
  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = layer_count(); l-- > 0;) {
    if (l + 1 < layer_count()) {
      delta = delta.cwiseProduct((cache.activations[l + 1].array() > 0.0).cast<double>().matrix());
    }
    if (param_grad) {
      const auto rows = sizes_[l + 1];
      const auto cols = sizes_[l];
      Eigen::Map<Eigen::MatrixXd> gw(param_grad->data() + offsets_[l], rows, cols);
      Eigen::Map<Eigen::VectorXd> gb(param_grad->data() + offsets_[l] + static_cast<std::size_t>(rows) * cols, rows);
      gw.noalias() += delta * cache.activations[l].transpose();
      gb += delta.rowwise().sum();
    }
    delta = weight(l).transpose() * delta;
  }
  return delta;
}

void soft_update(Eigen::VectorXd& target, const Eigen::VectorXd& online, double tau) {
  if (target.size() != online.size()) throw UsageError("soft update between networks of different shapes");
  if (tau == 1.0) {
    target = online;
    return;
  }
  target = tau * online + (1.0 - tau) * target;
}

Adam::Adam(std::size_t parameter_count, double learning_rate)
    : lr_(learning_rate),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count))) {
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw UsageError("Adam parameter size mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace drivestyle
