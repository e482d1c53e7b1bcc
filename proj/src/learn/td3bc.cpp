#include <algorithm>
#include <cmath>

#include "drivestyle/error.hpp"
#include "drivestyle/json_fields.hpp"
#include "drivestyle/learn/rl.hpp"

namespace drivestyle {

namespace {

void check_hidden(const std::vector<int>& hidden) {
  for (int h : hidden) {
    if (h <= 0) throw UsageError("hidden layer sizes must be positive");
  }
}

void check_unit(double v, const char* name) {
  if (!(v > 0.0 && v <= 1.0)) throw UsageError(std::string(name) + " must lie in (0, 1]");
}

}  // namespace

void Td3BcConfig::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("td3bc learning_rate must be positive");
  if (batch_size <= 0) throw UsageError("td3bc batch_size must be positive");
  check_unit(gamma, "td3bc gamma");
  check_unit(tau, "td3bc tau");
  if (policy_delay <= 0) throw UsageError("td3bc policy_delay must be positive");
  if (target_noise < 0.0 || noise_clip < 0.0) throw UsageError("td3bc noise settings must be >= 0");
  if (bc_alpha < 0.0) throw UsageError("td3bc bc_alpha must be >= 0");
  if (gradient_steps < 0) throw UsageError("td3bc gradient_steps must be >= 0");
  check_hidden(hidden);
}

nlohmann::json Td3BcConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"batch_size", batch_size},   {"gamma", gamma},
          {"tau", tau},                     {"policy_delay", policy_delay}, {"target_noise", target_noise},
          {"noise_clip", noise_clip},       {"bc_alpha", bc_alpha},       {"gradient_steps", gradient_steps},
          {"hidden", hidden},               {"seed", seed}};
}

Td3BcConfig Td3BcConfig::from_json(const nlohmann::json& doc) {
  Td3BcConfig c;
  const std::string p = "td3bc";
  read_optional(doc, "learning_rate", c.learning_rate, p);
  read_optional(doc, "batch_size", c.batch_size, p);
  read_optional(doc, "gamma", c.gamma, p);
  read_optional(doc, "tau", c.tau, p);
  read_optional(doc, "policy_delay", c.policy_delay, p);
  read_optional(doc, "target_noise", c.target_noise, p);
  read_optional(doc, "noise_clip", c.noise_clip, p);
  read_optional(doc, "bc_alpha", c.bc_alpha, p);
  read_optional(doc, "gradient_steps", c.gradient_steps, p);
  read_optional(doc, "hidden", c.hidden, p);
  read_optional(doc, "seed", c.seed, p);
  c.validate();
  return c;
}

Optimizers Optimizers::make(const ActorCritic& net, double actor_lr, double critic_lr) {
  return {Adam(static_cast<std::size_t>(net.actor.trunk().parameters().size()), actor_lr),
          Adam(static_cast<std::size_t>(net.q1.parameters().size()), critic_lr),
          Adam(static_cast<std::size_t>(net.q2.parameters().size()), critic_lr)};
}

Eigen::MatrixXd standard_normal(int rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

double critic_loss(const Mlp& critic, const Eigen::MatrixXd& input, const Eigen::VectorXd& targets,
                   Eigen::VectorXd* grad) {
  const Eigen::Index n = input.cols();
  if (n == 0) throw UsageError("critic loss on an empty batch");
  if (targets.size() != n) throw UsageError("critic targets and inputs differ in size");
  Mlp::Cache cache;
  const Eigen::RowVectorXd q = critic.forward(input, cache).row(0);
  const Eigen::RowVectorXd err = targets.transpose() - q;
  const double loss = err.squaredNorm() / static_cast<double>(n);
  if (grad) {
    const Eigen::MatrixXd upstream = (-2.0 / static_cast<double>(n)) * err;
    critic.backward(cache, upstream, grad);
  }
  return loss;
}

double td3bc_lambda(const Eigen::VectorXd& q_values, double alpha) {
  if (q_values.size() == 0) throw UsageError("td3bc_lambda on an empty batch");
  return alpha / std::max(q_values.cwiseAbs().mean(), 1e-8);
}

Eigen::MatrixXd deterministic_action(const GaussianPolicy& actor, const Eigen::MatrixXd& obs) {
  return actor.sample(obs, Eigen::MatrixXd(), true).squashed;
}

double td3bc_actor_loss(const GaussianPolicy& actor, const Mlp& q1, const Eigen::MatrixXd& obs,
                        const Eigen::MatrixXd& actions, double lambda, Eigen::VectorXd* grad) {
  const Eigen::Index n = obs.cols();
  if (n == 0) throw UsageError("actor loss on an empty batch");
  if (actions.rows() != kActionDim || actions.cols() != n) throw UsageError("action batch has the wrong shape");
  const auto s = actor.sample(obs, Eigen::MatrixXd(), true);
  Mlp::Cache cache;
  const Eigen::RowVectorXd q = q1.forward(critic_input(obs, s.squashed), cache).row(0);
  const Eigen::MatrixXd diff = s.squashed - actions;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double loss = inv_n * (-lambda * q.sum() + diff.squaredNorm());
  if (grad) {
    Eigen::MatrixXd d_squashed = 2.0 * inv_n * diff;
    if (lambda != 0.0) {
      const Eigen::MatrixXd up = Eigen::MatrixXd::Constant(1, n, -lambda * inv_n);
      const Eigen::MatrixXd d_in = q1.backward(cache, up, nullptr);
      d_squashed += d_in.bottomRows(kActionDim);
    }
    actor.backward(s, d_squashed, Eigen::VectorXd::Zero(n), *grad);
  }
  return loss;
}

Eigen::VectorXd td3bc_targets(const ActorCritic& net, const Batch& batch, const Td3BcConfig& config,
                              std::mt19937_64& rng) {
  const Eigen::Index n = batch.size();
  Eigen::MatrixXd next_action = deterministic_action(net.actor_target, batch.next_obs);
  const Eigen::MatrixXd noise = standard_normal(kActionDim, n, rng) * config.target_noise;
  next_action += noise.cwiseMax(-config.noise_clip).cwiseMin(config.noise_clip);
  next_action = next_action.cwiseMax(-1.0).cwiseMin(1.0);
  const Eigen::MatrixXd in = critic_input(batch.next_obs, next_action);
  const Eigen::RowVectorXd q1 = net.q1_target.forward(in).row(0);
  const Eigen::RowVectorXd q2 = net.q2_target.forward(in).row(0);
  Eigen::VectorXd y(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    y(j) = batch.rewards(j) + config.gamma * (1.0 - batch.terminal(j)) * std::min(q1(j), q2(j));
  }
  return y;
}

Td3BcLosses td3bc_update(ActorCritic& net, Optimizers& opt, const Batch& batch, const Td3BcConfig& config,
                         long step, std::mt19937_64& rng) {
  if (batch.size() == 0) throw UsageError("td3bc update on an empty batch");
  Td3BcLosses out;
  const Eigen::VectorXd y = td3bc_targets(net, batch, config, rng);
  const Eigen::MatrixXd in = critic_input(batch.obs, batch.actions);
  Eigen::VectorXd g1 = Eigen::VectorXd::Zero(net.q1.parameters().size());
  Eigen::VectorXd g2 = Eigen::VectorXd::Zero(net.q2.parameters().size());
  out.critic1 = critic_loss(net.q1, in, y, &g1);
  out.critic2 = critic_loss(net.q2, in, y, &g2);
  opt.q1.step(net.q1.parameters(), g1);
  opt.q2.step(net.q2.parameters(), g2);

  if ((step + 1) % config.policy_delay == 0) {
    const Eigen::MatrixXd pi = deterministic_action(net.actor, batch.obs);
    const Eigen::VectorXd q = net.q1.forward(critic_input(batch.obs, pi)).row(0).transpose();
    out.lambda = td3bc_lambda(q, config.bc_alpha);
    Eigen::VectorXd ga = Eigen::VectorXd::Zero(net.actor.trunk().parameters().size());
    out.actor = td3bc_actor_loss(net.actor, net.q1, batch.obs, batch.actions, out.lambda, &ga);
    opt.actor.step(net.actor.trunk().parameters(), ga);
    out.actor_updated = true;
    soft_update(net.actor_target.trunk().parameters(), net.actor.trunk().parameters(), config.tau);
    soft_update(net.q1_target.parameters(), net.q1.parameters(), config.tau);
    soft_update(net.q2_target.parameters(), net.q2.parameters(), config.tau);
  }
  return out;
}

}  // namespace drivestyle
