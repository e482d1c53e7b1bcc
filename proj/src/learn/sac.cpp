#include <algorithm>
#include <cmath>

#include "drivestyle/error.hpp"
#include "drivestyle/json_fields.hpp"
#include "drivestyle/learn/rl.hpp"

namespace drivestyle {

void SacConfig::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("sac learning_rate must be positive");
  if (batch_size <= 0) throw UsageError("sac batch_size must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw UsageError("sac gamma must lie in (0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw UsageError("sac tau must lie in (0, 1]");
  if (alpha < 0.0) throw UsageError("sac alpha must be >= 0");
  if (buffer_size == 0) throw UsageError("sac buffer_size must be positive");
  for (int h : hidden) {
    if (h <= 0) throw UsageError("hidden layer sizes must be positive");
  }
}

nlohmann::json SacConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"batch_size", batch_size}, {"gamma", gamma},
          {"tau", tau},                     {"alpha", alpha},           {"buffer_size", buffer_size},
          {"hidden", hidden},               {"entropy_inside_discount", entropy_inside_discount},
          {"seed", seed}};
}

SacConfig SacConfig::from_json(const nlohmann::json& doc) {
  SacConfig c;
  const std::string p = "sac";
  read_optional(doc, "learning_rate", c.learning_rate, p);
  read_optional(doc, "batch_size", c.batch_size, p);
  read_optional(doc, "gamma", c.gamma, p);
  read_optional(doc, "tau", c.tau, p);
  read_optional(doc, "alpha", c.alpha, p);
  read_optional(doc, "buffer_size", c.buffer_size, p);
  read_optional(doc, "hidden", c.hidden, p);
  read_optional(doc, "entropy_inside_discount", c.entropy_inside_discount, p);
  read_optional(doc, "seed", c.seed, p);
  c.validate();
  return c;
}

double sac_td_target(double reward, double min_q_next, double log_prob_next, bool terminal, double alpha,
                     double gamma, bool entropy_inside_discount) {
  if (terminal) return reward;
  if (entropy_inside_discount) return reward + gamma * (min_q_next - alpha * log_prob_next);
  return reward + gamma * min_q_next - alpha * log_prob_next;
}

Eigen::VectorXd sac_targets(const ActorCritic& net, const Batch& batch, const SacConfig& config,
                            const Eigen::MatrixXd& next_noise) {
  const auto s = net.actor.sample(batch.next_obs, next_noise, false);
  const Eigen::MatrixXd in = critic_input(batch.next_obs, s.squashed);
  const Eigen::RowVectorXd q1 = net.q1_target.forward(in).row(0);
  const Eigen::RowVectorXd q2 = net.q2_target.forward(in).row(0);
  Eigen::VectorXd y(batch.size());
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    y(j) = sac_td_target(batch.rewards(j), std::min(q1(j), q2(j)), s.log_prob(j), batch.terminal(j) > 0.5,
                         config.alpha, config.gamma, config.entropy_inside_discount);
  }
  return y;
}

double sac_actor_loss(const GaussianPolicy& actor, const Mlp& q1, const Mlp& q2, const Eigen::MatrixXd& obs,
                      const Eigen::MatrixXd& noise, double alpha, Eigen::VectorXd* grad) {
  const Eigen::Index n = obs.cols();
  if (n == 0) throw UsageError("actor loss on an empty batch");
  const auto s = actor.sample(obs, noise, false);
  const Eigen::MatrixXd in = critic_input(obs, s.squashed);
  Mlp::Cache c1, c2;
  const Eigen::RowVectorXd v1 = q1.forward(in, c1).row(0);
  const Eigen::RowVectorXd v2 = q2.forward(in, c2).row(0);
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  Eigen::MatrixXd up1 = Eigen::MatrixXd::Zero(1, n);
  Eigen::MatrixXd up2 = Eigen::MatrixXd::Zero(1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const bool first = v1(j) <= v2(j);
    loss += alpha * s.log_prob(j) - (first ? v1(j) : v2(j));
    (first ? up1 : up2)(0, j) = -inv_n;
  }
  loss *= inv_n;
  if (grad) {
    const Eigen::MatrixXd d_in = q1.backward(c1, up1, nullptr) + q2.backward(c2, up2, nullptr);
    const Eigen::MatrixXd d_squashed = d_in.bottomRows(kActionDim);
    actor.backward(s, d_squashed, Eigen::VectorXd::Constant(n, alpha * inv_n), *grad);
  }
  return loss;
}

SacLosses sac_update(ActorCritic& net, Optimizers& opt, const Batch& batch, const SacConfig& config,
                     std::mt19937_64& rng) {
  if (batch.size() == 0) throw UsageError("sac update on an empty batch");
  SacLosses out;
  const Eigen::VectorXd y = sac_targets(net, batch, config, standard_normal(kActionDim, batch.size(), rng));
  const Eigen::MatrixXd in = critic_input(batch.obs, batch.actions);
  Eigen::VectorXd g1 = Eigen::VectorXd::Zero(net.q1.parameters().size());
  Eigen::VectorXd g2 = Eigen::VectorXd::Zero(net.q2.parameters().size());
  out.critic1 = critic_loss(net.q1, in, y, &g1);
  out.critic2 = critic_loss(net.q2, in, y, &g2);
  opt.q1.step(net.q1.parameters(), g1);
  opt.q2.step(net.q2.parameters(), g2);

  Eigen::VectorXd ga = Eigen::VectorXd::Zero(net.actor.trunk().parameters().size());
  out.actor = sac_actor_loss(net.actor, net.q1, net.q2, batch.obs, standard_normal(kActionDim, batch.size(), rng),
                             config.alpha, &ga);
  opt.actor.step(net.actor.trunk().parameters(), ga);

  soft_update(net.q1_target.parameters(), net.q1.parameters(), config.tau);
  soft_update(net.q2_target.parameters(), net.q2.parameters(), config.tau);
  return out;
}

}  // namespace drivestyle
