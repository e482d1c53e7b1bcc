#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "drivestyle/error.hpp"
#include "drivestyle/learn/checkpoint.hpp"
#include "drivestyle/learn/mlp.hpp"
#include "drivestyle/learn/policy.hpp"
#include "drivestyle/learn/replay_buffer.hpp"
#include "drivestyle/learn/rl.hpp"
#include "drivestyle/learn/training.hpp"

using namespace drivestyle;

namespace {

Eigen::MatrixXd random_matrix(int rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Central differences of `loss` over every entry of `params`, compared with
// `analytic` at relative tolerance 1e-4.
void check_gradient(Eigen::VectorXd& params, const Eigen::VectorXd& analytic, const std::function<double()>& loss,
                    double h = 1e-6) {
  REQUIRE(params.size() == analytic.size());
  int bad = 0;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double keep = params(i);
    params(i) = keep + h;
    const double up = loss();
    params(i) = keep - h;
    const double down = loss();
    params(i) = keep;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic(i)), 1e-3});
    if (std::abs(fd - analytic(i)) > 1e-4 * scale) ++bad;
  }
  CHECK(bad == 0);
}

ActionBounds unit_bounds() {
  ActionBounds b;
  b.low = {-1.0, -1.0};
  b.high = {1.0, 1.0};
  return b;
}

Batch random_batch(std::mt19937_64& rng, Eigen::Index n) {
  Batch b;
  b.obs = random_matrix(kObservationDim, n, rng);
  b.actions = random_matrix(kActionDim, n, rng, 0.5).array().tanh().matrix();
  b.rewards = random_matrix(1, n, rng).transpose();
  b.next_obs = random_matrix(kObservationDim, n, rng);
  b.terminal = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; j += 3) b.terminal(j) = 1.0;
  return b;
}

Transition constant_transition(std::mt19937_64& rng, NormalizedAction action) {
  std::normal_distribution<double> g(0.0, 1.0);
  Transition t;
  for (auto& v : t.observation.values) v = g(rng);
  for (auto& v : t.next_observation.values) v = g(rng);
  t.action = action;
  t.reward = g(rng);
  return t;
}

}  // namespace

TEST_CASE("zero and identity networks") {
  Mlp zero({5, 7, 3});
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 4);
  CHECK(zero.forward(x).isZero());
  Mlp id({4, 4});
  id.weight(0) = Eigen::MatrixXd::Identity(4, 4);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Random(4, 6);
  CHECK(id.forward(y) == y);
  CHECK_THROWS_AS(id.forward(Eigen::MatrixXd::Zero(3, 1)), UsageError);
  CHECK_THROWS_AS(Mlp({4}), UsageError);
}

TEST_CASE("network gradients match finite differences") {
  std::mt19937_64 rng(1);
  Mlp net = Mlp::random({kObservationDim, 64, 64, 2}, rng);
  const Eigen::MatrixXd x = random_matrix(kObservationDim, 3, rng);
  const Eigen::MatrixXd w = random_matrix(2, 3, rng);
  auto loss = [&]() { return net.forward(x).cwiseProduct(w).sum(); };
  Mlp::Cache cache;
  net.forward(x, cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.parameters().size());
  const Eigen::MatrixXd dx = net.backward(cache, w, &grad);
  check_gradient(net.parameters(), grad, loss);

  Eigen::MatrixXd xin = x;
  Eigen::VectorXd flat = Eigen::Map<Eigen::VectorXd>(xin.data(), xin.size());
  const Eigen::VectorXd dflat = Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size());
  check_gradient(flat, dflat, [&]() {
    const Eigen::MatrixXd xi = Eigen::Map<const Eigen::MatrixXd>(flat.data(), x.rows(), x.cols());
    return net.forward(xi).cwiseProduct(w).sum();
  });
}

TEST_CASE("standard tanh-gaussian log density") {
  GaussianPolicy p(Mlp({kObservationDim, 2 * kActionDim}), unit_bounds());
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Zero(kObservationDim, 1);
  const auto s = p.sample(obs, Eigen::MatrixXd::Zero(kActionDim, 1), false);
  CHECK(s.action.isZero());
  CHECK(s.log_prob(0) == doctest::Approx(-kActionDim * 0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
  CHECK(s.log_prob(0) / kActionDim == doctest::Approx(-0.91894).epsilon(1e-5));
}

TEST_CASE("deterministic samples are the squashed mean and stay inside the bounds") {
  std::mt19937_64 rng(2);
  ActionBounds bounds;
  bounds.low = {-5.0, -0.2};
  bounds.high = {3.0, 0.2};
  const GaussianPolicy p = GaussianPolicy::random(kObservationDim, {16}, bounds, rng);
  const Eigen::MatrixXd obs = random_matrix(kObservationDim, 50, rng, 3.0);
  const auto det = p.sample(obs, Eigen::MatrixXd(), true);
  const Eigen::MatrixXd out = p.trunk().forward(obs);
  for (Eigen::Index j = 0; j < 50; ++j) {
    for (int d = 0; d < kActionDim; ++d) {
      CHECK(det.squashed(d, j) == std::tanh(out(d, j)));
      CHECK(det.action(d, j) == doctest::Approx(bounds.center(d) + bounds.half_range(d) * std::tanh(out(d, j))));
    }
  }
  const auto wild = p.sample(obs, random_matrix(kActionDim, 50, rng, 10.0), false);
  for (Eigen::Index j = 0; j < 50; ++j) {
    for (int d = 0; d < kActionDim; ++d) {
      CHECK(wild.action(d, j) >= bounds.low[static_cast<std::size_t>(d)]);
      CHECK(wild.action(d, j) <= bounds.high[static_cast<std::size_t>(d)]);
    }
  }
}

TEST_CASE("policy density integrates to one over the action box") {
  ActionBounds bounds;
  bounds.low = {-3.0, -0.5};
  bounds.high = {2.0, 0.5};
  Mlp trunk({kObservationDim, 2 * kActionDim});
  trunk.bias(0) << 0.3, -0.4, -0.5, 0.2;
  const GaussianPolicy p(trunk, bounds);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Zero(kObservationDim, 1);
  const Eigen::VectorXd mean = trunk.bias(0).head(kActionDim);
  const Eigen::VectorXd std = trunk.bias(0).tail(kActionDim).array().exp();
  const int n = 400;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double t0 = -1.0 + (i + 0.5) * 2.0 / n, t1 = -1.0 + (j + 0.5) * 2.0 / n;
      Eigen::MatrixXd noise(kActionDim, 1);
      noise << (std::atanh(t0) - mean(0)) / std(0), (std::atanh(t1) - mean(1)) / std(1);
      const auto s = p.sample(obs, noise, false);
      const double cell = (bounds.half_range(0) * 2.0 / n) * (bounds.half_range(1) * 2.0 / n);
      total += std::exp(s.log_prob(0)) * cell;
    }
  }
  CHECK(total == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("policy gradients through the reparameterized sample") {
  std::mt19937_64 rng(3);
  const GaussianPolicy proto = GaussianPolicy::random(kObservationDim, {24, 24}, unit_bounds(), rng);
  GaussianPolicy p = proto;
  const Eigen::MatrixXd obs = random_matrix(kObservationDim, 4, rng);
  const Eigen::MatrixXd noise = random_matrix(kActionDim, 4, rng);
  const Eigen::MatrixXd w = random_matrix(kActionDim, 4, rng);
  const Eigen::VectorXd c = random_matrix(1, 4, rng).transpose();
  auto loss = [&]() {
    const auto s = p.sample(obs, noise, false);
    return s.squashed.cwiseProduct(w).sum() + s.log_prob.dot(c);
  };
  const auto s = p.sample(obs, noise, false);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.trunk().parameters().size());
  p.backward(s, w, c, grad);
  check_gradient(p.trunk().parameters(), grad, loss);
}

TEST_CASE("critic loss value and gradient") {
  Mlp one({3, 1});
  one.bias(0)(0) = 1.0;
  Eigen::VectorXd y(1);
  y << 2.0;
  CHECK(critic_loss(one, Eigen::MatrixXd::Zero(3, 1), y, nullptr) == doctest::Approx(1.0));

  std::mt19937_64 rng(4);
  Mlp q = Mlp::random({kObservationDim + kActionDim, 32, 32, 1}, rng);
  const Eigen::MatrixXd in = random_matrix(kObservationDim + kActionDim, 5, rng);
  const Eigen::VectorXd targets = random_matrix(1, 5, rng).transpose();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(q.parameters().size());
  const double l = critic_loss(q, in, targets, &grad);
  const Eigen::VectorXd pred = q.forward(in).row(0).transpose();
  CHECK(l == doctest::Approx((targets - pred).squaredNorm() / 5.0));
  check_gradient(q.parameters(), grad, [&]() { return critic_loss(q, in, targets, nullptr); });
}

TEST_CASE("soft actor-critic target arithmetic") {
  CHECK(sac_td_target(1.0, 10.0, -1.0, false, 0.2, 0.99) == 11.1);
  CHECK(sac_td_target(1.0, 10.0, -1.0, true, 0.2, 0.99) == 1.0);
  CHECK(sac_td_target(3.0, 10.0, -1.0, false, 0.2, 0.0) == doctest::Approx(3.2));
  CHECK(sac_td_target(1.0, 10.0, -1.0, false, 0.2, 0.99, true) == doctest::Approx(1.0 + 0.99 * 10.2));
}

TEST_CASE("soft actor-critic targets match a scalar recomputation") {
  std::mt19937_64 rng(5);
  SacConfig cfg;
  cfg.hidden = {16, 16};
  const ActorCritic net = ActorCritic::random(cfg.hidden, unit_bounds(), 9);
  const Batch b = random_batch(rng, 6);
  const Eigen::MatrixXd noise = random_matrix(kActionDim, 6, rng);
  const Eigen::VectorXd y = sac_targets(net, b, cfg, noise);
  for (Eigen::Index j = 0; j < 6; ++j) {
    const auto s = net.actor.sample(b.next_obs.col(j), noise.col(j), false);
    const Eigen::MatrixXd in = critic_input(b.next_obs.col(j), s.squashed);
    const double q1 = net.q1_target.forward(in)(0, 0);
    const double q2 = net.q2_target.forward(in)(0, 0);
    const double expect = b.terminal(j) > 0.5 ? b.rewards(j)
                                              : b.rewards(j) + cfg.gamma * std::min(q1, q2) - cfg.alpha * s.log_prob(0);
    CHECK(y(j) == doctest::Approx(expect).epsilon(1e-12));
    if (b.terminal(j) < 0.5) {
      CHECK(y(j) <= b.rewards(j) + cfg.gamma * q1 - cfg.alpha * s.log_prob(0) + 1e-12);
      CHECK(y(j) <= b.rewards(j) + cfg.gamma * q2 - cfg.alpha * s.log_prob(0) + 1e-12);
    }
  }
}

TEST_CASE("soft actor-critic actor loss value and gradient") {
  std::mt19937_64 rng(6);
  ActorCritic net = ActorCritic::random({20, 20}, unit_bounds(), 11);
  const Eigen::MatrixXd obs = random_matrix(kObservationDim, 5, rng);
  const Eigen::MatrixXd noise = random_matrix(kActionDim, 5, rng);
  for (double alpha : {0.0, 0.2}) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.actor.trunk().parameters().size());
    const double l = sac_actor_loss(net.actor, net.q1, net.q2, obs, noise, alpha, &grad);
    const auto s = net.actor.sample(obs, noise, false);
    const Eigen::MatrixXd in = critic_input(obs, s.squashed);
    const Eigen::RowVectorXd q1 = net.q1.forward(in).row(0), q2 = net.q2.forward(in).row(0);
    double expect = 0.0;
    for (Eigen::Index j = 0; j < 5; ++j) expect += (alpha * s.log_prob(j) - std::min(q1(j), q2(j))) / 5.0;
    CHECK(l == doctest::Approx(expect).epsilon(1e-12));
    check_gradient(net.actor.trunk().parameters(), grad,
                   [&]() { return sac_actor_loss(net.actor, net.q1, net.q2, obs, noise, alpha, nullptr); });
  }
}

TEST_CASE("behavior-cloning weight") {
  Eigen::VectorXd q(4);
  q << 10.0, -10.0, 10.0, -10.0;
  CHECK(td3bc_lambda(q, 2.5) == 0.25);
  q << 1.0, -1.0, 1.0, 1.0;
  CHECK(td3bc_lambda(q, 1.0) == 1.0);
  CHECK(td3bc_lambda(Eigen::VectorXd::Zero(3), 2.5) == doctest::Approx(2.5e8));
  CHECK(std::isfinite(td3bc_lambda(Eigen::VectorXd::Zero(3), 2.5)));
  CHECK_THROWS_AS(td3bc_lambda(Eigen::VectorXd(), 2.5), UsageError);
}

TEST_CASE("TD3+BC actor objective value and gradient") {
  std::mt19937_64 rng(7);
  ActorCritic net = ActorCritic::random({20, 20}, unit_bounds(), 13);
  const Eigen::MatrixXd obs = random_matrix(kObservationDim, 6, rng);
  const Eigen::MatrixXd actions = random_matrix(kActionDim, 6, rng, 0.5).array().tanh().matrix();
  for (double lambda : {0.0, 0.7}) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.actor.trunk().parameters().size());
    const double l = td3bc_actor_loss(net.actor, net.q1, obs, actions, lambda, &grad);
    const Eigen::MatrixXd pi = deterministic_action(net.actor, obs);
    const Eigen::RowVectorXd q = net.q1.forward(critic_input(obs, pi)).row(0);
    double expect = 0.0;
    for (Eigen::Index j = 0; j < 6; ++j) expect += (-lambda * q(j) + (pi.col(j) - actions.col(j)).squaredNorm()) / 6.0;
    CHECK(l == doctest::Approx(expect).epsilon(1e-12));
    check_gradient(net.actor.trunk().parameters(), grad,
                   [&]() { return td3bc_actor_loss(net.actor, net.q1, obs, actions, lambda, nullptr); });
  }
}

TEST_CASE("TD3+BC targets with identical twins and a hand-computed critic loss") {
  std::mt19937_64 rng(8);
  ActorCritic net = ActorCritic::random({16}, unit_bounds(), 15);
  net.q2_target = net.q1_target;
  Td3BcConfig cfg;
  cfg.target_noise = 0.0;
  Batch b = random_batch(rng, 1);
  b.terminal(0) = 0.0;
  std::mt19937_64 r1(1);
  const Eigen::VectorXd y = td3bc_targets(net, b, cfg, r1);
  const Eigen::MatrixXd a = deterministic_action(net.actor_target, b.next_obs);
  const double q = net.q1_target.forward(critic_input(b.next_obs, a))(0, 0);
  CHECK(y(0) == doctest::Approx(b.rewards(0) + cfg.gamma * q).epsilon(1e-12));
  const double pred = net.q1.forward(critic_input(b.obs, b.actions))(0, 0);
  CHECK(critic_loss(net.q1, critic_input(b.obs, b.actions), y, nullptr) ==
        doctest::Approx((y(0) - pred) * (y(0) - pred)).epsilon(1e-12));
}

TEST_CASE("soft target updates") {
  Eigen::VectorXd target(3), online(3);
  target << 1.0, 2.0, 3.0;
  online << 3.0, 2.0, 1.0;
  Eigen::VectorXd t = target;
  soft_update(t, online, 1.0);
  CHECK(t == online);
  t = target;
  soft_update(t, online, 0.25);
  CHECK(t(0) == doctest::Approx(1.5));
  CHECK(t(2) == doctest::Approx(2.5));
}

TEST_CASE("adam minimizes a quadratic") {
  Eigen::VectorXd x(2);
  x << 3.0, -2.0;
  Adam adam(2, 0.05);
  for (int i = 0; i < 2000; ++i) adam.step(x, 2.0 * x);
  CHECK(x.norm() < 1e-3);
  CHECK(adam.steps() == 2000);
}

TEST_CASE("replay buffer capacity and uniform sampling") {
  std::mt19937_64 rng(9);
  ReplayBuffer buffer(50);
  for (int i = 0; i < 120; ++i) {
    Transition t;
    t.reward = i;
    buffer.push(t);
    CHECK(buffer.size() <= 50);
  }
  CHECK(buffer.size() == 50);
  double min_reward = 1e9;
  for (std::size_t i = 0; i < buffer.size(); ++i) min_reward = std::min(min_reward, buffer.at(i).reward);
  CHECK(min_reward == 70.0);

  const std::size_t draws = 100000;
  std::vector<int> counts(50, 0);
  for (std::size_t i : buffer.sample_indices(draws, rng)) ++counts[i];
  const double p = 1.0 / 50.0;
  const double mean = draws * p;
  const double sigma = std::sqrt(draws * p * (1.0 - p));
  for (int c : counts) CHECK(std::abs(c - mean) <= 3.0 * sigma + 1.0);
  CHECK_THROWS_AS(ReplayBuffer(0), UsageError);
  ReplayBuffer empty(4);
  CHECK_THROWS_AS(empty.sample_indices(1, rng), UsageError);
}

TEST_CASE("offline training clones a constant expert") {
  std::mt19937_64 rng(10);
  const NormalizedAction expert{0.4, -0.3};
  std::vector<Transition> data;
  for (int i = 0; i < 256; ++i) data.push_back(constant_transition(rng, expert));
  Td3BcConfig cfg;
  cfg.hidden = {32, 32};
  cfg.gradient_steps = 1500;
  cfg.batch_size = 64;
  cfg.learning_rate = 1e-3;
  cfg.bc_alpha = 0.0;
  cfg.seed = 3;
  const ObservationScaler scaler;
  const auto r = train_offline(data, cfg, unit_bounds(), scaler);
  Eigen::MatrixXd obs(kObservationDim, 20);
  for (int j = 0; j < 20; ++j) obs.col(j) = scaler.apply(data[static_cast<std::size_t>(j)].observation);
  const Eigen::MatrixXd pi = deterministic_action(r.checkpoint.networks.actor, obs);
  for (int j = 0; j < 20; ++j) {
    CHECK(std::abs(pi(0, j) - expert[0]) < 0.05);
    CHECK(std::abs(pi(1, j) - expert[1]) < 0.05);
  }
  const auto again = train_offline(data, cfg, unit_bounds(), scaler);
  CHECK(again.checkpoint.networks == r.checkpoint.networks);

  cfg.gradient_steps = 0;
  const auto init = train_offline(data, cfg, unit_bounds(), scaler);
  CHECK(init.checkpoint.networks == ActorCritic::random(cfg.hidden, unit_bounds(), cfg.seed));
  CHECK(init.checkpoint.algorithm == "init");
  CHECK_THROWS_AS(train_offline(std::vector<Transition>{}, cfg, unit_bounds(), scaler), UsageError);
}

TEST_CASE("checkpoints reproduce forward outputs bit for bit") {
  std::mt19937_64 rng(11);
  PolicyCheckpoint ck;
  ck.style = DrivingStyle::kCautious;
  ck.algorithm = "sac";
  ck.networks = ActorCritic::random({12, 8}, ActionBounds{}, 21);
  ck.scaler = ObservationScaler::highway();
  ck.steps = 42;
  ck.seed = 21;
  const auto path = std::filesystem::temp_directory_path() / "drivestyle_test_ckpt" / "a.json";
  save_checkpoint(ck, path);
  const PolicyCheckpoint back = load_checkpoint(path);
  CHECK(back.networks == ck.networks);
  CHECK(back.scaler == ck.scaler);
  CHECK(back.style == ck.style);
  CHECK(back.steps == 42);
  const Eigen::MatrixXd obs = random_matrix(kObservationDim, 7, rng);
  CHECK(back.networks.actor.sample(obs, {}, true).action == ck.networks.actor.sample(obs, {}, true).action);

  auto doc = ck.to_json();
  doc["q1"]["sizes"][1] = 9;
  CHECK_THROWS_AS(PolicyCheckpoint::from_json(doc), ParseError);
  CHECK_THROWS_AS(require_same_shapes(ck.networks, ActorCritic::random({12, 9}, ActionBounds{}, 1)), DataError);
  std::filesystem::remove_all(path.parent_path());
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("shared parameters act identically on identical observations") {
  const ActorCritic net = ActorCritic::random({16}, ActionBounds{}, 5);
  const NeuralDrivingPolicy policy(net.actor, ObservationScaler::highway(), true);
  Observation obs;
  obs.at(0) = 20.0;
  AgentState s;
  const std::string a = "a", b = "b";
  std::mt19937_64 r1(1), r2(2);
  const Action x = policy.act({obs, s, a, 0}, r1);
  const Action y = policy.act({obs, s, b, 7}, r2);
  CHECK(x.accel == y.accel);
  CHECK(x.steering_rate == y.steering_rate);
}

TEST_CASE("online training with no steps returns the warm start") {
  Episode ep;
  ep.layout = {3, 3.5, 500.0};
  AgentTrack t;
  t.agent_id = "a";
  for (int k = 0; k < 3; ++k) {
    AgentState s;
    s.x = 2.0 * k;
    s.y = 1.75;
    s.speed = 20.0;
    t.states.push_back(s);
  }
  ep.tracks.push_back(t);
  const std::vector<Episode> episodes{ep};
  SimConfig sim;
  OnlineTrainConfig cfg;
  cfg.env_steps = 0;
  cfg.sac.hidden = {8, 8};
  PolicyCheckpoint warm;
  warm.networks = ActorCritic::random({8, 8}, ActionBounds::from_sim(sim), 77);
  warm.scaler = ObservationScaler::highway();
  IrlFeatureVector lo{}, hi{};
  hi.fill(1.0);
  const auto r = train_online_marl(episodes, DrivingStyle::kNormal, RewardWeights{}, FeatureNormalizer(lo, hi), sim,
                                   cfg, warm.scaler, warm);
  CHECK(r.checkpoint.networks.actor == warm.networks.actor);

  PolicyCheckpoint wrong = warm;
  wrong.networks = ActorCritic::random({8, 4}, ActionBounds::from_sim(sim), 77);
  CHECK_THROWS_AS(train_online_marl(episodes, DrivingStyle::kNormal, RewardWeights{}, FeatureNormalizer(lo, hi), sim,
                                    cfg, warm.scaler, wrong),
                  DataError);
  CHECK_THROWS_AS(train_online_marl(std::vector<Episode>{}, DrivingStyle::kNormal, RewardWeights{},
                                    FeatureNormalizer(lo, hi), sim, cfg, warm.scaler, std::nullopt),
                  UsageError);
}

TEST_CASE("short online run is deterministic and logs every window") {
  Episode ep;
  ep.delta_t = 0.1;
  ep.layout = {3, 3.5, 200.0};
  for (int a = 0; a < 3; ++a) {
    AgentTrack t;
    t.agent_id = std::to_string(a);
    for (int k = 0; k < 3; ++k) {
      AgentState s;
      s.x = 40.0 * a + 2.0 * k;
      s.y = 1.75 + 3.5 * a;
      s.speed = 20.0;
      t.states.push_back(s);
    }
    ep.tracks.push_back(t);
  }
  const std::vector<Episode> episodes{ep};
  SimConfig sim;
  sim.max_steps = 60;
  OnlineTrainConfig cfg;
  cfg.env_steps = 400;
  cfg.warmup_steps = 100;
  cfg.log_every = 100;
  cfg.select_every = 200;
  cfg.sac.hidden = {8, 8};
  cfg.sac.batch_size = 16;
  IrlFeatureVector lo{}, hi{};
  hi.fill(30.0);
  RewardWeights w;
  w.theta[kVEgo] = 1.0;
  const FeatureNormalizer norm(lo, hi);
  const auto a = train_online_marl(episodes, DrivingStyle::kNormal, w, norm, sim, cfg, ObservationScaler::highway(),
                                   std::nullopt);
  const auto b = train_online_marl(episodes, DrivingStyle::kNormal, w, norm, sim, cfg, ObservationScaler::highway(),
                                   std::nullopt);
  CHECK(a.checkpoint.networks == b.checkpoint.networks);
  CHECK(a.log.size() == 4);
  CHECK(a.selection.size() == 2);
  CHECK(a.checkpoint.steps == 400);
  bool kept = false;
  for (const auto& e : a.selection) kept = kept || e.env_steps == a.selected_steps;
  CHECK(kept);
}
