#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "cmpcc/sac.hpp"

using namespace cmpcc;

namespace {

SacObservation ideal_obs(double nu, double alpha_up, double alpha_lo) {
  SacObservation o;
  o.nu = nu;
  o.d_upper = o.d_lower = 0.35;
  o.h_upper = o.h_lower = 0.2;
  o.alpha_upper = alpha_up;
  o.alpha_lower = alpha_lo;
  return o;
}

std::vector<Transition> random_batch(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Transition> batch(n);
  for (Transition& t : batch) {
    t.s = Eigen::VectorXd::NullaryExpr(SacObservation::kDim, [&](Eigen::Index) { return gauss(rng); });
    t.s_next =
        Eigen::VectorXd::NullaryExpr(SacObservation::kDim, [&](Eigen::Index) { return gauss(rng); });
    t.a = Eigen::Vector2d(0.015 * gauss(rng), 0.015 * gauss(rng));
    t.r = gauss(rng);
    t.done = (rng() % 4 == 0) ? 1.0 : 0.0;
  }
  return batch;
}

// Central finite difference over every parameter of a network.
template <typename LossFn>
double max_grad_rel_error(Mlp& net, const Mlp::Grads& analytic, LossFn loss) {
  const double h = 1e-6;
  double worst = 0.0;
  auto probe = [&](double& param, double grad) {
    const double keep = param;
    param = keep + h;
    const double up = loss();
    param = keep - h;
    const double dn = loss();
    param = keep;
    const double fd = (up - dn) / (2.0 * h);
    worst = std::max(worst, std::abs(grad - fd) / std::max(1.0, std::abs(fd)));
  };
  for (Eigen::Index i = 0; i < net.W1.size(); ++i) probe(net.W1.data()[i], analytic.W1.data()[i]);
  for (Eigen::Index i = 0; i < net.W2.size(); ++i) probe(net.W2.data()[i], analytic.W2.data()[i]);
  for (Eigen::Index i = 0; i < net.W3.size(); ++i) probe(net.W3.data()[i], analytic.W3.data()[i]);
  for (Eigen::Index i = 0; i < net.b1.size(); ++i) probe(net.b1.data()[i], analytic.b1.data()[i]);
  for (Eigen::Index i = 0; i < net.b2.size(); ++i) probe(net.b2.data()[i], analytic.b2.data()[i]);
  for (Eigen::Index i = 0; i < net.b3.size(); ++i) probe(net.b3.data()[i], analytic.b3.data()[i]);
  return worst;
}

}  // namespace

TEST_CASE("reward: every term vanishes in the ideal transition") {
  RewardWeights w;
  const SacObservation obs = ideal_obs(2.0, 0.15, 0.15);
  const SacObservation next = ideal_obs(2.0, 0.15, 0.15);
  CHECK(sac_reward(obs, SacAction{}, next, w, 2.0, 0.05, 0.25) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("reward: zero progress costs gamma_nu") {
  RewardWeights w;
  const SacObservation obs = ideal_obs(0.0, 0.15, 0.15);
  const SacObservation next = ideal_obs(0.0, 0.15, 0.15);
  CHECK(sac_reward(obs, SacAction{}, next, w, 2.0, 0.05, 0.25) ==
        doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("reward: alpha at the interval edge pays the quadratic term") {
  RewardWeights w;
  w.gamma_nu = 0.0;
  w.gamma_b = 0.5;
  const SacObservation obs = ideal_obs(2.0, 0.25, 0.15);  // upper exactly at alpha_max
  const SacObservation next = ideal_obs(2.0, 0.25, 0.15);
  // b = ((0.25-0.15)/0.2)^2 = 0.25 for the upper component, 0 for the lower.
  CHECK(sac_reward(obs, SacAction{}, next, w, 2.0, 0.05, 0.25) ==
        doctest::Approx(-0.125).epsilon(1e-12));

  // Stepping past the edge adds the fixed boundary penalty on the intent.
  SacAction push{0.05, 0.0};
  const double r = sac_reward(obs, push, next, w, 2.0, 0.05, 0.25);
  const double dev = (0.30 - 0.15) / 0.2;
  CHECK(r == doctest::Approx(-0.5 * (dev * dev + 10.0)).epsilon(1e-12));
}

TEST_CASE("reward: negative barrier and solver failure penalties") {
  RewardWeights w;
  SacObservation obs = ideal_obs(2.0, 0.15, 0.15);
  SacObservation next = ideal_obs(2.0, 0.15, 0.15);
  next.h_lower = -0.01;
  next.z_flag = 1.0;
  // -gamma_h * C - gamma_z * Z = -(10 * 10 + 5).
  CHECK(sac_reward(obs, SacAction{}, next, w, 2.0, 0.05, 0.25) ==
        doctest::Approx(-105.0).epsilon(1e-9));
}

TEST_CASE("apply_action: clamping at the interval bounds") {
  CHECK(apply_action(0.25, 0.25, SacAction{0.1, 0.0}, 0.05, 0.25) ==
        std::pair<double, double>{0.25, 0.25});
  CHECK(apply_action(0.25, 0.25, SacAction{-0.1, -0.1}, 0.05, 0.25) ==
        std::pair<double, double>{0.15, 0.15});

  // Cumulative clamped recursion equals replaying the clamp step by step.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.03, 0.03);
  double au = 0.25, al = 0.25;
  double ru = 0.25, rl = 0.25;
  for (int k = 0; k < 300; ++k) {
    const SacAction a{u(rng), u(rng)};
    std::tie(au, al) = apply_action(au, al, a, 0.05, 0.25);
    ru = std::clamp(ru + a.delta_alpha_upper, 0.05, 0.25);
    rl = std::clamp(rl + a.delta_alpha_lower, 0.05, 0.25);
    CHECK(au == ru);
    CHECK(al == rl);
    CHECK(au >= 0.05);
    CHECK(au <= 0.25);
  }
}

TEST_CASE("replay buffer: FIFO eviction and capacity") {
  ReplayBuffer buf(4);
  for (int i = 0; i < 6; ++i) {
    Transition t;
    t.s = Eigen::VectorXd::Constant(SacObservation::kDim, i);
    t.a.setZero();
    t.s_next = t.s;
    buf.push(std::move(t));
  }
  CHECK(buf.size() == 4);
  // Oldest two were evicted: remaining payloads are 2..5.
  double smallest = 1e9;
  for (size_t i = 0; i < buf.size(); ++i) smallest = std::min(smallest, buf.at(i).s(0));
  CHECK(smallest == 2.0);
}

TEST_CASE("replay buffer: uniform sampling (chi-squared) and no within-batch repeats") {
  ReplayBuffer buf(100);
  for (int i = 0; i < 100; ++i) {
    Transition t;
    t.s = Eigen::VectorXd::Constant(SacObservation::kDim, i);
    t.a.setZero();
    t.s_next = t.s;
    buf.push(std::move(t));
  }
  std::mt19937_64 rng(123);
  std::vector<long> counts(100, 0);
  long draws = 0;
  while (draws < 100000) {
    const std::vector<size_t> idx = buf.sample_indices(20, rng);
    std::vector<size_t> sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    for (size_t i : idx) ++counts[i];
    draws += static_cast<long>(idx.size());
  }
  const double expected = static_cast<double>(draws) / 100.0;
  double chi2 = 0.0;
  for (long c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 0.99 quantile of chi-squared with 99 dof.
  CHECK(chi2 < 134.642);
}

TEST_CASE("actions are tanh-squashed within bounds; zero net gives zero action") {
  SacConfig config;
  config.hidden = 8;
  config.seed = 3;
  SacAgent agent(config);
  agent.actor.W1.setZero();
  agent.actor.W2.setZero();
  agent.actor.W3.setZero();
  agent.actor.b1.setZero();
  agent.actor.b2.setZero();
  agent.actor.b3.setZero();
  const SacAction a = agent.act(ideal_obs(1.0, 0.15, 0.15), true);
  CHECK(a.delta_alpha_upper == 0.0);
  CHECK(a.delta_alpha_lower == 0.0);

  SacConfig config2;
  config2.hidden = 16;
  config2.seed = 9;
  SacAgent wild(config2);
  for (int i = 0; i < 500; ++i) {
    const SacAction s = wild.act(ideal_obs(1.0, 0.15, 0.15), false);
    CHECK(std::abs(s.delta_alpha_upper) <= config2.a_max);
    CHECK(std::abs(s.delta_alpha_lower) <= config2.a_max);
  }
  // Deterministic mode is repeatable.
  const SacAction d1 = wild.act(ideal_obs(1.0, 0.15, 0.15), true);
  const SacAction d2 = wild.act(ideal_obs(1.0, 0.15, 0.15), true);
  CHECK(d1.delta_alpha_upper == d2.delta_alpha_upper);
}

TEST_CASE("squashed-Gaussian density integrates to one (Monte Carlo)") {
  // For a single observation the 2D action density must normalize; estimate
  // the integral of exp(logp) over the action box by a uniform grid.
  SacConfig config;
  config.hidden = 8;
  config.seed = 21;
  SacAgent agent(config);
  // Keep the squash gentle (sigma ~ e^-2, mean near zero) so the density has
  // no near-singular mass at the action-box edges and midpoint quadrature
  // resolves it.
  agent.actor.W3 *= 0.05;
  agent.actor.b3 << 0.0, 0.0, -2.0, -2.0;
  const SacObservation obs = ideal_obs(1.0, 0.15, 0.15);

  // Empirical check instead: average 1/p over samples equals the box area
  // only for uniform; use histogram consistency: draw 1e5 samples and
  // compare the empirical CDF per dimension against numerically integrated
  // exp(logp). Simpler normalization check: integrate exp(logp) on a grid.
  const int grid = 160;
  const double amax = config.a_max;
  double integral = 0.0;
  // p(a) factorizes per dimension given the observation; evaluate on a 2D grid
  // by inverting a = amax tanh(z).
  const Eigen::MatrixXd out = agent.actor.forward(obs.to_vector());
  const double mean[2] = {out(0, 0), out(1, 0)};
  const double logstd[2] = {std::clamp(out(2, 0), -5.0, 2.0), std::clamp(out(3, 0), -5.0, 2.0)};
  auto logp_at = [&](double a0, double a1) {
    double lp = 0.0;
    const double as[2] = {a0, a1};
    for (int k = 0; k < 2; ++k) {
      const double z = std::atanh(std::clamp(as[k] / amax, -1.0 + 1e-12, 1.0 - 1e-12));
      const double sd = std::exp(logstd[k]);
      lp += -0.5 * std::pow((z - mean[k]) / sd, 2) - logstd[k] - 0.5 * std::log(2.0 * M_PI);
      lp -= std::log(amax) + std::log(std::max(1e-300, 1.0 - std::tanh(z) * std::tanh(z)));
    }
    return lp;
  };
  const double cell = (2.0 * amax) / grid;
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      const double a0 = -amax + (i + 0.5) * cell;
      const double a1 = -amax + (j + 0.5) * cell;
      integral += std::exp(logp_at(a0, a1)) * cell * cell;
    }
  }
  CHECK(integral == doctest::Approx(1.0).epsilon(0.02));

  // And the agent's own logp agrees with the closed form at sampled actions.
  for (int i = 0; i < 50; ++i) {
    auto [act, lp] = agent.act_with_logprob(obs);
    CHECK(lp == doctest::Approx(logp_at(act.delta_alpha_upper, act.delta_alpha_lower))
                    .epsilon(1e-6));
    CHECK(std::isfinite(lp));
  }
}

TEST_CASE("gradient check: critic, policy, and temperature losses on a toy net") {
  SacConfig config;
  config.hidden = 4;
  config.seed = 77;
  SacAgent agent(config);
  std::mt19937_64 rng(11);
  const std::vector<Transition> data = random_batch(rng, 8);
  std::vector<const Transition*> batch;
  for (const Transition& t : data) batch.push_back(&t);

  Eigen::MatrixXd noise_next(SacAction::kDim, 8), noise(SacAction::kDim, 8);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int j = 0; j < 8; ++j) {
    for (int k = 0; k < SacAction::kDim; ++k) {
      noise_next(k, j) = gauss(rng);
      noise(k, j) = gauss(rng);
    }
  }

  const SacAgent::CriticStep cs = agent.critic_losses(batch, noise_next);
  CHECK(max_grad_rel_error(agent.q1, cs.g1, [&] {
          return agent.critic_losses(batch, noise_next).loss1;
        }) < 1e-3);
  CHECK(max_grad_rel_error(agent.q2, cs.g2, [&] {
          return agent.critic_losses(batch, noise_next).loss2;
        }) < 1e-3);

  const SacAgent::PolicyStep ps = agent.policy_loss(batch, noise);
  CHECK(max_grad_rel_error(agent.actor, ps.grads, [&] {
          return agent.policy_loss(batch, noise).loss;
        }) < 1e-3);

  double tloss = 0.0;
  const double tgrad = agent.temperature_loss_grad(ps.mean_logp, &tloss);
  CHECK(tgrad == doctest::Approx(-agent.beta() * (ps.mean_logp - 2.0)).epsilon(1e-12));
}

TEST_CASE("update: gamma = 0 collapses the critic target to the reward") {
  SacConfig config;
  config.hidden = 8;
  config.gamma = 0.0;
  config.batch_size = 16;
  config.warmup_transitions = 16;
  config.seed = 5;
  SacAgent agent(config);
  ReplayBuffer buf(64);
  std::mt19937_64 rng(2);
  for (const Transition& t : random_batch(rng, 32)) {
    Transition z = t;
    z.r = 0.0;
    buf.push(std::move(z));
  }
  // With r = 0 and gamma = 0 the target is exactly zero, so the critic loss
  // equals mean Q^2 over the batch; verify against a manual pass.
  const std::vector<size_t> idx = buf.sample_indices(config.batch_size, agent.rng());
  std::vector<const Transition*> batch;
  for (size_t i : idx) batch.push_back(&buf.at(i));
  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(SacAction::kDim, config.batch_size);
  const SacAgent::CriticStep cs = agent.critic_losses(batch, noise);
  double q2sum = 0.0;
  for (const Transition* t : batch) {
    Eigen::MatrixXd in(SacObservation::kDim + SacAction::kDim, 1);
    in.topRows(SacObservation::kDim) = t->s;
    in.bottomRows(SacAction::kDim) = t->a;
    q2sum += std::pow(agent.q1.forward(in)(0, 0), 2);
  }
  CHECK(cs.loss1 == doctest::Approx(q2sum / config.batch_size).epsilon(1e-9));
}

TEST_CASE("polyak with tau = 1 copies the critics exactly") {
  SacConfig config;
  config.hidden = 8;
  config.tau = 1.0;
  config.batch_size = 8;
  config.warmup_transitions = 8;
  config.seed = 31;
  SacAgent agent(config);
  ReplayBuffer buf(32);
  std::mt19937_64 rng(3);
  for (const Transition& t : random_batch(rng, 16)) buf.push(Transition(t));
  agent.update(buf);
  CHECK((agent.q1_target.W1 - agent.q1.W1).norm() == 0.0);
  CHECK((agent.q2_target.W3 - agent.q2.W3).norm() == 0.0);
}

TEST_CASE("checkpoint round trip preserves the policy; loader rejects mismatches") {
  SacConfig config;
  config.hidden = 16;
  config.seed = 41;
  SacAgent agent(config);
  const std::string path = "sac_test_checkpoint.bin";
  agent.save(path);
  SacAgent loaded = SacAgent::load(path);
  const SacObservation obs = ideal_obs(1.3, 0.2, 0.1);
  const SacAction a = agent.act(obs, true);
  const SacAction b = loaded.act(obs, true);
  CHECK(a.delta_alpha_upper == b.delta_alpha_upper);
  CHECK(a.delta_alpha_lower == b.delta_alpha_lower);

  // Corrupt the hidden width field: the loader must refuse.
  {
    std::ofstream out(path, std::ios::binary | std::ios::in);
    out.seekp(8 + 4 + 4);
    const uint32_t bad = 999;
    out.write(reinterpret_cast<const char*>(&bad), 4);  // act_dim -> 999
  }
  CHECK_THROWS(SacAgent::load(path));
  std::remove(path.c_str());
}

TEST_CASE("updates keep losses finite and move the temperature") {
  SacConfig config;
  config.hidden = 16;
  config.batch_size = 32;
  config.warmup_transitions = 32;
  config.seed = 12;
  SacAgent agent(config);
  ReplayBuffer buf(4096);
  std::mt19937_64 rng(8);
  for (const Transition& t : random_batch(rng, 512)) buf.push(Transition(t));
  const double beta0 = agent.beta();
  SacLosses last;
  for (int i = 0; i < 200; ++i) {
    last = agent.update(buf);
    REQUIRE(last.finite());
  }
  CHECK(agent.beta() != beta0);
}
