#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "tdlab/agents/factory.hpp"
#include "tdlab/agents/slate_policy.hpp"
#include "tdlab/approx/grad_check.hpp"
#include "tdlab/buffer/replay.hpp"
#include "tdlab/env/user_env.hpp"
#include "tdlab/harness/training.hpp"
#include "tdlab/oracle/fixtures.hpp"
#include "tdlab/oracle/tabular.hpp"
#include "tdlab/tdcore/alignment.hpp"
#include "tdlab/tdcore/losses.hpp"

namespace tdlab::harness {

inline constexpr double kGradTolerance = 1e-4;

/// Every TD and policy loss, each composed with freshly initialized networks.
enum class LossUnderTest : std::uint8_t { vtd, qtd, advantage_policy, q_max_policy, action_td, state_td, beta_state_td };

inline constexpr LossUnderTest kAllLosses[] = {LossUnderTest::vtd,         LossUnderTest::qtd,
                                               LossUnderTest::advantage_policy, LossUnderTest::q_max_policy,
                                               LossUnderTest::action_td,   LossUnderTest::state_td,
                                               LossUnderTest::beta_state_td};

inline std::string_view to_string(LossUnderTest l) {
  switch (l) {
    case LossUnderTest::vtd: return "vtd";
    case LossUnderTest::qtd: return "qtd";
    case LossUnderTest::advantage_policy: return "advantage_policy";
    case LossUnderTest::q_max_policy: return "q_max_policy";
    case LossUnderTest::action_td: return "action_td";
    case LossUnderTest::state_td: return "state_td";
    case LossUnderTest::beta_state_td: return "beta_state_td";
  }
  return "?";
}

namespace detail {

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  return x;
}

inline double scalar(const approx::Mlp& net, std::span<const double> x, approx::Activations& cache) {
  net.forward(x, cache);
  return cache.result()[0];
}

}  // namespace detail

/// Max relative error between the analytic gradient of `loss` with respect to
/// the trained network's parameters and central finite differences, on one
/// random configuration. Networks not trained by the loss are held fixed.
inline double loss_gradient_error(LossUnderTest loss, std::uint64_t seed) {
  using approx::Activations;
  using approx::Mlp;
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t obs_dim = 4, act_dim = 3;
  const auto s = detail::random_vector(obs_dim, rng);
  const auto s_next = detail::random_vector(obs_dim, rng);
  const auto a = detail::random_vector(act_dim, rng);
  const auto a_next = detail::random_vector(act_dim, rng);
  tdcore::TdSample base;
  base.r = 2.0 * unit(rng) - 1.0;
  base.gamma = 0.5 + 0.5 * unit(rng);
  base.done = seed % 5 == 4;
  const auto sa = agents::concat(s, a);
  const auto sa_next = agents::concat(s_next, a_next);
  const auto hidden = approx::Activation::tanh;

  switch (loss) {
    case LossUnderTest::vtd: {
      const Mlp v = Mlp::glorot({obs_dim, 6, 5, 1}, hidden, rng);
      const auto eval = [&](const Mlp& net, Activations& c1, Activations& c2) {
        auto smp = base;
        smp.v_s = detail::scalar(net, s, c1);
        smp.v_next = detail::scalar(net, s_next, c2);
        return tdcore::vtd_loss(smp);
      };
      Activations c1, c2;
      const auto rep = eval(v, c1, c2);
      auto g = v.zero_grad();
      v.backward(c1, std::span<const double>(&rep.grads.v_s, 1), &g);
      v.backward(c2, std::span<const double>(&rep.grads.v_next, 1), &g);
      return approx::grad_check(v, [&](const Mlp& p) { Activations x, y; return eval(p, x, y).loss; }, g);
    }
    case LossUnderTest::qtd: {
      const Mlp q = Mlp::glorot({obs_dim + act_dim, 6, 5, 1}, hidden, rng);
      const auto eval = [&](const Mlp& net, Activations& c1, Activations& c2) {
        auto smp = base;
        smp.q = detail::scalar(net, sa, c1);
        smp.q_next = detail::scalar(net, sa_next, c2);
        return tdcore::qtd_loss(smp);
      };
      Activations c1, c2;
      const auto rep = eval(q, c1, c2);
      auto g = q.zero_grad();
      q.backward(c1, std::span<const double>(&rep.grads.q, 1), &g);
      q.backward(c2, std::span<const double>(&rep.grads.q_next, 1), &g);
      return approx::grad_check(q, [&](const Mlp& p) { Activations x, y; return eval(p, x, y).loss; }, g);
    }
    case LossUnderTest::action_td: {
      const Mlp q = Mlp::glorot({obs_dim + act_dim, 6, 5, 1}, hidden, rng);
      const Mlp v = Mlp::glorot({obs_dim, 6, 5, 1}, hidden, rng);
      Activations cv;
      const double v_next = detail::scalar(v, s_next, cv);
      const auto eval = [&](const Mlp& net, Activations& c) {
        auto smp = base;
        smp.q = detail::scalar(net, sa, c);
        smp.v_next = v_next;
        return tdcore::action_td_loss(smp);
      };
      Activations c;
      const auto rep = eval(q, c);
      auto g = q.zero_grad();
      q.backward(c, std::span<const double>(&rep.grads.q, 1), &g);
      return approx::grad_check(q, [&](const Mlp& p) { Activations x; return eval(p, x).loss; }, g);
    }
    case LossUnderTest::state_td:
    case LossUnderTest::beta_state_td: {
      const Mlp v = Mlp::glorot({obs_dim, 6, 5, 1}, hidden, rng);
      const Mlp q = Mlp::glorot({obs_dim + act_dim, 6, 5, 1}, hidden, rng);
      Activations cq;
      const double q_sa = detail::scalar(q, sa, cq);
      const double beta = loss == LossUnderTest::state_td ? 1.0 : 0.1 + 9.9 * unit(rng);
      const auto eval = [&](const Mlp& net, Activations& c) {
        auto smp = base;
        smp.v_s = detail::scalar(net, s, c);
        smp.q = q_sa;
        return loss == LossUnderTest::state_td ? tdcore::state_td_loss(smp) : tdcore::beta_state_td_loss(smp, beta);
      };
      Activations c;
      const auto rep = eval(v, c);
      auto g = v.zero_grad();
      v.backward(c, std::span<const double>(&rep.grads.v_s, 1), &g);
      return approx::grad_check(v, [&](const Mlp& p) { Activations x; return eval(p, x).loss; }, g);
    }
    case LossUnderTest::advantage_policy: {
      // Plackett-Luce slate likelihood over item scores <actor(s), e_i>.
      const std::size_t n_items = 7, k = 3;
      std::vector<std::vector<double>> items;
      for (std::size_t i = 0; i < n_items; ++i) items.push_back(detail::random_vector(act_dim, rng));
      const env::SlateAction slate{env::random_slate(n_items, k, rng).items};
      const double adv = 2.0 * unit(rng) - 1.0;
      const Mlp actor = Mlp::glorot({obs_dim, 6, act_dim}, hidden, rng);
      std::vector<double> d_scores(n_items);
      const auto eval = [&](const Mlp& net, Activations& c, std::span<double> grad) {
        net.forward(s, c);
        const auto u = c.result();
        std::vector<double> scores(n_items);
        for (std::size_t i = 0; i < n_items; ++i) scores[i] = approx::dot(items[i].data(), u.data(), act_dim);
        return tdcore::advantage_policy_loss(adv, agents::plackett_luce_log_prob(scores, slate, grad));
      };
      Activations c;
      const auto pl = eval(actor, c, d_scores);
      std::vector<double> d_u(act_dim, 0.0);
      for (std::size_t i = 0; i < n_items; ++i)
        for (std::size_t d = 0; d < act_dim; ++d) d_u[d] += pl.d_log_pi * d_scores[i] * items[i][d];
      auto g = actor.zero_grad();
      actor.backward(c, d_u, &g);
      return approx::grad_check(actor, [&](const Mlp& p) { Activations x; return eval(p, x, {}).loss; }, g);
    }
    case LossUnderTest::q_max_policy: {
      agents::ContinuousActor actor;
      actor.net = agents::TrainableNet(Mlp::glorot({obs_dim, 6, act_dim}, hidden, rng), approx::UpdateRule::sgd, 0.0,
                                       false);
      actor.bound = 2.0;
      const Mlp critic = Mlp::glorot({obs_dim + act_dim, 6, 5, 1}, hidden, rng);
      const auto q_of = [&](std::span<const double> action, std::span<double> dq_da) {
        Activations c;
        const auto input = agents::concat(s, action);
        const double q = detail::scalar(critic, input, c);
        if (!dq_da.empty()) {
          std::vector<double> d_in(input.size());
          const double one = 1.0;
          critic.backward(c, std::span<const double>(&one, 1), nullptr, d_in);
          std::copy(d_in.begin() + static_cast<std::ptrdiff_t>(obs_dim), d_in.end(), dq_da.begin());
        }
        return q;
      };
      Activations c;
      const auto mu = actor.act(s, c);
      std::vector<double> dq_da(act_dim);
      const auto pol = tdcore::q_max_policy_loss(q_of(mu, dq_da));
      for (double& d : dq_da) d *= pol.d_log_pi;
      actor.backward(c, dq_da);
      const auto objective = [&](const Mlp& p) {
        agents::ContinuousActor probe = actor;
        probe.net.net = p;
        return tdcore::q_max_policy_loss(q_of(probe.act(s), {})).loss;
      };
      return approx::grad_check(actor.net.net, objective, actor.net.grad);
    }
  }
  return 0.0;
}

/// Runs one decomposed update of `backbone` on a small random batch and checks
/// that the V network got nothing from the action TD loss and the Q network
/// nothing from the state TD loss.
inline bool stop_gradient_audit(agents::Backbone backbone, std::uint64_t seed) {
  env::EnvConfig ec;
  ec.n_items = 12;
  ec.state_dim = 4;
  ec.slate_size = 3;
  ec.seed = seed;
  agents::AgentConfig ac;
  ac.backbone = backbone;
  ac.td_mode = agents::TdMode::decomposed;
  ac.hidden = {8};
  ac.hyper_dim = ec.state_dim;
  ac.exploration.sigma = 0.3;
  ac.exploration.epsilon = 0.3;
  env::UserEnv env(ec);
  auto agent = agents::make_agent(ac, env.shared_items(), ec.slate_size, seed);
  Rng rng(derive_seed(seed, SeedStream::explore));
  buffer::ReplayBuffer replay(64);
  auto [state, obs] = env.reset(seed);
  while (replay.size() < 16) {
    const auto action = agent->select_action(obs, true, rng);
    auto res = env::env_step(state, action.slate);
    replay.push({obs, action, res.reward, res.next, res.done, 0, state.step - 1});
    obs = res.next;
    if (res.done) std::tie(state, obs) = env.reset(seed + replay.size());
  }
  const auto report = agent->update(replay.sample(8, rng));
  const auto& audit = agent->last_audit();
  return !report.skipped && audit.recorded && audit.v_from_action_td.all_zero() && audit.q_from_state_td.all_zero() &&
         !audit.q_from_action_td.all_zero() && !audit.v_from_state_td.all_zero();
}

/// Triangle-inequality bound over n random residual pairs in [-1, 1]; returns
/// the number of samples whose stepwise V loss exceeds (delta1 + delta2)^2.
inline std::size_t bound_violations(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<tdcore::DecompositionResiduals> rs(n);
  for (auto& r : rs) r = {u(rng), u(rng)};
  return tdcore::bound_check(rs).violations;
}

struct WitnessLosses {
  double vtd = 0.0;
  double state_td = 0.0;
  double action_td = 0.0;
};

/// Mean losses over the fixture where the stepwise V loss is zero.
inline WitnessLosses misguidance_witness() {
  const auto fixture = oracle::make_alignment_fixture(tdcore::AlignmentCase::b);
  WitnessLosses w;
  for (const auto& s : fixture) {
    w.vtd += tdcore::vtd_loss(s).loss;
    w.state_td += tdcore::state_td_loss(s).loss;
    w.action_td += tdcore::action_td_loss(s).loss;
  }
  const double n = static_cast<double>(fixture.size());
  return {w.vtd / n, w.state_td / n, w.action_td / n};
}

/// For random 3-action instances, the minimizer of sum_a p(a) beta(a) (v - Q(a))^2
/// found from the loss gradients, against sum_a pi(a) Q(a). Returns the max gap.
inline double beta_stationary_gap(std::size_t n_instances, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0), qdist(-3.0, 3.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < n_instances; ++i) {
    double p[3], pi[3], q[3], ps = 0.0, pis = 0.0;
    for (int a = 0; a < 3; ++a) {
      p[a] = u(rng);
      pi[a] = u(rng);
      q[a] = qdist(rng);
      ps += p[a];
      pis += pi[a];
    }
    for (int a = 0; a < 3; ++a) {
      p[a] /= ps;
      pi[a] /= pis;
    }
    // Expected gradient in v; the objective is quadratic so one Newton step from
    // v = 0 lands on the minimizer.
    const auto grad = [&](double v) {
      double g = 0.0;
      for (int a = 0; a < 3; ++a) {
        tdcore::TdSample s;
        s.v_s = v;
        s.q = q[a];
        const double beta = tdcore::beta_weight(std::log(pi[a]), std::log(p[a]), 1e-12, 1e12);
        g += p[a] * tdcore::beta_state_td_loss(s, beta).grads.v_s;
      }
      return g;
    };
    const double g0 = grad(0.0);
    const double curvature = grad(1.0) - g0;
    const double v_min = -g0 / curvature;
    const double closed_form = pi[0] * q[0] + pi[1] * q[1] + pi[2] * q[2];
    worst = std::max(worst, std::abs(v_min - closed_form));
  }
  return worst;
}

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestReport {
  std::vector<SelftestCheck> checks;
  double max_grad_error = 0.0;
  std::size_t grad_checks = 0;
  bool stop_gradient_ok = true;
  std::size_t stop_gradient_checks = 0;
  double seconds = 0.0;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const SelftestCheck& c) { return c.passed; });
  }
};

/// Gradient checks of every loss on `n_seeds` seeds, the stop-gradient audit of
/// every decomposed backbone on each seed, and oracle, bound and fixture checks.
inline SelftestReport run_selftest(std::size_t n_seeds = 24) {
  const auto t0 = std::chrono::steady_clock::now();
  SelftestReport rep;
  const auto add = [&](std::string name, bool ok, std::string detail) {
    rep.checks.push_back({std::move(name), ok, std::move(detail)});
  };

  for (auto loss : kAllLosses) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n_seeds; ++i) {
      worst = std::max(worst, loss_gradient_error(loss, derive_seed(1000 + i, 77)));
      ++rep.grad_checks;
    }
    rep.max_grad_error = std::max(rep.max_grad_error, worst);
    add("grad_check " + std::string(to_string(loss)), worst < kGradTolerance, "max relative error " + csv_number(worst));
  }

  for (auto b : {agents::Backbone::a2c, agents::Backbone::dqn, agents::Backbone::ddpg, agents::Backbone::hac_lite}) {
    bool ok = true;
    for (std::size_t i = 0; i < n_seeds; ++i) {
      ok = stop_gradient_audit(b, 500 + i) && ok;
      ++rep.stop_gradient_checks;
    }
    rep.stop_gradient_ok = rep.stop_gradient_ok && ok;
    add("stop_gradient " + std::string(agents::to_string(b)), ok, ok ? "cross-term gradients exactly zero" : "nonzero cross-term gradient");
  }

  {
    oracle::TabularMdp one{1, 1, {{{1.0}}}, {{1.0}}, {false}, 0.9};
    const auto v = oracle::policy_evaluation(one, oracle::StochasticPolicy::uniform(1, 1)).v_star[0];
    add("oracle self-loop", std::abs(v - 10.0) < 1e-8, "V* = " + csv_number(v));
    oracle::TabularMdp chain{3, 1, {{{0, 1, 0}}, {{0, 0, 1}}, {{0, 0, 1}}}, {{1.0}, {-0.2}, {0.0}}, {false, false, true}, 0.9};
    const auto vc = oracle::policy_evaluation(chain, oracle::StochasticPolicy::uniform(3, 1)).v_star[0];
    add("oracle chain", std::abs(vc - 0.82) < 1e-10, "V*(s0) = " + csv_number(vc));
    Rng rng(99);
    const auto mdp = oracle::random_mdp(6, 3, 0.9, rng, 1);
    const auto pol = oracle::random_policy(6, 3, rng);
    const auto ov = oracle::policy_evaluation(mdp, pol);
    double gap = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      double ev = 0.0;
      for (std::size_t a = 0; a < mdp.n_actions; ++a) {
        ev += pol.probs[s][a] * ov.q_star[s][a];
        double target = mdp.reward[s][a];
        for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) target += mdp.gamma * mdp.transition[s][a][s2] * ov.v_star[s2];
        gap = std::max(gap, std::abs(target - ov.q_star[s][a]));
      }
      gap = std::max(gap, std::abs(ev - ov.v_star[s]));
    }
    add("oracle consistency", gap < 1e-9, "max Bellman gap " + csv_number(gap));
  }

  const auto violations = bound_violations(10000, 4242);
  add("residual bound", violations == 0, std::to_string(violations) + " violations in 10000 samples");
  const auto w = misguidance_witness();
  add("misguidance witness", w.vtd < 1e-12 && w.state_td > 0.1 && w.action_td > 0.1,
      "vtd " + csv_number(w.vtd) + ", state_td " + csv_number(w.state_td) + ", action_td " + csv_number(w.action_td));
  const double gap = beta_stationary_gap(100, 31337);
  add("beta stationary point", gap < 1e-9, "max gap " + csv_number(gap));

  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline void print_selftest(std::ostream& out, const SelftestReport& rep) {
  for (const auto& c : rep.checks) out << (c.passed ? "ok   " : "FAIL ") << c.name << ": " << c.detail << '\n';
  out << (rep.passed() ? "selftest passed" : "selftest FAILED") << " (" << rep.checks.size() << " checks, "
      << rep.grad_checks << " gradient checks, " << csv_number(std::round(rep.seconds * 1000) / 1000) << " s)\n";
}

}  // namespace tdlab::harness
