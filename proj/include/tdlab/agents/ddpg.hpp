#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "tdlab/agents/agent.hpp"
#include "tdlab/agents/networks.hpp"
#include "tdlab/agents/slate_policy.hpp"
#include "tdlab/tdcore/losses.hpp"

namespace tdlab::agents {

/// Deterministic actor mu(obs) = bound * tanh(net(obs)).
struct ContinuousActor {
  TrainableNet net;
  double bound = 2.0;

  std::vector<double> act(std::span<const double> obs, approx::Activations& cache, bool use_target = false) const {
    (use_target ? net.bootstrap() : net.net).forward(obs, cache);
    const auto raw = cache.result();
    std::vector<double> a(raw.begin(), raw.end());
    for (double& x : a) x = bound * std::tanh(x);
    return a;
  }

  std::vector<double> act(std::span<const double> obs, bool use_target = false) const {
    approx::Activations cache;
    return act(obs, cache, use_target);
  }

  /// Accumulates d(loss)/d(params) into net.grad given d(loss)/d(action).
  void backward(const approx::Activations& cache, std::span<const double> d_action) {
    const auto& raw = cache.result();
    std::vector<double> d_raw(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double t = std::tanh(raw[i]);
      d_raw[i] = d_action[i] * bound * (1.0 - t * t);
    }
    net.net.backward(cache, d_raw, &net.grad);
  }
};

/// Result of one deterministic policy-gradient step.
struct ActorStep {
  double policy_loss = 0.0;  // mean of -Q(s, mu(s))
  double grad_norm = 0.0;
};

/// One step of gradient ascent on mean_s Q(s, mu(s)). `critic(obs, action,
/// dq_da)` returns Q and writes dQ/da; the critic itself is never modified.
template <class Critic>
ActorStep actor_gradient_step(ContinuousActor& actor, std::span<const std::vector<double>> observations,
                              Critic&& critic, double target_tau) {
  require(!observations.empty(), "actor_gradient_step: empty batch");
  actor.net.grad.set_zero();
  approx::Activations cache;
  ActorStep out;
  for (const auto& obs : observations) {
    const auto a = actor.act(obs, cache);
    std::vector<double> dq_da(a.size(), 0.0);
    const double q = critic(std::span<const double>(obs), std::span<const double>(a), std::span<double>(dq_da));
    for (double& g : dq_da) g = -g;
    actor.backward(cache, dq_da);
    out.policy_loss -= q;
  }
  const double inv = 1.0 / static_cast<double>(observations.size());
  actor.net.grad.scale(inv);
  out.policy_loss *= inv;
  out.grad_norm = actor.net.grad.norm();
  if (!std::isfinite(out.policy_loss) || !actor.net.grad.all_finite())
    throw DivergenceError("actor step: non-finite loss or gradient");
  actor.net.apply(target_tau);
  return out;
}

/// Continuous hyper-action backbones. The actor emits a hyper-action, Gaussian
/// noise of scale sigma explores, and the slate is the top-K items by
/// <hyper-action, e_i>. The critic reads obs ++ action, where action is the
/// freshly recomputed actor output (ddpg) or the stored sampled hyper-action
/// (hac_lite).
class ContinuousAgent final : public Agent {
 public:
  ContinuousAgent(AgentConfig config, std::shared_ptr<const env::ItemEmbeddings> items, std::size_t slate_size,
                  Rng& init_rng)
      : Agent(std::move(config), std::move(items), slate_size) {
    require(is_continuous(config_.backbone), "ContinuousAgent needs the ddpg or hac_lite backbone");
    require_shape(config_.hyper_dim == items_->dim(), "hyper_dim must equal the item embedding width");
    const std::size_t obs = observation_size();
    const auto& c = config_;
    actor_.net = TrainableNet(approx::Mlp::glorot(c.layer_sizes(obs, c.hyper_dim), c.activation, init_rng), c.optimizer,
                              c.lr_policy, c.use_target_net);
    actor_.bound = c.actor_bound;
    q_ = TrainableNet(approx::Mlp::glorot(c.layer_sizes(obs + c.hyper_dim, 1), c.activation, init_rng), c.optimizer,
                      c.lr_q, c.use_target_net);
    if (c.td_mode == TdMode::decomposed) {
      v_ = TrainableNet(approx::Mlp::glorot(c.layer_sizes(obs, 1), c.activation, init_rng), c.optimizer, c.lr_v,
                        c.use_target_net);
    }
  }

  const ContinuousActor& actor() const { return actor_; }
  ContinuousActor& actor() { return actor_; }
  const approx::Mlp& critic() const { return q_.net; }

  PolicyOutput select_action(const env::Observation& obs, bool explore, Rng& rng) override {
    const double sigma = explore ? config_.exploration.sigma_at(step_) : 0.0;
    PolicyOutput out;
    const auto mean = actor_.act(obs.input());
    out.hyper_action = mean;
    if (sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, sigma);
      for (double& x : out.hyper_action) x += noise(rng);
      out.log_likelihood = gaussian_log_density(out.hyper_action, mean, sigma);
    } else {
      out.deterministic = true;
    }
    out.slate = slate_from_hyper_action(out.hyper_action, *items_, slate_size_);
    return out;
  }

  std::optional<double> current_log_likelihood(const env::Observation& obs, const PolicyOutput& action) const override {
    const double sigma = config_.exploration.sigma_at(step_);
    if (sigma <= 0.0) return std::nullopt;
    require_shape(action.hyper_action.size() == config_.hyper_dim, "stored action has no hyper-action");
    return gaussian_log_density(action.hyper_action, actor_.act(obs.input()), sigma);
  }

  /// Q(obs, a) with dQ/da, reading the current critic.
  auto critic_gradient() const {
    return [this](std::span<const double> obs, std::span<const double> a, std::span<double> dq_da) {
      approx::Activations cache;
      const auto input = concat(obs, a);
      q_.net.forward(input, cache);
      std::vector<double> d_input(input.size());
      const double up = 1.0;
      q_.net.backward(cache, one(up), nullptr, d_input);
      std::copy(d_input.end() - static_cast<std::ptrdiff_t>(a.size()), d_input.end(), dq_da.begin());
      return cache.result()[0];
    };
  }

  UpdateReport do_update(std::span<const buffer::Transition* const> batch) override {
    const bool decomposed = config_.td_mode == TdMode::decomposed;
    const bool hac = config_.backbone == Backbone::hac_lite;
    const double sigma = config_.exploration.sigma_at(step_);
    q_.grad.set_zero();
    if (decomposed) {
      v_.grad.set_zero();
      audit_.reset(v_.net, q_.net);
    }

    BatchStats stats;
    approx::Activations c_q, c_qn, c_v, c_vn, c_actor;
    for (const auto* t : batch) {
      const auto mu = actor_.act(t->obs.input(), c_actor);
      if (hac) require_shape(t->action.hyper_action.size() == config_.hyper_dim, "hac_lite transition lacks a hyper-action");
      const auto& action_in = hac ? t->action.hyper_action : mu;
      auto sample = base_sample(*t);
      sample.q = fwd(q_.net, concat(t->obs.input(), action_in), c_q);

      if (!decomposed) {
        const auto mu_next = actor_.act(t->next_obs.input(), actor_.net.has_target());
        sample.q_next = fwd(q_.bootstrap(), concat(t->next_obs.input(), mu_next), c_qn);
        const auto rep = tdcore::qtd_loss(sample);
        q_.net.backward(c_q, one(rep.grads.q), &q_.grad);
        if (!q_.has_target()) q_.net.backward(c_qn, one(rep.grads.q_next), &q_.grad);
        stats.critic += rep.loss;
        stats.has_critic = true;
        stats.check(rep.loss);
        continue;
      }

      sample.v_s = fwd(v_.net, t->obs.input(), c_v);
      sample.v_next = fwd(v_.bootstrap(), t->next_obs.input(), c_vn);
      std::optional<double> log_pi;
      if (sigma > 0.0 && !t->action.deterministic) log_pi = gaussian_log_density(t->action.hyper_action, mu, sigma);
      const Importance imp = importance_from(log_pi, t->action);
      stats.beta += imp.beta;
      stats.alpha += imp.alpha;
      stats.has_importance = true;

      const auto action = tdcore::action_td_loss(sample);
      q_.net.backward(c_q, one(action.grads.q), &audit_.q_from_action_td);
      if (!v_.has_target()) v_.net.backward(c_vn, one(action.grads.v_next), &audit_.v_from_action_td);
      const auto state = tdcore::beta_state_td_loss(sample, applied_beta(imp));
      v_.net.backward(c_v, one(state.grads.v_s), &audit_.v_from_state_td);
      q_.net.backward(c_q, one(state.grads.q), &audit_.q_from_state_td);
      stats.action_td += action.loss;
      stats.state_td += state.residual * state.residual;
      stats.adv += *sample.q - *sample.v_s;
      stats.has_decomposed = stats.has_adv = true;
      stats.check(action.loss);
      stats.check(state.loss);
    }

    const double inv = 1.0 / static_cast<double>(batch.size());
    if (decomposed) {
      for (auto* g : {&audit_.v_from_action_td, &audit_.v_from_state_td, &audit_.q_from_action_td, &audit_.q_from_state_td})
        g->scale(inv);
      v_.grad.add(audit_.v_from_action_td);
      v_.grad.add(audit_.v_from_state_td);
      q_.grad.add(audit_.q_from_action_td);
      q_.grad.add(audit_.q_from_state_td);
    } else {
      q_.grad.scale(inv);
    }
    UpdateReport report = stats.finish(batch.size());
    report.grad_norm_q = q_.grad.norm();
    if (decomposed) report.grad_norm_v = v_.grad.norm();
    ensure_finite(stats.finite && q_.grad.all_finite() && (!decomposed || v_.grad.all_finite()),
                  "continuous update: non-finite loss or gradient");
    q_.apply(config_.target_tau);
    if (decomposed) v_.apply(config_.target_tau);

    std::vector<std::vector<double>> states;
    states.reserve(batch.size());
    for (const auto* t : batch) states.emplace_back(t->obs.input().begin(), t->obs.input().end());
    const ActorStep step = actor_gradient_step(actor_, states, critic_gradient(), config_.target_tau);
    report.policy_loss = step.policy_loss;
    report.grad_norm_policy = step.grad_norm;
    return report;
  }

  std::vector<std::pair<std::string, TrainableNet*>> networks() override {
    std::vector<std::pair<std::string, TrainableNet*>> out{{"actor", &actor_.net}, {"q", &q_}};
    if (config_.td_mode == TdMode::decomposed) out.emplace_back("v", &v_);
    return out;
  }

 private:
  ContinuousActor actor_;
  TrainableNet q_;
  TrainableNet v_;
};

}  // namespace tdlab::agents
