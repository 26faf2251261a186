#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "tdlab/agents/agent.hpp"
#include "tdlab/agents/networks.hpp"
#include "tdlab/agents/slate_policy.hpp"
#include "tdlab/tdcore/losses.hpp"

namespace tdlab::agents {

/// Advantage actor-critic over slates. The actor emits a user vector u and item
/// scores <u, e_i>; slates follow the Plackett-Luce model over those scores.
///
/// original:   V learned by the stepwise V TD loss, A = r + gamma V(s') - V(s).
/// decomposed: Q learned by the action TD loss, V by the beta-weighted state TD
///             loss, and A = Q(s, a) - V(s), which drops the user-noise residual.
class A2cAgent final : public Agent {
 public:
  A2cAgent(AgentConfig config, std::shared_ptr<const env::ItemEmbeddings> items, std::size_t slate_size,
           Rng& init_rng)
      : Agent(std::move(config), std::move(items), slate_size) {
    const std::size_t obs = observation_size();
    const std::size_t dim = items_->dim();
    const auto& c = config_;
    actor_ = TrainableNet(approx::Mlp::glorot(c.layer_sizes(obs, dim), c.activation, init_rng), c.optimizer, c.lr_policy,
                          false);
    v_ = TrainableNet(approx::Mlp::glorot(c.layer_sizes(obs, 1), c.activation, init_rng), c.optimizer, c.lr_v,
                      c.use_target_net);
    if (c.td_mode == TdMode::decomposed) {
      q_ = TrainableNet(approx::Mlp::glorot(c.layer_sizes(obs + dim, 1), c.activation, init_rng), c.optimizer, c.lr_q,
                        c.use_target_net);
    }
  }

  std::vector<double> item_scores(const env::Observation& obs, approx::Activations* cache = nullptr) const {
    approx::Activations local;
    approx::Activations& c = cache ? *cache : local;
    actor_.net.forward(obs.input(), c);
    const auto u = c.result();
    std::vector<double> scores(items_->size());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = items_->dot(i, u);
    return scores;
  }

  PolicyOutput select_action(const env::Observation& obs, bool explore, Rng& rng) override {
    const auto scores = item_scores(obs);
    PolicyOutput out;
    if (explore) {
      out.slate = gumbel_top_k(scores, slate_size_, rng);
      out.log_likelihood = plackett_luce_log_prob(scores, out.slate);
    } else {
      out.slate = {top_k(scores, slate_size_)};
      out.deterministic = true;
    }
    return out;
  }

  std::optional<double> current_log_likelihood(const env::Observation& obs, const PolicyOutput& action) const override {
    return plackett_luce_log_prob(item_scores(obs), action.slate);
  }

  UpdateReport do_update(std::span<const buffer::Transition* const> batch) override {
    const bool decomposed = config_.td_mode == TdMode::decomposed;
    actor_.grad.set_zero();
    v_.grad.set_zero();
    if (decomposed) {
      q_.grad.set_zero();
      audit_.reset(v_.net, q_.net);
    }

    BatchStats stats;
    approx::Activations c_v, c_vn, c_actor;
    SlateQ slate_q;
    std::vector<double> d_scores(items_->size());
    std::vector<double> d_u(items_->dim());
    for (const auto* t : batch) {
      const double v_s = fwd(v_.net, t->obs.input(), c_v);
      const double v_next = fwd(v_.bootstrap(), t->next_obs.input(), c_vn);
      const auto scores = item_scores(t->obs, &c_actor);
      const double log_pi = plackett_luce_log_prob(scores, t->action.slate, d_scores);
      const Importance imp = importance_from(log_pi, t->action);
      stats.beta += imp.beta;
      stats.alpha += imp.alpha;
      stats.has_importance = true;

      auto sample = base_sample(*t);
      sample.v_s = v_s;
      sample.v_next = v_next;
      double adv = 0.0;
      if (!decomposed) {
        const auto rep = tdcore::vtd_loss(sample);
        v_.net.backward(c_v, one(rep.grads.v_s), &v_.grad);
        if (!v_.has_target()) v_.net.backward(c_vn, one(rep.grads.v_next), &v_.grad);
        adv = tdcore::advantage(sample);
        stats.critic += rep.loss;
        stats.has_critic = true;
        stats.check(rep.loss);
      } else {
        slate_q.evaluate(q_.net, t->obs.input(), *items_, t->action.slate.items);
        sample.q = slate_q.value;
        const auto action = tdcore::action_td_loss(sample);
        slate_q.backward(q_.net, action.grads.q, audit_.q_from_action_td);
        if (!v_.has_target()) v_.net.backward(c_vn, one(action.grads.v_next), &audit_.v_from_action_td);
        const auto state = tdcore::beta_state_td_loss(sample, applied_beta(imp));
        v_.net.backward(c_v, one(state.grads.v_s), &audit_.v_from_state_td);
        slate_q.backward(q_.net, state.grads.q, audit_.q_from_state_td);
        adv = slate_q.value - v_s;
        stats.action_td += action.loss;
        stats.state_td += state.residual * state.residual;
        stats.has_decomposed = true;
        stats.check(action.loss);
        stats.check(state.loss);
      }

      const auto policy = tdcore::advantage_policy_loss(adv, log_pi);
      std::fill(d_u.begin(), d_u.end(), 0.0);
      for (std::size_t i = 0; i < d_scores.size(); ++i) {
        const double g = policy.d_log_pi * d_scores[i];
        if (g == 0.0) continue;
        const auto e = items_->row(i);
        for (std::size_t d = 0; d < d_u.size(); ++d) d_u[d] += g * e[d];
      }
      actor_.net.backward(c_actor, d_u, &actor_.grad);
      stats.policy += policy.loss;
      stats.adv += adv;
      stats.has_policy = stats.has_adv = true;
      stats.check(policy.loss);
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
      v_.grad.scale(inv);
    }
    actor_.grad.scale(inv);

    UpdateReport report = stats.finish(batch.size());
    report.grad_norm_v = v_.grad.norm();
    report.grad_norm_policy = actor_.grad.norm();
    if (decomposed) report.grad_norm_q = q_.grad.norm();
    ensure_finite(stats.finite && v_.grad.all_finite() && actor_.grad.all_finite() && (!decomposed || q_.grad.all_finite()),
                  "a2c update: non-finite loss or gradient");
    v_.apply(config_.target_tau);
    if (decomposed) q_.apply(config_.target_tau);
    actor_.apply(config_.target_tau);
    return report;
  }

  std::vector<std::pair<std::string, TrainableNet*>> networks() override {
    std::vector<std::pair<std::string, TrainableNet*>> out{{"actor", &actor_}, {"v", &v_}};
    if (config_.td_mode == TdMode::decomposed) out.emplace_back("q", &q_);
    return out;
  }

 private:
  TrainableNet actor_;
  TrainableNet v_;
  TrainableNet q_;
};

}  // namespace tdlab::agents
