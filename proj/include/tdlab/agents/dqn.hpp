#pragma once

#include <algorithm>
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

/// Q(s, slate) = v + adv - mean_adv.
inline double dueling_q(double v, double adv, double mean_adv) { return v + adv - mean_adv; }

/// Epsilon-greedy slate Q-learning with an item-level critic q(obs ++ e_i);
/// Q(s, slate) is the mean item score and the greedy slate is the top-K items.
///
/// original:   Q learned by the Q TD loss against the greedy next slate.
/// decomposed: Q learned by the action TD loss against a separate V head, and
///             V by the beta-weighted state TD loss.
class DqnAgent final : public Agent {
 public:
  DqnAgent(AgentConfig config, std::shared_ptr<const env::ItemEmbeddings> items, std::size_t slate_size, Rng& init_rng)
      : Agent(std::move(config), std::move(items), slate_size) {
    const std::size_t obs = observation_size();
    const auto& c = config_;
    q_ = TrainableNet(approx::Mlp::glorot(c.layer_sizes(obs + items_->dim(), 1), c.activation, init_rng), c.optimizer,
                      c.lr_q, c.use_target_net);
    if (c.td_mode == TdMode::decomposed) {
      v_ = TrainableNet(approx::Mlp::glorot(c.layer_sizes(obs, 1), c.activation, init_rng), c.optimizer, c.lr_v,
                        c.use_target_net);
    }
  }

  std::vector<double> item_scores(const env::Observation& obs) const {
    return ItemScorer(q_.net, *items_).scores(obs.input());
  }

  env::SlateAction greedy_slate(const env::Observation& obs) const { return {top_k(item_scores(obs), slate_size_)}; }

  PolicyOutput select_action(const env::Observation& obs, bool explore, Rng& rng) override {
    const auto greedy = greedy_slate(obs);
    const double eps = explore ? config_.exploration.epsilon_at(step_) : 0.0;
    PolicyOutput out;
    if (eps <= 0.0) {
      out.slate = greedy;
      out.deterministic = true;
      return out;
    }
    std::bernoulli_distribution coin(eps);
    out.slate = coin(rng) ? env::random_slate(items_->size(), slate_size_, rng) : greedy;
    out.log_likelihood = epsilon_greedy_log_prob(eps, items_->size(), out.slate, greedy);
    return out;
  }

  std::optional<double> current_log_likelihood(const env::Observation& obs, const PolicyOutput& action) const override {
    const double eps = config_.exploration.epsilon_at(step_);
    if (eps <= 0.0) return std::nullopt;
    return epsilon_greedy_log_prob(eps, items_->size(), action.slate, greedy_slate(obs));
  }

  UpdateReport do_update(std::span<const buffer::Transition* const> batch) override {
    const bool decomposed = config_.td_mode == TdMode::decomposed;
    q_.grad.set_zero();
    if (decomposed) {
      v_.grad.set_zero();
      audit_.reset(v_.net, q_.net);
    }
    const ItemScorer online(q_.net, *items_);
    const ItemScorer boot(q_.bootstrap(), *items_);

    BatchStats stats;
    SlateQ slate_q, next_q;
    approx::Activations c_v, c_vn;
    for (const auto* t : batch) {
      slate_q.evaluate(q_.net, t->obs.input(), *items_, t->action.slate.items);
      auto sample = base_sample(*t);
      sample.q = slate_q.value;
      if (!decomposed) {
        const auto next_scores = boot.scores(t->next_obs.input());
        const auto next_greedy = top_k(next_scores, slate_size_);
        double q_next = 0.0;
        for (auto i : next_greedy) q_next += next_scores[i];
        sample.q_next = q_next / static_cast<double>(slate_size_);
        const auto rep = tdcore::qtd_loss(sample);
        slate_q.backward(q_.net, rep.grads.q, q_.grad);
        if (!q_.has_target() && rep.grads.q_next != 0.0) {
          next_q.evaluate(q_.net, t->next_obs.input(), *items_, next_greedy);
          next_q.backward(q_.net, rep.grads.q_next, q_.grad);
        }
        stats.critic += rep.loss;
        stats.has_critic = true;
        stats.check(rep.loss);
        continue;
      }

      sample.v_s = fwd(v_.net, t->obs.input(), c_v);
      sample.v_next = fwd(v_.bootstrap(), t->next_obs.input(), c_vn);
      std::optional<double> log_pi;
      const double eps = config_.exploration.epsilon_at(step_);
      if (eps > 0.0 && !t->action.deterministic) {
        const env::SlateAction greedy{top_k(online.scores(t->obs.input()), slate_size_)};
        log_pi = epsilon_greedy_log_prob(eps, items_->size(), t->action.slate, greedy);
      }
      const Importance imp = importance_from(log_pi, t->action);
      stats.beta += imp.beta;
      stats.alpha += imp.alpha;
      stats.has_importance = true;

      const auto action = tdcore::action_td_loss(sample);
      slate_q.backward(q_.net, action.grads.q, audit_.q_from_action_td);
      if (!v_.has_target()) v_.net.backward(c_vn, one(action.grads.v_next), &audit_.v_from_action_td);
      const auto state = tdcore::beta_state_td_loss(sample, applied_beta(imp));
      v_.net.backward(c_v, one(state.grads.v_s), &audit_.v_from_state_td);
      slate_q.backward(q_.net, state.grads.q, audit_.q_from_state_td);
      stats.action_td += action.loss;
      stats.state_td += state.residual * state.residual;
      stats.adv += slate_q.value - *sample.v_s;
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
                  "dqn update: non-finite loss or gradient");
    q_.apply(config_.target_tau);
    if (decomposed) v_.apply(config_.target_tau);
    return report;
  }

  std::vector<std::pair<std::string, TrainableNet*>> networks() override {
    std::vector<std::pair<std::string, TrainableNet*>> out{{"q", &q_}};
    if (config_.td_mode == TdMode::decomposed) out.emplace_back("v", &v_);
    return out;
  }

 private:
  TrainableNet q_;
  TrainableNet v_;
};

/// Dueling baseline: a V head and an advantage head with one output per item.
/// Q(s, slate) = V(s) + mean_k adv(s, i_k) - mean_i adv(s, i). Only the
/// original Q TD loss applies.
class DuelingDqnAgent final : public Agent {
 public:
  DuelingDqnAgent(AgentConfig config, std::shared_ptr<const env::ItemEmbeddings> items, std::size_t slate_size,
                  Rng& init_rng)
      : Agent(std::move(config), std::move(items), slate_size) {
    const std::size_t obs = observation_size();
    const auto& c = config_;
    v_ = TrainableNet(approx::Mlp::glorot(c.layer_sizes(obs, 1), c.activation, init_rng), c.optimizer, c.lr_v,
                      c.use_target_net);
    adv_ = TrainableNet(approx::Mlp::glorot(c.layer_sizes(obs, items_->size()), c.activation, init_rng), c.optimizer,
                        c.lr_q, c.use_target_net);
  }

  std::vector<double> advantages(const env::Observation& obs) const { return adv_.net.forward(obs.input()); }

  /// Q of a slate given the state value and the per-item advantages.
  double slate_q(double v, std::span<const double> adv, std::span<const std::size_t> slate) const {
    double mean_all = 0.0;
    for (double a : adv) mean_all += a;
    mean_all /= static_cast<double>(adv.size());
    double mean_slate = 0.0;
    for (auto i : slate) mean_slate += adv[i];
    mean_slate /= static_cast<double>(slate.size());
    return dueling_q(v, mean_slate, mean_all);
  }

  PolicyOutput select_action(const env::Observation& obs, bool explore, Rng& rng) override {
    const env::SlateAction greedy{top_k(advantages(obs), slate_size_)};
    const double eps = explore ? config_.exploration.epsilon_at(step_) : 0.0;
    PolicyOutput out;
    if (eps <= 0.0) {
      out.slate = greedy;
      out.deterministic = true;
      return out;
    }
    std::bernoulli_distribution coin(eps);
    out.slate = coin(rng) ? env::random_slate(items_->size(), slate_size_, rng) : greedy;
    out.log_likelihood = epsilon_greedy_log_prob(eps, items_->size(), out.slate, greedy);
    return out;
  }

  std::optional<double> current_log_likelihood(const env::Observation& obs, const PolicyOutput& action) const override {
    const double eps = config_.exploration.epsilon_at(step_);
    if (eps <= 0.0) return std::nullopt;
    return epsilon_greedy_log_prob(eps, items_->size(), action.slate, {top_k(advantages(obs), slate_size_)});
  }

  UpdateReport do_update(std::span<const buffer::Transition* const> batch) override {
    v_.grad.set_zero();
    adv_.grad.set_zero();
    const std::size_t n = items_->size();
    const double k = static_cast<double>(slate_size_);
    BatchStats stats;
    approx::Activations c_v, c_a, c_vn, c_an;
    std::vector<double> d_adv(n);
    const auto add_slate_grad = [&](std::span<const std::size_t> slate, double upstream) {
      std::fill(d_adv.begin(), d_adv.end(), -upstream / static_cast<double>(n));
      for (auto i : slate) d_adv[i] += upstream / k;
    };
    for (const auto* t : batch) {
      const double v_s = fwd(v_.net, t->obs.input(), c_v);
      adv_.net.forward(t->obs.input(), c_a);
      const double v_next = fwd(v_.bootstrap(), t->next_obs.input(), c_vn);
      adv_.bootstrap().forward(t->next_obs.input(), c_an);
      const auto next_greedy = top_k(c_an.result(), slate_size_);

      auto sample = base_sample(*t);
      sample.q = slate_q(v_s, c_a.result(), t->action.slate.items);
      sample.q_next = slate_q(v_next, c_an.result(), next_greedy);
      const auto rep = tdcore::qtd_loss(sample);

      v_.net.backward(c_v, one(rep.grads.q), &v_.grad);
      add_slate_grad(t->action.slate.items, rep.grads.q);
      adv_.net.backward(c_a, d_adv, &adv_.grad);
      if (!v_.has_target() && rep.grads.q_next != 0.0) {
        v_.net.backward(c_vn, one(rep.grads.q_next), &v_.grad);
        add_slate_grad(next_greedy, rep.grads.q_next);
        adv_.net.backward(c_an, d_adv, &adv_.grad);
      }
      stats.critic += rep.loss;
      stats.has_critic = true;
      stats.check(rep.loss);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    v_.grad.scale(inv);
    adv_.grad.scale(inv);
    UpdateReport report = stats.finish(batch.size());
    report.grad_norm_v = v_.grad.norm();
    report.grad_norm_q = adv_.grad.norm();
    ensure_finite(stats.finite && v_.grad.all_finite() && adv_.grad.all_finite(),
                  "dueling update: non-finite loss or gradient");
    v_.apply(config_.target_tau);
    adv_.apply(config_.target_tau);
    return report;
  }

  std::vector<std::pair<std::string, TrainableNet*>> networks() override { return {{"v", &v_}, {"adv", &adv_}}; }

 private:
  TrainableNet v_;
  TrainableNet adv_;
};

}  // namespace tdlab::agents
