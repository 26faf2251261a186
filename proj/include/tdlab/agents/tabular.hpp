#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tdlab/approx/mlp.hpp"
#include "tdlab/approx/optimizer.hpp"
#include "tdlab/error.hpp"
#include "tdlab/oracle/tabular.hpp"
#include "tdlab/random.hpp"
#include "tdlab/tdcore/losses.hpp"

namespace tdlab::agents {

enum class TabularRule : std::uint8_t { vtd, qtd, decomposed };

inline std::string_view to_string(TabularRule r) {
  switch (r) {
    case TabularRule::vtd: return "vtd";
    case TabularRule::qtd: return "qtd";
    case TabularRule::decomposed: return "decomposed";
  }
  return "?";
}

struct TabularLearnerConfig {
  TabularRule rule = TabularRule::decomposed;
  double lr = 0.03;
  double lr_half_life = 10000.0;  // lr_t = lr / (1 + t / lr_half_life)
  bool use_beta = true;
  double beta_clip_lo = 0.1;
  double beta_clip_hi = 10.0;

  double lr_at(std::uint64_t t) const { return lr / (1.0 + static_cast<double>(t) / lr_half_life); }
};

/// One sampled MDP step together with the behavior probability of its action.
struct TabularTransition {
  std::size_t s = 0;
  std::size_t a = 0;
  double r = 0.0;
  std::size_t s_next = 0;
  bool done = false;
};

/// TD learning on a finite MDP with V and Q held in lookup tables: networks
/// whose input is the one-hot state, so approximation error is zero and only
/// the TD rule is under test. Learns values of `target` from transitions drawn
/// under `behavior`.
class TabularTdLearner {
 public:
  TabularTdLearner(const oracle::TabularMdp& mdp, oracle::StochasticPolicy target, oracle::StochasticPolicy behavior,
                   TabularLearnerConfig config)
      : mdp_(&mdp),
        target_(std::move(target)),
        behavior_(std::move(behavior)),
        config_(config),
        v_(approx::Mlp::lookup_table(mdp.n_states, 1)),
        q_(approx::Mlp::lookup_table(mdp.n_states, mdp.n_actions)),
        v_opt_(approx::UpdateRule::sgd, config.lr),
        q_opt_(approx::UpdateRule::sgd, config.lr) {
    mdp.validate();
    target_.validate(mdp);
    behavior_.validate(mdp);
    for (std::size_t s = 0; s < mdp.n_states; ++s)
      if (!mdp.terminal[s]) live_states_.push_back(s);
    require(!live_states_.empty(), "TabularTdLearner: the MDP has no non-terminal state");
  }

  /// Start state uniform over non-terminal states, action from the behavior policy.
  TabularTransition sample(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, live_states_.size() - 1);
    TabularTransition t;
    t.s = live_states_[pick(rng)];
    t.a = oracle::sample_index(behavior_.probs[t.s], rng);
    t.r = mdp_->reward[t.s][t.a];
    t.s_next = oracle::sample_index(mdp_->transition[t.s][t.a], rng);
    t.done = mdp_->terminal[t.s_next];
    return t;
  }

  double beta(std::size_t s, std::size_t a) const {
    if (!config_.use_beta) return 1.0;
    const double pi = target_.probs[s][a];
    const double p = behavior_.probs[s][a];
    if (pi == 0.0) return config_.beta_clip_lo;
    return tdcore::beta_weight(std::log(pi), std::log(p), config_.beta_clip_lo, config_.beta_clip_hi);
  }

  void update(const TabularTransition& t, Rng& rng) {
    const double lr = config_.lr_at(updates_);
    v_opt_.learning_rate = lr;
    q_opt_.learning_rate = lr;
    const auto in = one_hot(t.s);
    const auto in_next = one_hot(t.s_next);
    tdcore::TdSample sample;
    sample.r = t.r;
    sample.gamma = mdp_->gamma;
    sample.done = t.done;

    auto gv = v_.zero_grad();
    auto gq = q_.zero_grad();
    std::vector<double> up_q(mdp_->n_actions, 0.0);
    switch (config_.rule) {
      case TabularRule::vtd: {
        sample.v_s = v(t.s);
        sample.v_next = v(t.s_next);
        const auto rep = tdcore::vtd_loss(sample);
        add_v_grad(gv, in, rep.grads.v_s);
        add_v_grad(gv, in_next, rep.grads.v_next);
        break;
      }
      case TabularRule::qtd: {
        const std::size_t a_next = oracle::sample_index(target_.probs[t.s_next], rng);
        sample.q = q(t.s, t.a);
        sample.q_next = q(t.s_next, a_next);
        const auto rep = tdcore::qtd_loss(sample);
        up_q[t.a] = rep.grads.q;
        q_.backward(forward(q_, in), up_q, &gq);
        std::fill(up_q.begin(), up_q.end(), 0.0);
        up_q[a_next] = rep.grads.q_next;
        q_.backward(forward(q_, in_next), up_q, &gq);
        break;
      }
      case TabularRule::decomposed: {
        sample.v_s = v(t.s);
        sample.v_next = v(t.s_next);
        sample.q = q(t.s, t.a);
        const auto action = tdcore::action_td_loss(sample);
        up_q[t.a] = action.grads.q;
        q_.backward(forward(q_, in), up_q, &gq);
        const auto state = tdcore::beta_state_td_loss(sample, beta(t.s, t.a));
        add_v_grad(gv, in, state.grads.v_s);
        break;
      }
    }
    // Terminal entries stay at their true value of zero.
    approx::optim_step(v_, gv, v_opt_);
    approx::optim_step(q_, gq, q_opt_);
    ++updates_;
  }

  void train(std::uint64_t n_updates, Rng& rng) {
    for (std::uint64_t i = 0; i < n_updates; ++i) update(sample(rng), rng);
  }

  double v(std::size_t s) const { return mdp_->terminal[s] ? 0.0 : v_.layer(0).weights[s]; }
  double q(std::size_t s, std::size_t a) const {
    return mdp_->terminal[s] ? 0.0 : q_.layer(0).weights[a * mdp_->n_states + s];
  }
  std::vector<double> v_table() const {
    std::vector<double> out(mdp_->n_states);
    for (std::size_t s = 0; s < out.size(); ++s) out[s] = v(s);
    return out;
  }
  std::vector<std::vector<double>> q_table() const {
    std::vector<std::vector<double>> out(mdp_->n_states, std::vector<double>(mdp_->n_actions));
    for (std::size_t s = 0; s < out.size(); ++s)
      for (std::size_t a = 0; a < mdp_->n_actions; ++a) out[s][a] = q(s, a);
    return out;
  }
  std::uint64_t updates() const { return updates_; }

 private:
  std::vector<double> one_hot(std::size_t s) const {
    std::vector<double> x(mdp_->n_states, 0.0);
    if (!mdp_->terminal[s]) x[s] = 1.0;
    return x;
  }
  static approx::Activations forward(const approx::Mlp& net, std::span<const double> x) {
    approx::Activations c;
    net.forward(x, c);
    return c;
  }
  void add_v_grad(approx::GradBuffer& g, std::span<const double> x, double upstream) const {
    v_.backward(forward(v_, x), std::span<const double>(&upstream, 1), &g);
  }

  const oracle::TabularMdp* mdp_;
  oracle::StochasticPolicy target_;
  oracle::StochasticPolicy behavior_;
  TabularLearnerConfig config_;
  approx::Mlp v_;
  approx::Mlp q_;
  approx::OptimState v_opt_;
  approx::OptimState q_opt_;
  std::vector<std::size_t> live_states_;
  std::uint64_t updates_ = 0;
};

/// Sup-norm distance between two tables of equal shape.
inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  require_shape(a.size() == b.size(), "sup_distance: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double sup_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  require_shape(a.size() == b.size(), "sup_distance: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, sup_distance(a[i], b[i]));
  return m;
}

}  // namespace tdlab::agents
