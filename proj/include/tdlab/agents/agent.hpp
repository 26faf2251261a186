#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tdlab/agents/config.hpp"
#include "tdlab/agents/policy_output.hpp"
#include "tdlab/approx/mlp.hpp"
#include "tdlab/approx/optimizer.hpp"
#include "tdlab/buffer/replay.hpp"
#include "tdlab/env/user_env.hpp"
#include "tdlab/random.hpp"
#include "tdlab/tdcore/losses.hpp"

namespace tdlab::agents {

/// A network with its optimizer, optional target copy and gradient accumulator.
struct TrainableNet {
  approx::Mlp net;
  approx::OptimState opt;
  std::optional<approx::Mlp> target;
  approx::GradBuffer grad;

  TrainableNet() = default;
  TrainableNet(approx::Mlp n, approx::UpdateRule rule, double lr, bool with_target)
      : net(std::move(n)), opt(rule, lr), grad(net.zero_grad()) {
    if (with_target) target = net;
  }

  /// Network used for bootstrapped targets.
  const approx::Mlp& bootstrap() const { return target ? *target : net; }
  bool has_target() const { return target.has_value(); }

  void apply(double tau) {
    approx::optim_step(net, grad, opt);
    if (target) approx::soft_update(*target, net, tau);
  }

  void replace(approx::Mlp n) {
    require_shape(n.layer_sizes() == net.layer_sizes(), "checkpoint network shape does not match the agent");
    net = std::move(n);
    if (target) target = net;
    grad = net.zero_grad();
    opt = approx::OptimState(opt.rule, opt.learning_rate);
  }
};

/// Per-loss, per-network gradients of the most recent decomposed update. The
/// stop-gradient contract says the two cross terms are identically zero.
struct GradientAudit {
  approx::GradBuffer v_from_action_td;
  approx::GradBuffer q_from_action_td;
  approx::GradBuffer v_from_state_td;
  approx::GradBuffer q_from_state_td;
  bool recorded = false;

  void reset(const approx::Mlp& v, const approx::Mlp& q) {
    v_from_action_td = v.zero_grad();
    v_from_state_td = v.zero_grad();
    q_from_action_td = q.zero_grad();
    q_from_state_td = q.zero_grad();
    recorded = true;
  }
};

/// Importance weight of a stored action under the current policy.
struct Importance {
  double beta = 1.0;   // clipped pi / p
  double alpha = 0.0;  // |pi - p|
};

class Agent {
 public:
  Agent(AgentConfig config, std::shared_ptr<const env::ItemEmbeddings> items, std::size_t slate_size)
      : config_(std::move(config)), items_(std::move(items)), slate_size_(slate_size) {
    config_.validate();
    require(items_ != nullptr, "agent needs item embeddings");
    require(slate_size_ >= 1 && slate_size_ <= items_->size(), "agent slate size must lie in [1, n_items]");
  }
  virtual ~Agent() = default;

  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  const AgentConfig& config() const { return config_; }
  const env::ItemEmbeddings& items() const { return *items_; }
  std::size_t slate_size() const { return slate_size_; }
  std::size_t observation_size() const { return items_->dim() + 1; }

  /// Environment steps taken so far; drives exploration decay.
  void set_step(std::uint64_t step) { step_ = step; }
  std::uint64_t step() const { return step_; }

  std::uint64_t divergence_count() const { return divergences_; }
  const GradientAudit& last_audit() const { return audit_; }

  virtual PolicyOutput select_action(const env::Observation& obs, bool explore, Rng& rng) = 0;

  /// log pi(action | obs) under the current parameters and exploration level.
  /// nullopt when the current policy is a point mass.
  virtual std::optional<double> current_log_likelihood(const env::Observation& obs, const PolicyOutput& action) const = 0;

  /// One gradient step on every trained network. A batch producing a
  /// non-finite loss or gradient is skipped and counted as a divergence.
  UpdateReport update(std::span<const buffer::Transition* const> batch) {
    require(!batch.empty(), "agent update: empty batch");
    try {
      return do_update(batch);
    } catch (const DivergenceError&) {
      ++divergences_;
      UpdateReport skipped;
      skipped.skipped = true;
      return skipped;
    }
  }

  virtual std::vector<std::pair<std::string, TrainableNet*>> networks() = 0;

  std::vector<std::pair<std::string, const approx::Mlp*>> parameters() {
    std::vector<std::pair<std::string, const approx::Mlp*>> out;
    for (auto& [name, net] : networks()) out.emplace_back(name, &net->net);
    return out;
  }

  Importance importance(const env::Observation& obs, const PolicyOutput& stored) const {
    if (stored.deterministic) return {};
    return importance_from(current_log_likelihood(obs, stored), stored);
  }

  Importance importance_from(std::optional<double> log_pi, const PolicyOutput& stored) const {
    if (stored.deterministic || !log_pi) return {};
    Importance out;
    out.beta = tdcore::beta_weight(*log_pi, stored.log_likelihood, config_.beta_clip_lo, config_.beta_clip_hi);
    out.alpha = std::abs(std::exp(*log_pi) - std::exp(stored.log_likelihood));
    return out;
  }

 protected:
  tdcore::TdSample base_sample(const buffer::Transition& t) const {
    tdcore::TdSample s;
    s.r = t.reward;
    s.gamma = config_.gamma;
    s.done = t.done;
    return s;
  }

  /// Weight actually applied in the state TD: beta, or 1 under the ablation.
  double applied_beta(const Importance& imp) const { return config_.use_beta ? imp.beta : 1.0; }

  virtual UpdateReport do_update(std::span<const buffer::Transition* const> batch) = 0;

  static double fwd(const approx::Mlp& net, std::span<const double> x, approx::Activations& cache) {
    net.forward(x, cache);
    return cache.result()[0];
  }
  static std::span<const double> one(const double& x) { return {&x, 1}; }

  static void ensure_finite(bool ok, const char* what) {
    if (!ok) throw DivergenceError(what);
  }

  AgentConfig config_;
  std::shared_ptr<const env::ItemEmbeddings> items_;
  std::size_t slate_size_;
  std::uint64_t step_ = 0;
  std::uint64_t divergences_ = 0;
  GradientAudit audit_;
};

/// Running means for an UpdateReport.
struct BatchStats {
  double policy = 0.0, critic = 0.0, action_td = 0.0, state_td = 0.0, beta = 0.0, alpha = 0.0, adv = 0.0;
  bool has_policy = false, has_critic = false, has_decomposed = false, has_importance = false, has_adv = false;
  bool finite = true;

  void check(double x) { finite = finite && std::isfinite(x); }

  UpdateReport finish(std::size_t n) const {
    UpdateReport r;
    const double inv = 1.0 / static_cast<double>(n);
    if (has_policy) r.policy_loss = policy * inv;
    if (has_critic) r.critic_loss = critic * inv;
    if (has_decomposed) {
      r.action_td_loss = action_td * inv;
      r.state_td_loss = state_td * inv;
    }
    if (has_importance) {
      r.mean_beta = beta * inv;
      r.mean_alpha = alpha * inv;
    }
    if (has_adv) r.mean_advantage = adv * inv;
    return r;
  }
};

}  // namespace tdlab::agents
