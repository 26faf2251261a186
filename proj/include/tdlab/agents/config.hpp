#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "tdlab/approx/mlp.hpp"
#include "tdlab/approx/optimizer.hpp"
#include "tdlab/env/user_env.hpp"
#include "tdlab/error.hpp"

namespace tdlab::agents {

enum class Backbone : std::uint8_t { a2c, dqn, ddpg, hac_lite, dueling_dqn };
enum class TdMode : std::uint8_t { original, decomposed };

inline std::string_view to_string(Backbone b) {
  switch (b) {
    case Backbone::a2c: return "a2c";
    case Backbone::dqn: return "dqn";
    case Backbone::ddpg: return "ddpg";
    case Backbone::hac_lite: return "hac_lite";
    case Backbone::dueling_dqn: return "dueling_dqn";
  }
  return "?";
}

inline Backbone parse_backbone(std::string_view name) {
  for (auto b : {Backbone::a2c, Backbone::dqn, Backbone::ddpg, Backbone::hac_lite, Backbone::dueling_dqn}) {
    if (name == to_string(b)) return b;
  }
  throw ConfigError("unknown backbone '" + std::string(name) + "'");
}

inline std::string_view to_string(TdMode m) { return m == TdMode::original ? "original" : "decomposed"; }

inline TdMode parse_td_mode(std::string_view name) {
  if (name == "original") return TdMode::original;
  if (name == "decomposed") return TdMode::decomposed;
  throw ConfigError("unknown td_mode '" + std::string(name) + "'");
}

inline bool is_continuous(Backbone b) { return b == Backbone::ddpg || b == Backbone::hac_lite; }

struct ExplorationConfig {
  double sigma = 0.1;    // Gaussian std on hyper-actions (ddpg, hac_lite)
  double epsilon = 0.1;  // epsilon-greedy rate (dqn, dueling_dqn)
  double decay = 0.0;    // both rates are divided by (1 + decay * step)

  double sigma_at(std::uint64_t step) const { return sigma / (1.0 + decay * static_cast<double>(step)); }
  double epsilon_at(std::uint64_t step) const { return epsilon / (1.0 + decay * static_cast<double>(step)); }
};

struct AgentConfig {
  Backbone backbone = Backbone::hac_lite;
  TdMode td_mode = TdMode::decomposed;
  double gamma = 0.9;
  double lr_v = 1e-3;
  double lr_q = 1e-3;
  double lr_policy = 1e-4;
  approx::UpdateRule optimizer = approx::UpdateRule::adam;
  std::vector<std::size_t> hidden = {32, 32};
  approx::Activation activation = approx::Activation::tanh;
  ExplorationConfig exploration;
  bool use_target_net = false;
  double target_tau = 0.005;
  double beta_clip_lo = 0.1;
  double beta_clip_hi = 10.0;
  bool use_beta = true;  // false forces beta = 1 in the state TD (ablation)
  std::size_t hyper_dim = 8;
  double actor_bound = 2.0;  // continuous actor output = actor_bound * tanh(raw)

  void validate() const {
    require(gamma >= 0.0 && gamma <= 1.0, "agent.gamma must lie in [0, 1]");
    require(lr_v >= 0.0 && lr_q >= 0.0 && lr_policy >= 0.0, "agent learning rates must be non-negative");
    require(exploration.sigma >= 0.0, "agent.exploration.sigma must be non-negative");
    require(exploration.epsilon >= 0.0 && exploration.epsilon <= 1.0, "agent.exploration.epsilon must lie in [0, 1]");
    require(exploration.decay >= 0.0, "agent.exploration.decay must be non-negative");
    require(target_tau > 0.0 && target_tau <= 1.0, "agent.target_tau must lie in (0, 1]");
    require(beta_clip_lo > 0.0 && beta_clip_lo <= beta_clip_hi, "agent.beta_clip must satisfy 0 < lo <= hi");
    require(hyper_dim > 0, "agent.hyper_dim must be positive");
    require(actor_bound > 0.0, "agent.actor_bound must be positive");
    for (auto h : hidden) require(h > 0, "agent.hidden widths must be positive");
    require(!(backbone == Backbone::dueling_dqn && td_mode == TdMode::decomposed),
            "dueling_dqn is already a V/A decomposition and only supports td_mode=original");
  }

  void validate(const env::EnvConfig& env) const {
    validate();
    if (is_continuous(backbone) || backbone == Backbone::a2c) {
      require(hyper_dim == env.state_dim, "agent.hyper_dim must equal env.state_dim (item embedding width)");
    }
  }

  std::vector<std::size_t> layer_sizes(std::size_t in, std::size_t out) const {
    std::vector<std::size_t> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
  }
};

/// Batch-level statistics from one update; NaN marks quantities a mode does not compute.
struct UpdateReport {
  static constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  bool skipped = false;
  double policy_loss = nan;
  double critic_loss = nan;  // vtd or qtd in original mode
  double action_td_loss = nan;
  double state_td_loss = nan;  // unweighted (V - Q)^2
  double mean_beta = nan;      // clipped pi/p, whether or not it was applied
  double mean_alpha = nan;     // mean |pi - p|
  double mean_advantage = nan;
  double grad_norm_v = nan;
  double grad_norm_q = nan;
  double grad_norm_policy = nan;
};

}  // namespace tdlab::agents
