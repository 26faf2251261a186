#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "tdlab/error.hpp"
#include "tdlab/random.hpp"

namespace tdlab::oracle {

inline constexpr std::size_t kMaxStates = 64;
inline constexpr std::size_t kMaxActions = 16;

/// Small finite MDP. transition[s][a][s'] and reward[s][a]; terminal states
/// self-loop with zero reward.
struct TabularMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<std::vector<std::vector<double>>> transition;
  std::vector<std::vector<double>> reward;
  std::vector<bool> terminal;
  double gamma = 0.9;

  void validate() const {
    require(n_states >= 1 && n_states <= kMaxStates, "TabularMdp: n_states must lie in [1, 64]");
    require(n_actions >= 1 && n_actions <= kMaxActions, "TabularMdp: n_actions must lie in [1, 16]");
    require(gamma >= 0.0 && gamma <= 1.0, "TabularMdp: gamma must lie in [0, 1]");
    require(transition.size() == n_states && reward.size() == n_states && terminal.size() == n_states,
            "TabularMdp: tensor sizes do not match n_states");
    for (std::size_t s = 0; s < n_states; ++s) {
      require(transition[s].size() == n_actions && reward[s].size() == n_actions,
              "TabularMdp: tensor sizes do not match n_actions");
      for (std::size_t a = 0; a < n_actions; ++a) {
        const auto& row = transition[s][a];
        require(row.size() == n_states, "TabularMdp: transition row has wrong length");
        double sum = 0.0;
        for (double p : row) {
          require(p >= 0.0, "TabularMdp: negative transition probability");
          sum += p;
        }
        require(std::abs(sum - 1.0) <= 1e-12, "TabularMdp: transition row does not sum to 1");
        require(std::isfinite(reward[s][a]), "TabularMdp: non-finite reward");
        if (terminal[s]) {
          require(row[s] == 1.0 && reward[s][a] == 0.0, "TabularMdp: terminal states must self-loop with zero reward");
        }
      }
    }
  }
};

/// probs[s][a]; rows non-negative and normalized.
struct StochasticPolicy {
  std::vector<std::vector<double>> probs;

  void validate(const TabularMdp& mdp) const {
    require(probs.size() == mdp.n_states, "StochasticPolicy: one row per state required");
    for (const auto& row : probs) {
      require(row.size() == mdp.n_actions, "StochasticPolicy: one entry per action required");
      double sum = 0.0;
      for (double p : row) {
        require(p >= 0.0, "StochasticPolicy: negative probability");
        sum += p;
      }
      require(std::abs(sum - 1.0) <= 1e-12, "StochasticPolicy: row does not sum to 1");
    }
  }

  static StochasticPolicy uniform(std::size_t n_states, std::size_t n_actions) {
    return {std::vector<std::vector<double>>(n_states, std::vector<double>(n_actions, 1.0 / n_actions))};
  }

  /// (1 - eps) * this + eps * uniform.
  StochasticPolicy mixed_with_uniform(double eps) const {
    StochasticPolicy out = *this;
    for (auto& row : out.probs) {
      const double u = 1.0 / static_cast<double>(row.size());
      for (auto& p : row) p = (1.0 - eps) * p + eps * u;
    }
    return out;
  }
};

struct OracleValues {
  std::vector<double> v_star;
  std::vector<std::vector<double>> q_star;
  std::size_t iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_history;  // sup-norm change per sweep
};

namespace detail {

// Every non-terminal state must reach a terminal state with positive
// probability, otherwise undiscounted values need not exist.
inline bool absorbing_under(const TabularMdp& mdp, const StochasticPolicy& policy) {
  std::vector<bool> reaches(mdp.n_states, false);
  for (std::size_t s = 0; s < mdp.n_states; ++s) reaches[s] = mdp.terminal[s];
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      if (reaches[s]) continue;
      for (std::size_t a = 0; a < mdp.n_actions && !reaches[s]; ++a) {
        if (policy.probs[s][a] <= 0.0) continue;
        for (std::size_t n = 0; n < mdp.n_states; ++n) {
          if (mdp.transition[s][a][n] > 0.0 && reaches[n]) {
            reaches[s] = true;
            changed = true;
            break;
          }
        }
      }
    }
  }
  return std::all_of(reaches.begin(), reaches.end(), [](bool b) { return b; });
}

inline std::vector<std::vector<double>> q_from_v(const TabularMdp& mdp, const std::vector<double>& v) {
  std::vector<std::vector<double>> q(mdp.n_states, std::vector<double>(mdp.n_actions, 0.0));
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    if (mdp.terminal[s]) continue;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      double next = 0.0;
      for (std::size_t n = 0; n < mdp.n_states; ++n) next += mdp.transition[s][a][n] * v[n];
      q[s][a] = mdp.reward[s][a] + mdp.gamma * next;
    }
  }
  return q;
}

}  // namespace detail

/// Iterative Bellman expectation sweeps until the sup-norm change drops below tol.
inline OracleValues policy_evaluation(const TabularMdp& mdp, const StochasticPolicy& policy, double tol = 1e-10,
                                      std::size_t max_iterations = 1'000'000) {
  mdp.validate();
  policy.validate(mdp);
  require(tol > 0.0, "policy_evaluation: tol must be positive");
  if (mdp.gamma >= 1.0 && !detail::absorbing_under(mdp, policy)) {
    throw ConfigError("policy_evaluation: gamma >= 1 requires absorbing dynamics");
  }

  OracleValues out;
  std::vector<double> v(mdp.n_states, 0.0);
  std::vector<double> next(mdp.n_states, 0.0);
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    const auto q = detail::q_from_v(mdp, v);
    double change = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      double value = 0.0;
      if (!mdp.terminal[s])
        for (std::size_t a = 0; a < mdp.n_actions; ++a) value += policy.probs[s][a] * q[s][a];
      next[s] = value;
      change = std::max(change, std::abs(value - v[s]));
    }
    v.swap(next);
    out.iterations = it;
    out.residual = change;
    out.residual_history.push_back(change);
    if (change < tol) break;
  }
  out.q_star = detail::q_from_v(mdp, v);
  // Recompute V from the final Q so that V = E_pi[Q] holds to rounding.
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double value = 0.0;
    if (!mdp.terminal[s])
      for (std::size_t a = 0; a < mdp.n_actions; ++a) value += policy.probs[s][a] * out.q_star[s][a];
    v[s] = value;
  }
  out.v_star = std::move(v);
  return out;
}

template <typename Probs>
std::size_t sample_index(const Probs& probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

struct McEstimate {
  double mean_return = 0.0;
  double standard_error = 0.0;
  std::size_t episodes = 0;
};

/// Mean discounted return of seeded rollouts truncated at `horizon` steps.
inline McEstimate mc_return(const TabularMdp& mdp, const StochasticPolicy& policy, std::size_t start_state,
                            std::size_t n_episodes, std::size_t horizon, Rng& rng) {
  mdp.validate();
  policy.validate(mdp);
  require(n_episodes >= 1, "mc_return: n_episodes must be at least 1");
  require(start_state < mdp.n_states, "mc_return: start_state out of range");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    std::size_t s = start_state;
    double g = 0.0;
    double discount = 1.0;
    for (std::size_t t = 0; t < horizon && !mdp.terminal[s]; ++t) {
      const std::size_t a = sample_index(policy.probs[s], rng);
      g += discount * mdp.reward[s][a];
      discount *= mdp.gamma;
      s = sample_index(mdp.transition[s][a], rng);
    }
    sum += g;
    sum_sq += g * g;
  }
  McEstimate out;
  out.episodes = n_episodes;
  const double n = static_cast<double>(n_episodes);
  out.mean_return = sum / n;
  if (n_episodes > 1) {
    const double var = std::max(0.0, (sum_sq - n * out.mean_return * out.mean_return) / (n - 1.0));
    out.standard_error = std::sqrt(var / n);
  }
  return out;
}

/// Random dense MDP with `n_terminal` absorbing states at the end of the index range.
inline TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng,
                             std::size_t n_terminal = 0) {
  require(n_terminal < n_states, "random_mdp: need at least one non-terminal state");
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.terminal.assign(n_states, false);
  for (std::size_t s = n_states - n_terminal; s < n_states; ++s) mdp.terminal[s] = true;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_real_distribution<double> rew(-1.0, 1.0);
  mdp.transition.assign(n_states, std::vector<std::vector<double>>(n_actions, std::vector<double>(n_states, 0.0)));
  mdp.reward.assign(n_states, std::vector<double>(n_actions, 0.0));
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      auto& row = mdp.transition[s][a];
      if (mdp.terminal[s]) {
        row[s] = 1.0;
        continue;
      }
      double sum = 0.0;
      for (auto& p : row) sum += (p = unif(rng));
      for (auto& p : row) p /= sum;
      // Renormalize exactly so the row sums to 1 within rounding.
      double total = 0.0;
      for (std::size_t n = 0; n + 1 < n_states; ++n) total += row[n];
      row[n_states - 1] = std::max(0.0, 1.0 - total);
      mdp.reward[s][a] = rew(rng);
    }
  }
  return mdp;
}

inline StochasticPolicy random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  StochasticPolicy pol;
  pol.probs.assign(n_states, std::vector<double>(n_actions, 0.0));
  for (auto& row : pol.probs) {
    double sum = 0.0;
    for (auto& p : row) sum += (p = unif(rng));
    for (auto& p : row) p /= sum;
  }
  return pol;
}

}  // namespace tdlab::oracle
