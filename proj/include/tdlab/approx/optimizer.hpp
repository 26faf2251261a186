#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "tdlab/approx/mlp.hpp"
#include "tdlab/error.hpp"

namespace tdlab::approx {

enum class UpdateRule : std::uint8_t { sgd, adam };

inline std::string_view to_string(UpdateRule r) { return r == UpdateRule::sgd ? "sgd" : "adam"; }

inline UpdateRule parse_update_rule(std::string_view name) {
  if (name == "sgd") return UpdateRule::sgd;
  if (name == "adam") return UpdateRule::adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

/// Optimizer state for one network. Adam moments are allocated lazily on the
/// first step so the state can be built before the network exists.
struct OptimState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double epsilon = 1e-8;

  UpdateRule rule = UpdateRule::adam;
  double learning_rate = 1e-3;
  GradBuffer first_moment;
  GradBuffer second_moment;
  std::uint64_t steps = 0;

  OptimState() = default;
  OptimState(UpdateRule r, double lr) : rule(r), learning_rate(lr) {
    // lr == 0 is accepted so that a frozen network can share the update path.
    require(std::isfinite(lr) && lr >= 0.0, "learning rate must be finite and non-negative");
  }
};

/// Applies one update in place. Non-finite gradients leave the parameters
/// untouched and raise DivergenceError.
inline void optim_step(Mlp& params, const GradBuffer& grads, OptimState& state) {
  require_shape(grads.layers.size() == params.num_layers(), "optim_step: gradient/parameter shape mismatch");
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    require_shape(grads.layers[l].weights.size() == params.layer(l).weights.size() &&
                      grads.layers[l].biases.size() == params.layer(l).biases.size(),
                  "optim_step: gradient/parameter shape mismatch");
  }
  if (!grads.all_finite()) throw DivergenceError("optim_step: non-finite gradient");

  ++state.steps;
  const double lr = state.learning_rate;
  if (state.rule == UpdateRule::sgd) {
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
      auto& p = params.layer(l);
      const auto& g = grads.layers[l];
      for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] -= lr * g.weights[i];
      for (std::size_t i = 0; i < p.biases.size(); ++i) p.biases[i] -= lr * g.biases[i];
    }
    return;
  }

  if (state.first_moment.layers.size() != params.num_layers()) {
    state.first_moment = params.zero_grad();
    state.second_moment = params.zero_grad();
  }
  const double t = static_cast<double>(state.steps);
  const double correction1 = 1.0 - std::pow(OptimState::beta1, t);
  const double correction2 = 1.0 - std::pow(OptimState::beta2, t);
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = OptimState::beta1 * m[i] + (1.0 - OptimState::beta1) * g[i];
      v[i] = OptimState::beta2 * v[i] + (1.0 - OptimState::beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + OptimState::epsilon);
    }
  };
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    auto& p = params.layer(l);
    const auto& g = grads.layers[l];
    auto& m = state.first_moment.layers[l];
    auto& v = state.second_moment.layers[l];
    update(p.weights, g.weights, m.weights, v.weights);
    update(p.biases, g.biases, m.biases, v.biases);
  }
}

/// Polyak averaging used by target networks: target <- (1 - tau) target + tau online.
inline void soft_update(Mlp& target, const Mlp& online, double tau) {
  require_shape(target.layer_sizes() == online.layer_sizes(), "soft_update: shape mismatch");
  for (std::size_t l = 0; l < target.num_layers(); ++l) {
    auto& t = target.layer(l);
    const auto& o = online.layer(l);
    for (std::size_t i = 0; i < t.weights.size(); ++i) t.weights[i] += tau * (o.weights[i] - t.weights[i]);
    for (std::size_t i = 0; i < t.biases.size(); ++i) t.biases[i] += tau * (o.biases[i] - t.biases[i]);
  }
}

}  // namespace tdlab::approx
