#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "tdlab/error.hpp"

namespace tdlab::tdcore {

/// One transition's scalar ingredients. Value fields are optional because each
/// loss only needs a subset; a loss rejects samples missing what it needs.
struct TdSample {
  double r = 0.0;
  std::optional<double> v_s;
  std::optional<double> v_next;
  std::optional<double> q;
  std::optional<double> q_next;
  double gamma = 0.9;
  bool done = false;

  double bootstrap() const { return done ? 0.0 : gamma; }
};

/// d(loss)/d(input) for every scalar a loss can read. Stop-gradient inputs are exactly 0.
struct LossGrads {
  double v_s = 0.0;
  double v_next = 0.0;
  double q = 0.0;
  double q_next = 0.0;
};

struct LossReport {
  double loss = 0.0;
  double residual = 0.0;
  double weight = 1.0;
  LossGrads grads;
  std::optional<double> advantage;
  std::optional<double> beta;
};

struct DecompositionResiduals {
  double delta_u = 0.0;
  double delta_pi = 0.0;
};

namespace detail {

inline double need(const std::optional<double>& v, const char* name, const char* op) {
  if (!v) throw ConfigError(std::string(op) + ": sample is missing " + name);
  if (!std::isfinite(*v)) throw DivergenceError(std::string(op) + ": non-finite " + name);
  return *v;
}

inline void check_common(const TdSample& s, const char* op) {
  if (!std::isfinite(s.r)) throw DivergenceError(std::string(op) + ": non-finite reward");
  if (!(s.gamma >= 0.0 && s.gamma <= 1.0)) throw ConfigError(std::string(op) + ": gamma must lie in [0, 1]");
}

}  // namespace detail

/// (r + gamma V(s') - V(s))^2 with gradient into both V terms.
inline LossReport vtd_loss(const TdSample& s) {
  detail::check_common(s, "vtd_loss");
  const double v_s = detail::need(s.v_s, "v_s", "vtd_loss");
  const double v_next = s.done ? 0.0 : detail::need(s.v_next, "v_next", "vtd_loss");
  LossReport out;
  out.residual = s.r + s.bootstrap() * v_next - v_s;
  out.loss = out.residual * out.residual;
  out.grads.v_s = -2.0 * out.residual;
  out.grads.v_next = 2.0 * out.residual * s.bootstrap();
  out.advantage = out.residual;
  return out;
}

/// (r + gamma Q(s', a') - Q(s, a))^2 with gradient into both Q terms.
inline LossReport qtd_loss(const TdSample& s) {
  detail::check_common(s, "qtd_loss");
  const double q = detail::need(s.q, "q", "qtd_loss");
  const double q_next = s.done ? 0.0 : detail::need(s.q_next, "q_next", "qtd_loss");
  LossReport out;
  out.residual = s.r + s.bootstrap() * q_next - q;
  out.loss = out.residual * out.residual;
  out.grads.q = -2.0 * out.residual;
  out.grads.q_next = 2.0 * out.residual * s.bootstrap();
  return out;
}

/// (r + gamma V(s') - Q(s, a))^2 with V(s') held fixed.
inline LossReport action_td_loss(const TdSample& s) {
  detail::check_common(s, "action_td_loss");
  const double q = detail::need(s.q, "q", "action_td_loss");
  const double v_next = s.done ? 0.0 : detail::need(s.v_next, "v_next", "action_td_loss");
  LossReport out;
  out.residual = s.r + s.bootstrap() * v_next - q;
  out.loss = out.residual * out.residual;
  out.grads.q = -2.0 * out.residual;
  out.grads.v_next = 0.0;
  return out;
}

/// beta * (V(s) - Q(s, a))^2 with Q held fixed and beta a constant weight.
inline LossReport beta_state_td_loss(const TdSample& s, double beta) {
  detail::check_common(s, "beta_state_td_loss");
  if (!std::isfinite(beta) || beta <= 0.0) throw ConfigError("beta_state_td_loss: beta must be positive");
  const double v_s = detail::need(s.v_s, "v_s", "beta_state_td_loss");
  const double q = detail::need(s.q, "q", "beta_state_td_loss");
  LossReport out;
  out.weight = beta;
  out.beta = beta;
  out.residual = v_s - q;
  out.loss = beta * out.residual * out.residual;
  out.grads.v_s = 2.0 * beta * out.residual;
  out.grads.q = 0.0;
  return out;
}

/// (V(s) - Q(s, a))^2 with Q held fixed.
inline LossReport state_td_loss(const TdSample& s) {
  LossReport out = beta_state_td_loss(s, 1.0);
  out.beta.reset();
  return out;
}

/// clamp(exp(log_pi - log_p), lo, hi). The result is a constant in every gradient.
inline double beta_weight(double log_pi, double log_p, double clip_lo = 0.1, double clip_hi = 10.0) {
  if (!std::isfinite(log_pi) || !std::isfinite(log_p)) throw DivergenceError("beta_weight: non-finite log-likelihood");
  if (!(clip_lo <= clip_hi)) throw ConfigError("beta_weight: clip_lo must not exceed clip_hi");
  return std::clamp(std::exp(log_pi - log_p), clip_lo, clip_hi);
}

/// A = r + gamma V(s') - V(s); a constant when weighting the policy loss.
inline double advantage(const TdSample& s) {
  detail::check_common(s, "advantage");
  const double v_s = detail::need(s.v_s, "v_s", "advantage");
  const double v_next = s.done ? 0.0 : detail::need(s.v_next, "v_next", "advantage");
  return s.r + s.bootstrap() * v_next - v_s;
}

/// Advantage-weighted log-likelihood loss -A log pi; the only gradient is d/d(log pi) = -A.
struct PolicyLoss {
  double loss = 0.0;
  double d_log_pi = 0.0;
};

inline PolicyLoss advantage_policy_loss(double advantage_value, double log_pi) {
  if (!std::isfinite(advantage_value) || !std::isfinite(log_pi)) {
    throw DivergenceError("advantage_policy_loss: non-finite input");
  }
  return {-advantage_value * log_pi, -advantage_value};
}

/// -Q(s, actor(s)); d/dQ = -1.
inline PolicyLoss q_max_policy_loss(double q) {
  if (!std::isfinite(q)) throw DivergenceError("q_max_policy_loss: non-finite Q");
  return {-q, -1.0};
}

/// delta_u = r + gamma V(s') - Q(s, a); delta_pi = Q(s, a) - V(s).
inline DecompositionResiduals residuals(const TdSample& s) {
  detail::check_common(s, "residuals");
  const double v_s = detail::need(s.v_s, "v_s", "residuals");
  const double q = detail::need(s.q, "q", "residuals");
  const double v_next = s.done ? 0.0 : detail::need(s.v_next, "v_next", "residuals");
  return {s.r + s.bootstrap() * v_next - q, q - v_s};
}

}  // namespace tdlab::tdcore
