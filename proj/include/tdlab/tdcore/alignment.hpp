#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string_view>

#include "tdlab/error.hpp"
#include "tdlab/tdcore/losses.hpp"

namespace tdlab::tdcore {

struct BoundCheck {
  double delta1 = 0.0;  // max |delta_u|
  double delta2 = 0.0;  // max |delta_pi|
  bool vtd_bound_ok = true;
  std::size_t violations = 0;
};

/// Every per-sample (delta_u + delta_pi)^2 must sit under (delta1 + delta2)^2.
/// This is the triangle inequality, so a violation means the residuals are corrupt.
inline BoundCheck bound_check(std::span<const DecompositionResiduals> samples) {
  if (samples.empty()) throw ConfigError("bound_check: empty sample set");
  BoundCheck out;
  for (const auto& s : samples) {
    if (!std::isfinite(s.delta_u) || !std::isfinite(s.delta_pi)) throw DivergenceError("bound_check: non-finite residual");
    out.delta1 = std::max(out.delta1, std::abs(s.delta_u));
    out.delta2 = std::max(out.delta2, std::abs(s.delta_pi));
  }
  const double bound = (out.delta1 + out.delta2) * (out.delta1 + out.delta2);
  for (const auto& s : samples) {
    const double vtd = (s.delta_u + s.delta_pi) * (s.delta_u + s.delta_pi);
    if (vtd > bound) ++out.violations;
  }
  out.vtd_bound_ok = out.violations == 0;
  return out;
}

/// a/c: the stepwise TD residual and the decomposed residuals agree in direction.
/// b/d: the stepwise residual can vanish while the decomposed ones do not.
enum class AlignmentCase { a, b, c, d };

inline std::string_view to_string(AlignmentCase c) {
  switch (c) {
    case AlignmentCase::a: return "a";
    case AlignmentCase::b: return "b";
    case AlignmentCase::c: return "c";
    case AlignmentCase::d: return "d";
  }
  return "?";
}

inline bool between_inclusive(double x, double lo, double hi) {
  if (lo > hi) std::swap(lo, hi);
  return lo <= x && x <= hi;
}

/// Samples without q_next are V-based: case a when Q(s,a) lies between V(s) and
/// r + gamma V(s'), else b. Samples with q_next are Q-based: case c when V(s)
/// lies between Q(s,a) and r + gamma Q(s',a'), else d. Ties count as aligned.
inline AlignmentCase classify_alignment(const TdSample& s) {
  detail::check_common(s, "classify_alignment");
  const double v_s = detail::need(s.v_s, "v_s", "classify_alignment");
  const double q = detail::need(s.q, "q", "classify_alignment");
  if (s.q_next) {
    const double q_target = s.r + s.bootstrap() * detail::need(s.q_next, "q_next", "classify_alignment");
    return between_inclusive(v_s, q, q_target) ? AlignmentCase::c : AlignmentCase::d;
  }
  const double v_next = s.done ? 0.0 : detail::need(s.v_next, "v_next", "classify_alignment");
  const double v_target = s.r + s.bootstrap() * v_next;
  return between_inclusive(q, v_s, v_target) ? AlignmentCase::a : AlignmentCase::b;
}

}  // namespace tdlab::tdcore
