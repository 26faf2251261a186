#pragma once

#include <tuple>
#include <vector>

#include "tdlab/tdcore/alignment.hpp"
#include "tdlab/tdcore/losses.hpp"

namespace tdlab::oracle {

/// Hand-built sample sets realizing each geometric relation between V and Q
/// estimates. All use gamma = 0.9 and non-terminal transitions.
///
/// a: Q(s,a) between V(s) and r + gamma V(s').
/// b: V(s) == r + gamma V(s') (stepwise V residual exactly 0) with Q off to one
///    side, so both decomposed losses stay large.
/// c: V(s) between Q(s,a) and r + gamma Q(s',a').
/// d: Q(s,a) == r + gamma Q(s',a') (stepwise Q residual 0) with V off to one side.
inline std::vector<tdcore::TdSample> make_alignment_fixture(tdcore::AlignmentCase which) {
  using tdcore::AlignmentCase;
  using tdcore::TdSample;
  constexpr double g = 0.9;
  std::vector<TdSample> out;
  // v_next is solved from the wanted one-step target; r + 0.9 v_next then
  // reproduces that target up to one rounding step.
  auto v_next_for = [&](double r, double target) { return (target - r) / g; };
  switch (which) {
    case AlignmentCase::a:
      // (v_s, target, q)
      for (auto [v_s, target, q] : {std::tuple{0.0, 1.0, 0.5}, std::tuple{2.0, 1.0, 1.25}, std::tuple{-1.0, 0.5, 0.0},
                                    std::tuple{0.25, 0.75, 0.25}}) {
        const double r = 0.25;
        out.push_back(TdSample{r, v_s, v_next_for(r, target), q, std::nullopt, g, false});
      }
      break;
    case AlignmentCase::b:
      // V(s) already equals the one-step V target, Q sits 0.5 away.
      for (auto [v_s, q, r] : {std::tuple{1.0, 0.5, 0.0}, std::tuple{1.0, 1.5, 0.5}, std::tuple{-0.5, -1.0, 1.0},
                               std::tuple{2.0, 2.5, -0.25}}) {
        out.push_back(TdSample{r, v_s, v_next_for(r, v_s), q, std::nullopt, g, false});
      }
      break;
    case AlignmentCase::c:
      // (q, q_target, v_s)
      for (auto [q, q_target, v_s] : {std::tuple{0.0, 1.0, 0.5}, std::tuple{2.0, 1.0, 1.5}, std::tuple{-1.0, 0.0, -0.25}}) {
        const double r = 0.5;
        out.push_back(TdSample{r, v_s, v_next_for(r, v_s), q, v_next_for(r, q_target), g, false});
      }
      break;
    case AlignmentCase::d:
      // Q(s,a) already equals the one-step Q target, V sits 0.5 away.
      for (auto [q, v_s, r] : {std::tuple{0.5, 1.0, 0.0}, std::tuple{1.5, 1.0, 0.5}, std::tuple{-1.0, -0.5, 1.0}}) {
        out.push_back(TdSample{r, v_s, v_next_for(r, q), q, v_next_for(r, q), g, false});
      }
      break;
  }
  return out;
}

}  // namespace tdlab::oracle
