#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "tdlab/env/user_env.hpp"
#include "tdlab/error.hpp"
#include "tdlab/random.hpp"

namespace tdlab::agents {

/// Indices of the k largest scores, best first; ties go to the lower index.
inline std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
  require(k <= scores.size(), "top_k: k exceeds the number of scores");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  idx.resize(k);
  return idx;
}

/// Ordered slate drawn from the Plackett-Luce model over `scores` via the
/// Gumbel-top-k trick.
inline env::SlateAction gumbel_top_k(std::span<const double> scores, std::size_t k, Rng& rng) {
  std::uniform_real_distribution<double> unif(std::numeric_limits<double>::min(), 1.0);
  std::vector<double> perturbed(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) perturbed[i] = scores[i] - std::log(-std::log(unif(rng)));
  return {top_k(perturbed, k)};
}

/// log P(slate) under sequential selection without replacement:
/// sum_k [s_{i_k} - log sum_{j not yet chosen} exp(s_j)].
/// When `grad` is non-empty it receives d(log P)/d(scores).
inline double plackett_luce_log_prob(std::span<const double> scores, const env::SlateAction& slate,
                                     std::span<double> grad = {}) {
  const std::size_t n = scores.size();
  require(grad.empty() || grad.size() == n, "plackett_luce_log_prob: gradient size mismatch");
  std::vector<bool> taken(n, false);
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  double log_prob = 0.0;
  std::vector<double> w(n);
  for (auto item : slate.items) {
    require(item < n && !taken[item], "plackett_luce_log_prob: invalid slate");
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (!taken[j]) m = std::max(m, scores[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      w[j] = taken[j] ? 0.0 : std::exp(scores[j] - m);
      z += w[j];
    }
    log_prob += scores[item] - (m + std::log(z));
    if (!grad.empty()) {
      for (std::size_t j = 0; j < n; ++j) grad[j] -= w[j] / z;
      grad[item] += 1.0;
    }
    taken[item] = true;
  }
  return log_prob;
}

/// log of 1 / (n (n-1) ... (n-k+1)): an ordered slate drawn uniformly.
inline double uniform_slate_log_prob(std::size_t n_items, std::size_t k) {
  double lp = 0.0;
  for (std::size_t i = 0; i < k; ++i) lp -= std::log(static_cast<double>(n_items - i));
  return lp;
}

/// Mixture of uniform slates (weight eps) and the greedy slate (weight 1 - eps).
inline double epsilon_greedy_log_prob(double eps, std::size_t n_items, const env::SlateAction& slate,
                                      const env::SlateAction& greedy) {
  const double uniform = eps * std::exp(uniform_slate_log_prob(n_items, slate.items.size()));
  const double greedy_mass = slate == greedy ? 1.0 - eps : 0.0;
  return std::log(uniform + greedy_mass);
}

/// Isotropic Gaussian log-density N(x; mean, sigma^2 I).
inline double gaussian_log_density(std::span<const double> x, std::span<const double> mean, double sigma) {
  require_shape(x.size() == mean.size(), "gaussian_log_density: dimension mismatch");
  require(sigma > 0.0, "gaussian_log_density: sigma must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - mean[i]) * (x[i] - mean[i]);
  const double d = static_cast<double>(x.size());
  return -0.5 * sq / (sigma * sigma) - d * std::log(sigma) - 0.5 * d * std::log(2.0 * std::numbers::pi);
}

/// Slate = top-k items by <vector, item embedding>.
inline env::SlateAction slate_from_hyper_action(std::span<const double> hyper_action, const env::ItemEmbeddings& items,
                                                std::size_t k) {
  std::vector<double> scores(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) scores[i] = items.dot(i, hyper_action);
  return {top_k(scores, k)};
}

}  // namespace tdlab::agents
