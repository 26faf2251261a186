#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tdlab/error.hpp"
#include "tdlab/random.hpp"

namespace tdlab::env {

/// Logistic slope applied to <latent, item> when turning affinity into a click probability.
inline constexpr double kClickSharpness = 3.0;

struct EnvConfig {
  std::size_t n_items = 50;
  std::size_t slate_size = 6;
  std::size_t state_dim = 8;
  std::size_t max_depth = 20;
  double click_reward = 1.0;
  double miss_reward = -0.2;
  double temper_init = 10.0;
  double temper_threshold = 0.0;
  double temper_miss_cost = 0.2;
  double temper_base_cost = 0.3;
  double drift_rate = 0.1;
  double noise_scale = 0.1;
  std::uint64_t seed = 7;
  // Test hook: click iff p >= 0.5 instead of sampling. Never used in experiments.
  bool deterministic_clicks = false;

  void validate() const {
    require(n_items > 0, "env.n_items must be positive");
    require(slate_size > 0, "env.slate_size must be positive");
    require(slate_size <= n_items, "env.slate_size must not exceed env.n_items");
    require(state_dim > 0, "env.state_dim must be positive");
    require(max_depth >= 1, "env.max_depth must be at least 1");
    require(temper_init > 0.0, "env.temper_init must be positive");
    require(temper_threshold < temper_init, "env.temper_threshold must be below env.temper_init");
    require(temper_miss_cost >= 0.0 && temper_base_cost >= 0.0, "env temper costs must be non-negative");
    require(drift_rate >= 0.0 && drift_rate <= 1.0, "env.drift_rate must lie in [0, 1]");
    require(noise_scale >= 0.0, "env.noise_scale must be non-negative");
    require(std::isfinite(click_reward) && std::isfinite(miss_reward), "env rewards must be finite");
  }

  /// Per-step reward range [K * min(miss, click), K * max(miss, click)].
  std::pair<double, double> reward_bounds() const {
    const double k = static_cast<double>(slate_size);
    return {k * std::min(miss_reward, click_reward), k * std::max(miss_reward, click_reward)};
  }
};

/// Unit-norm item vectors, one row per item. Fixed for a given EnvConfig seed.
class ItemEmbeddings {
 public:
  ItemEmbeddings() = default;
  ItemEmbeddings(std::size_t n_items, std::size_t dim, std::vector<double> data)
      : n_items_(n_items), dim_(dim), data_(std::move(data)) {
    require_shape(data_.size() == n_items_ * dim_, "ItemEmbeddings: data size mismatch");
  }

  static ItemEmbeddings generate(const EnvConfig& config) {
    Rng rng(derive_seed(config.seed, SeedStream::items));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> data(config.n_items * config.state_dim);
    for (std::size_t i = 0; i < config.n_items; ++i) {
      double norm = 0.0;
      do {
        norm = 0.0;
        for (std::size_t d = 0; d < config.state_dim; ++d) {
          const double v = normal(rng);
          data[i * config.state_dim + d] = v;
          norm += v * v;
        }
      } while (norm == 0.0);
      norm = std::sqrt(norm);
      for (std::size_t d = 0; d < config.state_dim; ++d) data[i * config.state_dim + d] /= norm;
    }
    return ItemEmbeddings(config.n_items, config.state_dim, std::move(data));
  }

  std::size_t size() const { return n_items_; }
  std::size_t dim() const { return dim_; }

  std::span<const double> row(std::size_t item) const {
    if (item >= n_items_) throw ConfigError("item index " + std::to_string(item) + " out of range");
    return {data_.data() + item * dim_, dim_};
  }

  double dot(std::size_t item, std::span<const double> v) const {
    const auto r = row(item);
    require_shape(v.size() == dim_, "ItemEmbeddings::dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) s += r[d] * v[d];
    return s;
  }

  bool operator==(const ItemEmbeddings&) const = default;

 private:
  std::size_t n_items_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// What the agent sees: noisy latent features followed by step / max_depth.
struct Observation {
  std::vector<double> values;

  std::size_t state_dim() const { return values.empty() ? 0 : values.size() - 1; }
  std::span<const double> features() const { return {values.data(), state_dim()}; }
  double step_fraction() const { return values.back(); }
  std::span<const double> input() const { return values; }

  bool operator==(const Observation&) const = default;
};

struct SlateAction {
  std::vector<std::size_t> items;

  bool operator==(const SlateAction&) const = default;
};

struct Feedback {
  std::vector<bool> clicks;

  std::size_t click_count() const { return static_cast<std::size_t>(std::count(clicks.begin(), clicks.end(), true)); }
};

struct UserSimState {
  EnvConfig config;
  std::shared_ptr<const ItemEmbeddings> items;
  std::vector<double> latent;
  double temper = 0.0;
  std::size_t step = 0;
  bool done = false;
  Rng rng;

  bool operator==(const UserSimState& o) const {
    return latent == o.latent && temper == o.temper && step == o.step && done == o.done && rng == o.rng &&
           (items == o.items || (items && o.items && *items == *o.items));
  }
};

struct StepResult {
  Feedback feedback;
  double reward = 0.0;
  Observation next;
  bool done = false;
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void validate_slate(const SlateAction& slate, std::size_t n_items, std::size_t slate_size) {
  require(slate.items.size() == slate_size, "slate must contain exactly slate_size items");
  std::vector<bool> seen(n_items, false);
  for (auto item : slate.items) {
    require(item < n_items, "slate item index " + std::to_string(item) + " out of range");
    require(!seen[item], "slate contains a duplicate item");
    seen[item] = true;
  }
}

namespace detail {

inline void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0)
    for (double& x : v) x /= n;
}

inline Observation observe(UserSimState& state) {
  Observation obs;
  obs.values.resize(state.config.state_dim + 1);
  if (state.config.noise_scale > 0.0) {
    std::normal_distribution<double> noise(0.0, state.config.noise_scale);
    for (std::size_t d = 0; d < state.config.state_dim; ++d) obs.values[d] = state.latent[d] + noise(state.rng);
  } else {
    std::copy(state.latent.begin(), state.latent.end(), obs.values.begin());
  }
  obs.values.back() = static_cast<double>(state.step) / static_cast<double>(state.config.max_depth);
  return obs;
}

}  // namespace detail

inline std::pair<UserSimState, Observation> env_reset(const EnvConfig& config,
                                                      std::shared_ptr<const ItemEmbeddings> items,
                                                      std::uint64_t episode_seed) {
  config.validate();
  require(items && items->size() == config.n_items && items->dim() == config.state_dim,
          "env_reset: item embeddings do not match the config");
  UserSimState state;
  state.config = config;
  state.items = std::move(items);
  state.rng.seed(episode_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  state.latent.resize(config.state_dim);
  do {
    for (auto& x : state.latent) x = normal(state.rng);
  } while (std::all_of(state.latent.begin(), state.latent.end(), [](double x) { return x == 0.0; }));
  detail::normalize(state.latent);
  state.temper = config.temper_init;
  state.step = 0;
  state.done = false;
  Observation obs = detail::observe(state);
  return {std::move(state), std::move(obs)};
}

inline std::pair<UserSimState, Observation> env_reset(const EnvConfig& config, std::uint64_t episode_seed) {
  return env_reset(config, std::make_shared<const ItemEmbeddings>(ItemEmbeddings::generate(config)), episode_seed);
}

/// p_k = logistic(sharpness * <latent, e_k>). Pure; consumes no randomness.
inline std::vector<double> click_probabilities(const UserSimState& state, const SlateAction& slate) {
  std::vector<double> p;
  p.reserve(slate.items.size());
  for (auto item : slate.items) {
    if (item >= state.items->size()) throw ConfigError("item index " + std::to_string(item) + " out of range");
    p.push_back(logistic(kClickSharpness * state.items->dot(item, state.latent)));
  }
  return p;
}

inline StepResult env_step(UserSimState& state, const SlateAction& slate) {
  const auto& cfg = state.config;
  if (state.done || state.step >= cfg.max_depth || state.temper <= cfg.temper_threshold) {
    throw ConfigError("env_step: episode already finished");
  }
  validate_slate(slate, cfg.n_items, cfg.slate_size);

  const auto probs = click_probabilities(state, slate);
  StepResult out;
  out.feedback.clicks.resize(slate.items.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::size_t clicks = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const bool click = cfg.deterministic_clicks ? probs[k] >= 0.5 : unif(state.rng) < probs[k];
    out.feedback.clicks[k] = click;
    clicks += click ? 1 : 0;
    out.reward += click ? cfg.click_reward : cfg.miss_reward;
  }
  const std::size_t misses = slate.items.size() - clicks;

  if (clicks > 0 && cfg.drift_rate > 0.0) {
    std::vector<double> mean(cfg.state_dim, 0.0);
    for (std::size_t k = 0; k < slate.items.size(); ++k) {
      if (!out.feedback.clicks[k]) continue;
      const auto e = state.items->row(slate.items[k]);
      for (std::size_t d = 0; d < cfg.state_dim; ++d) mean[d] += e[d];
    }
    std::vector<double> next(cfg.state_dim);
    for (std::size_t d = 0; d < cfg.state_dim; ++d) {
      next[d] = (1.0 - cfg.drift_rate) * state.latent[d] + cfg.drift_rate * mean[d] / static_cast<double>(clicks);
    }
    if (std::any_of(next.begin(), next.end(), [](double x) { return x != 0.0; })) {
      detail::normalize(next);
      state.latent = std::move(next);
    }
  }

  state.temper -= cfg.temper_base_cost + cfg.temper_miss_cost * static_cast<double>(misses);
  ++state.step;
  state.done = state.temper <= cfg.temper_threshold || state.step >= cfg.max_depth;
  out.done = state.done;
  out.next = detail::observe(state);
  return out;
}

/// K distinct items uniformly without replacement (partial Fisher-Yates), in draw order.
inline SlateAction random_slate(std::size_t n_items, std::size_t slate_size, Rng& rng) {
  require(slate_size <= n_items, "random_slate: slate larger than item pool");
  std::vector<std::size_t> pool(n_items);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t k = 0; k < slate_size; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n_items - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(slate_size);
  return SlateAction{std::move(pool)};
}

inline SlateAction random_slate(const UserSimState& state, Rng& rng) {
  return random_slate(state.config.n_items, state.config.slate_size, rng);
}

/// Owns the item catalogue for one EnvConfig and hands out episodes.
class UserEnv {
 public:
  explicit UserEnv(EnvConfig config)
      : config_(std::move(config)),
        items_((config_.validate(), std::make_shared<const ItemEmbeddings>(ItemEmbeddings::generate(config_)))) {}

  const EnvConfig& config() const { return config_; }
  const ItemEmbeddings& items() const { return *items_; }
  std::shared_ptr<const ItemEmbeddings> shared_items() const { return items_; }
  std::size_t observation_size() const { return config_.state_dim + 1; }

  std::pair<UserSimState, Observation> reset(std::uint64_t episode_seed) const {
    return env_reset(config_, items_, episode_seed);
  }

 private:
  EnvConfig config_;
  std::shared_ptr<const ItemEmbeddings> items_;
};

}  // namespace tdlab::env
