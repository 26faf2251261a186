#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace tdlab::harness {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EpisodeStats {
  double total_reward = 0.0;  // undiscounted
  std::size_t depth = 0;
};

struct WindowStats {
  double mean_reward = kNaN;
  double mean_depth = kNaN;
  double min_reward = kNaN;
  double reward_variance = kNaN;
  std::size_t episodes = 0;
};

/// Headline statistics over the last `window` episodes (all when shorter).
inline WindowStats window_stats(std::span<const EpisodeStats> episodes, std::size_t window) {
  WindowStats w;
  const std::size_t n = std::min(window, episodes.size());
  if (n == 0) return w;
  const auto tail = episodes.subspan(episodes.size() - n);
  double sum = 0.0, depth = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& e : tail) {
    sum += e.total_reward;
    depth += static_cast<double>(e.depth);
    lo = std::min(lo, e.total_reward);
  }
  w.episodes = n;
  w.mean_reward = sum / static_cast<double>(n);
  w.mean_depth = depth / static_cast<double>(n);
  w.min_reward = lo;
  double sq = 0.0;
  for (const auto& e : tail) sq += (e.total_reward - w.mean_reward) * (e.total_reward - w.mean_reward);
  w.reward_variance = sq / static_cast<double>(n);
  return w;
}

/// Mean of the last `capacity` finite values pushed.
class RollingMean {
 public:
  explicit RollingMean(std::size_t capacity = 1000) : capacity_(capacity) {}

  void push(double x) {
    if (!std::isfinite(x)) return;
    values_.push_back(x);
    if (values_.size() > capacity_) values_.pop_front();
  }

  double mean() const {
    if (values_.empty()) return kNaN;
    double s = 0.0;
    for (double v : values_) s += v;
    return s / static_cast<double>(values_.size());
  }

  std::size_t size() const { return values_.size(); }

 private:
  std::size_t capacity_;
  std::deque<double> values_;
};

struct SweepMetrics {
  double mean_reward = kNaN;
  double mean_depth = kNaN;
  double min_reward = kNaN;
  double reward_variance = kNaN;
  double mean_beta = kNaN;
  double mean_alpha = kNaN;
  double action_td_loss = kNaN;
  double state_td_loss = kNaN;
  double critic_loss = kNaN;
  double policy_loss = kNaN;
  double mean_advantage = kNaN;
  double quarter_mean_reward = kNaN;  // mean_reward after 25% of total_steps
  double eval_mean_reward = kNaN;     // greedy evaluation after training
  double eval_mean_depth = kNaN;
  std::size_t episodes = 0;
  std::uint64_t steps = 0;
  std::uint64_t divergences = 0;
  bool diverged = false;

  void set_window(const WindowStats& w) {
    mean_reward = w.mean_reward;
    mean_depth = w.mean_depth;
    min_reward = w.min_reward;
    reward_variance = w.reward_variance;
  }
};

/// Numeric metric columns shared by run summaries and sweep aggregates.
struct MetricColumn {
  const char* name;
  double SweepMetrics::* field;
};

inline constexpr MetricColumn kMetricColumns[] = {
    {"mean_reward", &SweepMetrics::mean_reward},
    {"mean_depth", &SweepMetrics::mean_depth},
    {"min_reward", &SweepMetrics::min_reward},
    {"reward_variance", &SweepMetrics::reward_variance},
    {"mean_beta", &SweepMetrics::mean_beta},
    {"mean_alpha", &SweepMetrics::mean_alpha},
    {"action_td_loss", &SweepMetrics::action_td_loss},
    {"state_td_loss", &SweepMetrics::state_td_loss},
    {"critic_loss", &SweepMetrics::critic_loss},
    {"policy_loss", &SweepMetrics::policy_loss},
    {"mean_advantage", &SweepMetrics::mean_advantage},
    {"quarter_mean_reward", &SweepMetrics::quarter_mean_reward},
    {"eval_mean_reward", &SweepMetrics::eval_mean_reward},
    {"eval_mean_depth", &SweepMetrics::eval_mean_depth},
};

/// Shortest round-trip text for finite values; empty for NaN.
inline std::string csv_number(double x) {
  if (std::isnan(x)) return "";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double median(std::vector<double> xs) {
  std::erase_if(xs, [](double x) { return std::isnan(x); });
  if (xs.empty()) return kNaN;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double sample_std(std::vector<double> xs) {
  std::erase_if(xs, [](double x) { return std::isnan(x); });
  if (xs.empty()) return kNaN;
  if (xs.size() == 1) return 0.0;
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - m) * (x - m);
  return std::sqrt(sq / static_cast<double>(xs.size() - 1));
}

}  // namespace tdlab::harness
