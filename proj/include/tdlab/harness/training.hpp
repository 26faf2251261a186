#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "tdlab/agents/factory.hpp"
#include "tdlab/agents/slate_policy.hpp"
#include "tdlab/buffer/replay.hpp"
#include "tdlab/env/user_env.hpp"
#include "tdlab/harness/config.hpp"
#include "tdlab/harness/metrics.hpp"
#include "tdlab/random.hpp"

namespace tdlab::harness {

inline std::uint64_t episode_seed(std::uint64_t run_seed, std::uint64_t episode_index) {
  return derive_seed(derive_seed(run_seed, SeedStream::episodes), episode_index);
}

/// Behavior of the warm-up phase: uniform slates for discrete backbones, a
/// standard normal hyper-action for continuous ones.
inline agents::PolicyOutput warmup_action(const agents::AgentConfig& agent, const env::ItemEmbeddings& items,
                                          std::size_t slate_size, Rng& rng) {
  agents::PolicyOutput out;
  if (agents::is_continuous(agent.backbone)) {
    std::normal_distribution<double> unit(0.0, 1.0);
    out.hyper_action.resize(agent.hyper_dim);
    for (double& x : out.hyper_action) x = unit(rng);
    const std::vector<double> zero(agent.hyper_dim, 0.0);
    out.log_likelihood = agents::gaussian_log_density(out.hyper_action, zero, 1.0);
    out.slate = agents::slate_from_hyper_action(out.hyper_action, items, slate_size);
  } else {
    out.slate = env::random_slate(items.size(), slate_size, rng);
    out.log_likelihood = agents::uniform_slate_log_prob(items.size(), slate_size);
  }
  return out;
}

inline void write_trace_header(std::ostream& out) { out << "phase,episode,step,items,clicks,reward,temper\n"; }

inline void write_trace_row(std::ostream& out, const char* phase, std::uint64_t episode, std::size_t step,
                            const env::SlateAction& slate, const env::Feedback& fb, double reward, double temper) {
  out << phase << ',' << episode << ',' << step << ',';
  for (std::size_t k = 0; k < slate.items.size(); ++k) out << (k ? " " : "") << slate.items[k];
  out << ',';
  for (std::size_t k = 0; k < fb.clicks.size(); ++k) out << (k ? " " : "") << (fb.clicks[k] ? 1 : 0);
  out << ',' << csv_number(reward) << ',' << csv_number(temper) << '\n';
}

/// Greedy (explore=false) rollouts of `agent`.
inline SweepMetrics evaluate(agents::Agent& agent, const env::EnvConfig& env_config, std::size_t n_episodes,
                             std::uint64_t seed) {
  env::UserEnv env(env_config);
  require(env.items().size() == agent.items().size() && env.items().dim() == agent.items().dim(),
          "evaluate: environment does not match the agent");
  Rng rng(derive_seed(seed, SeedStream::eval));
  std::vector<EpisodeStats> episodes;
  episodes.reserve(n_episodes);
  for (std::size_t e = 0; e < n_episodes; ++e) {
    auto [state, obs] = env.reset(derive_seed(derive_seed(seed, SeedStream::eval), e + 1));
    EpisodeStats ep;
    while (!state.done) {
      const auto action = agent.select_action(obs, false, rng);
      auto res = env::env_step(state, action.slate);
      ep.total_reward += res.reward;
      ++ep.depth;
      obs = std::move(res.next);
    }
    episodes.push_back(ep);
  }
  SweepMetrics m;
  m.set_window(window_stats(episodes, episodes.size()));
  m.episodes = episodes.size();
  return m;
}

inline const char* kRunCsvHeader =
    "kind,step,episodes,mean_reward,mean_depth,min_reward,reward_variance,mean_beta,mean_alpha,action_td_loss,"
    "state_td_loss,critic_loss,policy_loss,mean_advantage,grad_norm_v,grad_norm_q,grad_norm_policy,divergences,"
    "quarter_mean_reward,eval_mean_reward,eval_mean_depth\n";

struct TrainingResult {
  SweepMetrics metrics;
  std::unique_ptr<agents::Agent> agent;
};

/// Warm-up, then one environment step and one update per step for
/// config.total_steps steps. Writes the run CSV to `csv` and, when given, a
/// per-step episode trace to `trace`.
inline TrainingResult train(const RunConfig& config, std::ostream& csv, std::ostream* trace = nullptr) {
  config.validate();
  env::UserEnv env(config.env);
  const std::size_t k = config.env.slate_size;
  TrainingResult result;
  result.agent = agents::make_agent(config.agent, env.shared_items(), k, config.seed);
  auto& agent = *result.agent;
  Rng explore_rng(derive_seed(config.seed, SeedStream::explore));
  Rng replay_rng(derive_seed(config.seed, SeedStream::replay));
  buffer::ReplayBuffer replay(config.buffer_capacity);

  std::uint64_t episode_index = 0;
  std::vector<EpisodeStats> warmup_episodes, episodes;
  if (trace) write_trace_header(*trace);

  const auto run_episode_step = [&](env::UserSimState& state, env::Observation& obs, const agents::PolicyOutput& action,
                                    EpisodeStats& ep, const char* phase) {
    auto res = env::env_step(state, action.slate);
    if (trace) write_trace_row(*trace, phase, episode_index, state.step, action.slate, res.feedback, res.reward, state.temper);
    buffer::Transition t;
    t.obs = obs;
    t.action = action;
    t.reward = res.reward;
    t.next_obs = res.next;
    t.done = res.done;
    t.episode_id = episode_index;
    t.step_index = state.step - 1;
    replay.push(std::move(t));
    ep.total_reward += res.reward;
    ++ep.depth;
    obs = std::move(res.next);
    return res.done;
  };

  for (std::size_t e = 0; e < config.warmup_episodes; ++e) {
    auto [state, obs] = env.reset(episode_seed(config.seed, episode_index));
    EpisodeStats ep;
    bool done = false;
    while (!done) {
      const auto action = warmup_action(config.agent, env.items(), k, explore_rng);
      done = run_episode_step(state, obs, action, ep, "warmup");
    }
    warmup_episodes.push_back(ep);
    ++episode_index;
  }

  csv << kRunCsvHeader;
  RollingMean beta(config.loss_window), alpha(config.loss_window), action_td(config.loss_window),
      state_td(config.loss_window), critic(config.loss_window), policy(config.loss_window), adv(config.loss_window),
      gv(config.loss_window), gq(config.loss_window), gp(config.loss_window);
  SweepMetrics& m = result.metrics;

  const auto current_window = [&]() {
    return episodes.empty() ? window_stats(warmup_episodes, config.eval_window)
                            : window_stats(episodes, config.eval_window);
  };
  const auto write_row = [&](const char* kind, std::uint64_t step) {
    const auto w = current_window();
    const double values[] = {w.mean_reward,  w.mean_depth,    w.min_reward,  w.reward_variance, beta.mean(),
                             alpha.mean(),   action_td.mean(), state_td.mean(), critic.mean(),  policy.mean(),
                             adv.mean(),     gv.mean(),       gq.mean(),     gp.mean()};
    csv << kind << ',' << step << ',' << episodes.size();
    for (double v : values) csv << ',' << csv_number(v);
    csv << ',' << agent.divergence_count();
    if (std::string(kind) == "summary") {
      csv << ',' << csv_number(m.quarter_mean_reward) << ',' << csv_number(m.eval_mean_reward) << ','
          << csv_number(m.eval_mean_depth) << '\n';
    } else {
      csv << ",,,\n";
    }
  };

  const std::uint64_t quarter = config.total_steps / 4;
  std::size_t consecutive_skips = 0;
  std::uint64_t step = 0;
  if (config.total_steps > 0) {
    auto [state, obs] = env.reset(episode_seed(config.seed, episode_index));
    EpisodeStats ep;
    for (; step < config.total_steps;) {
      agent.set_step(step);
      const auto action = agent.select_action(obs, true, explore_rng);
      if (run_episode_step(state, obs, action, ep, "train")) {
        episodes.push_back(ep);
        ep = {};
        ++episode_index;
        std::tie(state, obs) = env.reset(episode_seed(config.seed, episode_index));
      }
      const auto batch = replay.sample(config.batch_size, replay_rng);
      const auto report = agent.update(batch);
      ++step;
      if (report.skipped) {
        ++consecutive_skips;
      } else {
        consecutive_skips = 0;
        beta.push(report.mean_beta);
        alpha.push(report.mean_alpha);
        action_td.push(report.action_td_loss);
        state_td.push(report.state_td_loss);
        critic.push(report.critic_loss);
        policy.push(report.policy_loss);
        adv.push(report.mean_advantage);
        gv.push(report.grad_norm_v);
        gq.push(report.grad_norm_q);
        gp.push(report.grad_norm_policy);
      }
      if (step == quarter) m.quarter_mean_reward = current_window().mean_reward;
      if (consecutive_skips > config.max_consecutive_divergences) {
        m.diverged = true;
        write_row("divergence", step);
        break;
      }
      if (step % config.log_interval == 0) write_row("log", step);
    }
  }

  m.set_window(current_window());
  m.mean_beta = beta.mean();
  m.mean_alpha = alpha.mean();
  m.action_td_loss = action_td.mean();
  m.state_td_loss = state_td.mean();
  m.critic_loss = critic.mean();
  m.policy_loss = policy.mean();
  m.mean_advantage = adv.mean();
  m.episodes = episodes.size();
  m.steps = step;
  m.divergences = agent.divergence_count();
  if (config.eval_episodes > 0 && !m.diverged) {
    const auto eval = evaluate(agent, config.env, config.eval_episodes, config.seed);
    m.eval_mean_reward = eval.mean_reward;
    m.eval_mean_depth = eval.mean_depth;
  }
  write_row("summary", step);
  return result;
}

/// train() writing the CSV to config.output_path (and the trace to
/// config.trace_path when set).
inline TrainingResult run_training(const RunConfig& config) {
  const std::filesystem::path out_path(config.output_path);
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  std::ofstream csv(out_path, std::ios::binary);
  if (!csv) throw ConfigError("cannot write " + config.output_path);
  std::ofstream trace;
  if (!config.trace_path.empty()) {
    const std::filesystem::path trace_path(config.trace_path);
    if (trace_path.has_parent_path()) std::filesystem::create_directories(trace_path.parent_path());
    trace.open(trace_path, std::ios::binary);
    if (!trace) throw ConfigError("cannot write " + config.trace_path);
  }
  return train(config, csv, trace.is_open() ? &trace : nullptr);
}

}  // namespace tdlab::harness
