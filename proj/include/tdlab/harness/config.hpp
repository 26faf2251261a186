#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "tdlab/agents/config.hpp"
#include "tdlab/env/user_env.hpp"
#include "tdlab/error.hpp"

namespace tdlab::harness {

using Json = nlohmann::ordered_json;

struct RunConfig {
  env::EnvConfig env;
  agents::AgentConfig agent;
  std::uint64_t total_steps = 30000;
  std::size_t eval_window = 100;    // episodes in the reward window
  std::size_t log_interval = 100;   // environment steps per CSV row
  std::size_t loss_window = 1000;   // updates averaged into loss and beta statistics
  std::size_t batch_size = 128;
  std::size_t warmup_episodes = 100;
  std::size_t buffer_capacity = 10000;
  std::size_t eval_episodes = 0;    // greedy evaluation episodes after training
  std::size_t max_consecutive_divergences = 10;
  std::uint64_t seed = 1;
  std::string output_path = "run.csv";
  std::string trace_path;  // optional per-step episode trace

  void validate() const {
    env.validate();
    agent.validate(env);
    require(eval_window >= 1, "eval_window must be at least 1");
    require(total_steps == 0 || total_steps >= eval_window, "total_steps must be at least eval_window");
    require(log_interval >= 1, "log_interval must be at least 1");
    require(loss_window >= 1, "loss_window must be at least 1");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(buffer_capacity >= 1, "buffer_capacity must be at least 1");
    require(total_steps == 0 || warmup_episodes >= 1, "warmup_episodes must be at least 1 when training");
  }
};

namespace detail {

inline void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
  }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + where + key + "': " + e.what());
  }
}

}  // namespace detail

inline Json to_json(const env::EnvConfig& c) {
  return Json{{"n_items", c.n_items},
              {"slate_size", c.slate_size},
              {"state_dim", c.state_dim},
              {"max_depth", c.max_depth},
              {"click_reward", c.click_reward},
              {"miss_reward", c.miss_reward},
              {"temper_init", c.temper_init},
              {"temper_threshold", c.temper_threshold},
              {"temper_miss_cost", c.temper_miss_cost},
              {"temper_base_cost", c.temper_base_cost},
              {"drift_rate", c.drift_rate},
              {"noise_scale", c.noise_scale},
              {"seed", c.seed},
              {"deterministic_clicks", c.deterministic_clicks}};
}

inline env::EnvConfig env_from_json(const Json& j) {
  env::EnvConfig c;
  const std::string w = "env.";
  detail::reject_unknown(j,
                         {"n_items", "slate_size", "state_dim", "max_depth", "click_reward", "miss_reward",
                          "temper_init", "temper_threshold", "temper_miss_cost", "temper_base_cost", "drift_rate",
                          "noise_scale", "seed", "deterministic_clicks"},
                         w);
  detail::read(j, "n_items", c.n_items, w);
  detail::read(j, "slate_size", c.slate_size, w);
  detail::read(j, "state_dim", c.state_dim, w);
  detail::read(j, "max_depth", c.max_depth, w);
  detail::read(j, "click_reward", c.click_reward, w);
  detail::read(j, "miss_reward", c.miss_reward, w);
  detail::read(j, "temper_init", c.temper_init, w);
  detail::read(j, "temper_threshold", c.temper_threshold, w);
  detail::read(j, "temper_miss_cost", c.temper_miss_cost, w);
  detail::read(j, "temper_base_cost", c.temper_base_cost, w);
  detail::read(j, "drift_rate", c.drift_rate, w);
  detail::read(j, "noise_scale", c.noise_scale, w);
  detail::read(j, "seed", c.seed, w);
  detail::read(j, "deterministic_clicks", c.deterministic_clicks, w);
  return c;
}

inline Json to_json(const agents::AgentConfig& c) {
  return Json{{"backbone", agents::to_string(c.backbone)},
              {"td_mode", agents::to_string(c.td_mode)},
              {"gamma", c.gamma},
              {"lr_v", c.lr_v},
              {"lr_q", c.lr_q},
              {"lr_policy", c.lr_policy},
              {"optimizer", approx::to_string(c.optimizer)},
              {"hidden", c.hidden},
              {"activation", approx::to_string(c.activation)},
              {"exploration",
               Json{{"sigma", c.exploration.sigma}, {"epsilon", c.exploration.epsilon}, {"decay", c.exploration.decay}}},
              {"use_target_net", c.use_target_net},
              {"target_tau", c.target_tau},
              {"beta_clip", Json::array({c.beta_clip_lo, c.beta_clip_hi})},
              {"use_beta", c.use_beta},
              {"hyper_dim", c.hyper_dim},
              {"actor_bound", c.actor_bound}};
}

inline agents::AgentConfig agent_from_json(const Json& j) {
  agents::AgentConfig c;
  const std::string w = "agent.";
  detail::reject_unknown(j,
                         {"backbone", "td_mode", "gamma", "lr_v", "lr_q", "lr_policy", "optimizer", "hidden",
                          "activation", "exploration", "use_target_net", "target_tau", "beta_clip", "use_beta",
                          "hyper_dim", "actor_bound"},
                         w);
  std::string text;
  if (j.contains("backbone")) {
    detail::read(j, "backbone", text, w);
    c.backbone = agents::parse_backbone(text);
  }
  if (j.contains("td_mode")) {
    detail::read(j, "td_mode", text, w);
    c.td_mode = agents::parse_td_mode(text);
  }
  detail::read(j, "gamma", c.gamma, w);
  detail::read(j, "lr_v", c.lr_v, w);
  detail::read(j, "lr_q", c.lr_q, w);
  detail::read(j, "lr_policy", c.lr_policy, w);
  if (j.contains("optimizer")) {
    detail::read(j, "optimizer", text, w);
    c.optimizer = approx::parse_update_rule(text);
  }
  detail::read(j, "hidden", c.hidden, w);
  if (j.contains("activation")) {
    detail::read(j, "activation", text, w);
    c.activation = approx::parse_activation(text);
  }
  if (j.contains("exploration")) {
    const auto& e = j.at("exploration");
    const std::string we = w + "exploration.";
    detail::reject_unknown(e, {"sigma", "epsilon", "decay"}, we);
    detail::read(e, "sigma", c.exploration.sigma, we);
    detail::read(e, "epsilon", c.exploration.epsilon, we);
    detail::read(e, "decay", c.exploration.decay, we);
  }
  detail::read(j, "use_target_net", c.use_target_net, w);
  detail::read(j, "target_tau", c.target_tau, w);
  if (j.contains("beta_clip")) {
    std::vector<double> clip;
    detail::read(j, "beta_clip", clip, w);
    if (clip.size() != 2) throw ConfigError("agent.beta_clip must be a [lo, hi] pair");
    c.beta_clip_lo = clip[0];
    c.beta_clip_hi = clip[1];
  }
  detail::read(j, "use_beta", c.use_beta, w);
  detail::read(j, "hyper_dim", c.hyper_dim, w);
  detail::read(j, "actor_bound", c.actor_bound, w);
  return c;
}

inline Json to_json(const RunConfig& c) {
  return Json{{"seed", c.seed},
              {"total_steps", c.total_steps},
              {"eval_window", c.eval_window},
              {"log_interval", c.log_interval},
              {"loss_window", c.loss_window},
              {"batch_size", c.batch_size},
              {"warmup_episodes", c.warmup_episodes},
              {"buffer_capacity", c.buffer_capacity},
              {"eval_episodes", c.eval_episodes},
              {"max_consecutive_divergences", c.max_consecutive_divergences},
              {"output_path", c.output_path},
              {"trace_path", c.trace_path},
              {"env", to_json(c.env)},
              {"agent", to_json(c.agent)}};
}

inline RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  const std::string w;
  detail::reject_unknown(j,
                         {"seed", "total_steps", "eval_window", "log_interval", "loss_window", "batch_size",
                          "warmup_episodes", "buffer_capacity", "eval_episodes", "max_consecutive_divergences",
                          "output_path", "trace_path", "env", "agent"},
                         w);
  detail::read(j, "seed", c.seed, w);
  detail::read(j, "total_steps", c.total_steps, w);
  detail::read(j, "eval_window", c.eval_window, w);
  detail::read(j, "log_interval", c.log_interval, w);
  detail::read(j, "loss_window", c.loss_window, w);
  detail::read(j, "batch_size", c.batch_size, w);
  detail::read(j, "warmup_episodes", c.warmup_episodes, w);
  detail::read(j, "buffer_capacity", c.buffer_capacity, w);
  detail::read(j, "eval_episodes", c.eval_episodes, w);
  detail::read(j, "max_consecutive_divergences", c.max_consecutive_divergences, w);
  detail::read(j, "output_path", c.output_path, w);
  detail::read(j, "trace_path", c.trace_path, w);
  if (j.contains("env")) c.env = env_from_json(j.at("env"));
  if (j.contains("agent")) c.agent = agent_from_json(j.at("agent"));
  c.validate();
  return c;
}

inline RunConfig parse_run_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

inline std::string dump_run_config(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

inline constexpr const char* kOutputDirVariable = "TDD_OUTPUT_DIR";

/// `path` relocated into $TDD_OUTPUT_DIR when that variable is set.
inline std::filesystem::path output_location(const std::filesystem::path& path) {
  const char* dir = std::getenv(kOutputDirVariable);
  if (dir == nullptr || *dir == '\0') return path;
  return std::filesystem::path(dir) / path.filename();
}

}  // namespace tdlab::harness
