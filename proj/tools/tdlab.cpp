#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "tdlab/tdlab.hpp"
#include "tdlab/harness/selftest.hpp"

namespace fs = std::filesystem;
using namespace tdlab;

namespace {

using harness::output_location;

int cmd_train(const std::string& config_path, const std::string& checkpoint, const std::string& output) {
  auto config = harness::load_run_config(config_path);
  if (!output.empty()) config.output_path = output;
  config.output_path = output_location(config.output_path).string();
  if (!config.trace_path.empty()) config.trace_path = output_location(config.trace_path).string();
  auto result = harness::run_training(config);
  const auto& m = result.metrics;
  std::cout << "wrote " << config.output_path << "\n"
            << "steps " << m.steps << ", episodes " << m.episodes << ", mean_reward " << harness::csv_number(m.mean_reward)
            << ", mean_depth " << harness::csv_number(m.mean_depth) << ", divergences " << m.divergences << "\n";
  if (!checkpoint.empty()) {
    const auto path = output_location(checkpoint);
    harness::save_agent_file(path, *result.agent);
    std::cout << "checkpoint " << path.string() << "\n";
  }
  if (m.diverged) {
    std::cerr << "training diverged\n";
    return 2;
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& axes,
              const std::vector<std::string>& values, const std::string& seeds_text, std::size_t workers,
              const std::string& output, bool keep_runs) {
  if (axes.size() != values.size()) throw ConfigError("every --axis needs a matching --values list");
  const auto base = harness::load_run_config(config_path);
  std::vector<harness::AxisValues> spec;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    spec.push_back({harness::parse_sweep_axis(axes[i]), harness::split_list(values[i])});
  }
  std::vector<std::uint64_t> seeds;
  for (const auto& s : harness::split_list(seeds_text)) seeds.push_back(std::stoull(s));
  const fs::path out = output_location(output.empty() ? fs::path(base.output_path).replace_extension("").string() + "_sweep.csv"
                                                      : output);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const fs::path run_dir = keep_runs ? fs::path(out).replace_extension("") : fs::path();
  const auto result = harness::run_sweep(base, spec, seeds, workers, run_dir);
  {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + out.string());
    harness::write_sweep_csv(f, result);
  }
  fs::path runs_path = out;
  runs_path.replace_extension("");
  runs_path += "_runs.csv";
  {
    std::ofstream f(runs_path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + runs_path.string());
    harness::write_runs_csv(f, result);
  }
  std::size_t diverged = 0;
  for (const auto& r : result.runs) diverged += r.metrics.diverged ? 1 : 0;
  std::cout << "wrote " << out.string() << " and " << runs_path.string() << " (" << result.runs.size() << " runs, "
            << diverged << " diverged)\n";
  return diverged > 0 ? 2 : 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path, std::size_t episodes,
             std::uint64_t seed) {
  const auto config = harness::load_run_config(config_path);
  env::UserEnv env(config.env);
  auto agent = agents::make_agent(config.agent, env.shared_items(), config.env.slate_size, config.seed);
  harness::load_agent_file(checkpoint, *agent);
  const auto m = harness::evaluate(*agent, config.env, episodes, seed);
  std::cout << "episodes,mean_reward,mean_depth,min_reward,reward_variance\n"
            << m.episodes << ',' << harness::csv_number(m.mean_reward) << ',' << harness::csv_number(m.mean_depth)
            << ',' << harness::csv_number(m.min_reward) << ',' << harness::csv_number(m.reward_variance) << '\n';
  return 0;
}

int cmd_selftest(std::size_t seeds) {
  const auto rep = harness::run_selftest(seeds);
  harness::print_selftest(std::cout, rep);
  return rep.passed() ? 0 : 1;
}

int cmd_template(const std::string& output) {
  const std::string text = harness::dump_run_config(harness::RunConfig{});
  if (output.empty()) {
    std::cout << text;
    return 0;
  }
  std::ofstream f(output, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + output);
  f << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TD decomposition laboratory"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, output;
  auto* train = app.add_subcommand("train", "Train one agent and write the run CSV");
  train->add_option("config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--checkpoint", checkpoint, "Also save the trained networks here");
  train->add_option("--output", output, "Override output_path");

  std::vector<std::string> axes, values;
  std::string seeds = "1,2,3,4,5";
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  bool keep_runs = false;
  std::string sweep_config, sweep_output;
  auto* sweep = app.add_subcommand("sweep", "Run a cross-product of axis values and seeds");
  sweep->add_option("config", sweep_config, "Base run config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", axes, "Axis: sigma, epsilon, lr_v, lr_q, lr_policy, beta_ablation, backbone, td_mode")
      ->required();
  sweep->add_option("--values", values, "Comma-separated values, one list per --axis")->required();
  sweep->add_option("--seeds", seeds, "Comma-separated seeds");
  sweep->add_option("--workers", workers, "Concurrent runs");
  sweep->add_option("--output", sweep_output, "Aggregate CSV path");
  sweep->add_flag("--keep-runs", keep_runs, "Also write every run's CSV");

  std::string eval_checkpoint, eval_config;
  std::size_t eval_episodes = 200;
  std::uint64_t eval_seed = 1;
  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval->add_option("checkpoint", eval_checkpoint, "Agent checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("config", eval_config, "Run config the agent was trained with")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", eval_episodes, "Evaluation episodes");
  eval->add_option("--seed", eval_seed, "Evaluation seed");

  std::size_t selftest_seeds = 24;
  auto* selftest = app.add_subcommand("selftest", "Gradient, stop-gradient, oracle and bound checks");
  selftest->add_option("--seeds", selftest_seeds, "Random configurations per gradient check");

  std::string template_output;
  auto* tmpl = app.add_subcommand("template", "Print the full-default run config");
  tmpl->add_option("--output", template_output, "Write to this file instead of stdout");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(config_path, checkpoint, output);
    if (*sweep) return cmd_sweep(sweep_config, axes, values, seeds, workers, sweep_output, keep_runs);
    if (*eval) return cmd_eval(eval_checkpoint, eval_config, eval_episodes, eval_seed);
    if (*selftest) return cmd_selftest(selftest_seeds);
    if (*tmpl) return cmd_template(template_output);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
