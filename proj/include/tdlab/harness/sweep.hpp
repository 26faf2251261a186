#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "tdlab/harness/config.hpp"
#include "tdlab/harness/metrics.hpp"
#include "tdlab/harness/training.hpp"

namespace tdlab::harness {

enum class SweepAxis : std::uint8_t { sigma, epsilon, lr_v, lr_q, lr_policy, beta_ablation, backbone, td_mode };

inline constexpr SweepAxis kAllAxes[] = {SweepAxis::sigma,     SweepAxis::epsilon,       SweepAxis::lr_v,
                                         SweepAxis::lr_q,      SweepAxis::lr_policy,     SweepAxis::beta_ablation,
                                         SweepAxis::backbone,  SweepAxis::td_mode};

inline std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::sigma: return "sigma";
    case SweepAxis::epsilon: return "epsilon";
    case SweepAxis::lr_v: return "lr_v";
    case SweepAxis::lr_q: return "lr_q";
    case SweepAxis::lr_policy: return "lr_policy";
    case SweepAxis::beta_ablation: return "beta_ablation";
    case SweepAxis::backbone: return "backbone";
    case SweepAxis::td_mode: return "td_mode";
  }
  return "?";
}

inline SweepAxis parse_sweep_axis(std::string_view name) {
  for (auto a : kAllAxes)
    if (name == to_string(a)) return a;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "'");
}

struct AxisValues {
  SweepAxis axis;
  std::vector<std::string> values;
};

inline double parse_real(const std::string& text, std::string_view what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("sweep value '" + text + "' for " + std::string(what) + " is not a number");
}

inline void apply_axis(RunConfig& c, SweepAxis axis, const std::string& value) {
  switch (axis) {
    case SweepAxis::sigma: c.agent.exploration.sigma = parse_real(value, "sigma"); break;
    case SweepAxis::epsilon: c.agent.exploration.epsilon = parse_real(value, "epsilon"); break;
    case SweepAxis::lr_v: c.agent.lr_v = parse_real(value, "lr_v"); break;
    case SweepAxis::lr_q: c.agent.lr_q = parse_real(value, "lr_q"); break;
    case SweepAxis::lr_policy: c.agent.lr_policy = parse_real(value, "lr_policy"); break;
    case SweepAxis::beta_ablation:
      if (value == "on") {
        c.agent.use_beta = true;
      } else if (value == "off") {
        c.agent.use_beta = false;
      } else {
        throw ConfigError("beta_ablation values are 'on' and 'off'");
      }
      break;
    case SweepAxis::backbone: c.agent.backbone = agents::parse_backbone(value); break;
    case SweepAxis::td_mode: c.agent.td_mode = agents::parse_td_mode(value); break;
  }
}

/// Splits "a,b,c" into its comma-separated fields.
inline std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    std::string item(text.substr(start, end - start));
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
    start = end + 1;
  }
  return out;
}

struct SweepRun {
  std::vector<std::string> labels;  // one value per axis
  std::uint64_t seed = 0;
  SweepMetrics metrics;
  std::string error;  // non-empty when the run threw
};

struct SweepResult {
  std::vector<SweepAxis> axes;
  std::vector<std::vector<std::string>> cells;  // axis-value combinations, in row-major axis order
  std::vector<std::uint64_t> seeds;
  std::vector<SweepRun> runs;                   // cell-major, then seed

  const SweepRun& run(std::size_t cell, std::size_t seed_index) const { return runs[cell * seeds.size() + seed_index]; }
};

/// Runs every (cell, seed) pair of the axis cross-product. Each run owns its
/// environment, agent, buffer and RNGs; up to `workers` run concurrently. Per
/// run CSVs go to `run_dir` when it is non-empty.
inline SweepResult run_sweep(const RunConfig& base, const std::vector<AxisValues>& axes,
                             const std::vector<std::uint64_t>& seeds, std::size_t workers = 1,
                             const std::filesystem::path& run_dir = {}) {
  require(!axes.empty(), "run_sweep: at least one axis is required");
  require(!seeds.empty(), "run_sweep: at least one seed is required");
  SweepResult result;
  result.seeds = seeds;
  result.cells.emplace_back();
  for (const auto& a : axes) {
    require(!a.values.empty(), "run_sweep: axis '" + std::string(to_string(a.axis)) + "' has no values");
    result.axes.push_back(a.axis);
    std::vector<std::vector<std::string>> grown;
    for (const auto& prefix : result.cells) {
      for (const auto& v : a.values) {
        auto cell = prefix;
        cell.push_back(v);
        grown.push_back(std::move(cell));
      }
    }
    result.cells = std::move(grown);
  }

  std::vector<RunConfig> configs;
  for (const auto& cell : result.cells) {
    for (auto seed : seeds) {
      RunConfig c = base;
      for (std::size_t i = 0; i < axes.size(); ++i) apply_axis(c, axes[i].axis, cell[i]);
      c.seed = seed;
      c.trace_path.clear();
      c.validate();
      configs.push_back(std::move(c));
      result.runs.push_back({cell, seed, {}, {}});
    }
  }
  if (!run_dir.empty()) std::filesystem::create_directories(run_dir);

  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      auto& run = result.runs[i];
      try {
        if (run_dir.empty()) {
          std::ostringstream sink;
          run.metrics = train(configs[i], sink).metrics;
        } else {
          std::string name = "run";
          for (const auto& l : run.labels) name += "_" + l;
          name += "_seed" + std::to_string(run.seed) + ".csv";
          auto c = configs[i];
          c.output_path = (run_dir / name).string();
          run.metrics = run_training(c).metrics;
        }
      } catch (const std::exception& e) {
        run.error = e.what();
        run.metrics.diverged = true;
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, configs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return result;
}

/// Per-cell median and sample standard deviation over seeds.
inline void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  for (auto a : r.axes) out << to_string(a) << ',';
  out << "n_seeds,n_diverged";
  for (const auto& col : kMetricColumns) out << ',' << col.name << "_median," << col.name << "_std";
  out << '\n';
  for (std::size_t c = 0; c < r.cells.size(); ++c) {
    for (const auto& label : r.cells[c]) out << label << ',';
    std::size_t diverged = 0;
    for (std::size_t s = 0; s < r.seeds.size(); ++s) diverged += r.run(c, s).metrics.diverged ? 1 : 0;
    out << r.seeds.size() << ',' << diverged;
    for (const auto& col : kMetricColumns) {
      std::vector<double> xs;
      for (std::size_t s = 0; s < r.seeds.size(); ++s) xs.push_back(r.run(c, s).metrics.*col.field);
      out << ',' << csv_number(median(xs)) << ',' << csv_number(sample_std(xs));
    }
    out << '\n';
  }
}

/// One row per (cell, seed) with every metric.
inline void write_runs_csv(std::ostream& out, const SweepResult& r) {
  for (auto a : r.axes) out << to_string(a) << ',';
  out << "seed,diverged,divergences,episodes,steps";
  for (const auto& col : kMetricColumns) out << ',' << col.name;
  out << ",error\n";
  for (const auto& run : r.runs) {
    for (const auto& label : run.labels) out << label << ',';
    out << run.seed << ',' << (run.metrics.diverged ? 1 : 0) << ',' << run.metrics.divergences << ','
        << run.metrics.episodes << ',' << run.metrics.steps;
    for (const auto& col : kMetricColumns) out << ',' << csv_number(run.metrics.*col.field);
    std::string err = run.error;
    std::replace(err.begin(), err.end(), ',', ';');
    out << ',' << err << '\n';
  }
}

/// Median over seeds of one metric for a cell.
inline double cell_median(const SweepResult& r, std::size_t cell, double SweepMetrics::* field) {
  std::vector<double> xs;
  for (std::size_t s = 0; s < r.seeds.size(); ++s) xs.push_back(r.run(cell, s).metrics.*field);
  return median(xs);
}

/// Index of the cell whose labels equal `labels`.
inline std::size_t find_cell(const SweepResult& r, const std::vector<std::string>& labels) {
  for (std::size_t c = 0; c < r.cells.size(); ++c)
    if (r.cells[c] == labels) return c;
  throw ConfigError("sweep has no such cell");
}

}  // namespace tdlab::harness
