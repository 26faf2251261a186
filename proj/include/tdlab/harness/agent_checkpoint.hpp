#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "tdlab/agents/agent.hpp"
#include "tdlab/approx/checkpoint.hpp"
#include "tdlab/error.hpp"

// Agent checkpoint layout:
//   tdlab-agent 1
//   backbone <name>
//   td_mode <name>
//   network <name>      followed by one tdlab-mlp block, repeated per network

namespace tdlab::harness {

inline void save_agent(std::ostream& out, agents::Agent& agent) {
  out << "tdlab-agent " << approx::kCheckpointVersion << '\n'
      << "backbone " << agents::to_string(agent.config().backbone) << '\n'
      << "td_mode " << agents::to_string(agent.config().td_mode) << '\n';
  for (auto& [name, net] : agent.networks()) {
    out << "network " << name << '\n';
    approx::write_mlp(out, net->net);
  }
}

/// Replaces the agent's networks with the checkpointed ones. Backbone, td_mode
/// and every network name and shape must match.
inline void load_agent(std::istream& in, agents::Agent& agent) {
  std::string line, key, value;
  const auto expect = [&](const std::string& want) {
    if (!std::getline(in, line)) throw ConfigError("agent checkpoint: unexpected end of input");
    std::istringstream row(line);
    row >> key >> value;
    if (key != want) throw ConfigError("agent checkpoint: expected '" + want + "', found '" + key + "'");
    return value;
  };
  if (expect("tdlab-agent") != std::to_string(approx::kCheckpointVersion))
    throw ConfigError("agent checkpoint: unsupported version");
  if (expect("backbone") != agents::to_string(agent.config().backbone))
    throw ConfigError("agent checkpoint: backbone does not match the config");
  if (expect("td_mode") != agents::to_string(agent.config().td_mode))
    throw ConfigError("agent checkpoint: td_mode does not match the config");
  std::map<std::string, agents::TrainableNet*> nets;
  for (auto& [name, net] : agent.networks()) nets[name] = net;
  std::size_t loaded = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    row >> key >> value;
    if (key != "network") throw ConfigError("agent checkpoint: expected 'network', found '" + key + "'");
    const auto it = nets.find(value);
    if (it == nets.end()) throw ConfigError("agent checkpoint: unknown network '" + value + "'");
    it->second->replace(approx::read_mlp(in));
    ++loaded;
  }
  if (loaded != nets.size()) throw ConfigError("agent checkpoint: missing networks");
}

inline void save_agent_file(const std::filesystem::path& path, agents::Agent& agent) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  save_agent(out, agent);
}

inline void load_agent_file(const std::filesystem::path& path, agents::Agent& agent) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  load_agent(in, agent);
}

}  // namespace tdlab::harness
