#pragma once

#include <memory>

#include "tdlab/agents/a2c.hpp"
#include "tdlab/agents/ddpg.hpp"
#include "tdlab/agents/dqn.hpp"

namespace tdlab::agents {

/// Builds the agent for config.backbone; network initialization draws from `seed`.
inline std::unique_ptr<Agent> make_agent(const AgentConfig& config, std::shared_ptr<const env::ItemEmbeddings> items,
                                         std::size_t slate_size, std::uint64_t seed) {
  Rng rng(derive_seed(seed, SeedStream::init));
  switch (config.backbone) {
    case Backbone::a2c: return std::make_unique<A2cAgent>(config, std::move(items), slate_size, rng);
    case Backbone::dqn: return std::make_unique<DqnAgent>(config, std::move(items), slate_size, rng);
    case Backbone::dueling_dqn: return std::make_unique<DuelingDqnAgent>(config, std::move(items), slate_size, rng);
    case Backbone::ddpg:
    case Backbone::hac_lite: return std::make_unique<ContinuousAgent>(config, std::move(items), slate_size, rng);
  }
  throw ConfigError("unknown backbone");
}

}  // namespace tdlab::agents
