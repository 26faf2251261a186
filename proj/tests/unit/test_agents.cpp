#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "tdlab/agents/factory.hpp"
#include "tdlab/agents/slate_policy.hpp"
#include "tdlab/agents/tabular.hpp"
#include "tdlab/oracle/tabular.hpp"
#include "tdlab/random.hpp"

using namespace tdlab;
using namespace tdlab::agents;
using Catch::Approx;

namespace {

std::shared_ptr<const env::ItemEmbeddings> make_items(std::size_t n, std::size_t dim, std::uint64_t seed = 3) {
  env::EnvConfig c;
  c.n_items = n;
  c.state_dim = dim;
  c.slate_size = 1;
  c.seed = seed;
  return std::make_shared<const env::ItemEmbeddings>(env::ItemEmbeddings::generate(c));
}

env::Observation random_obs(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  env::Observation o;
  o.values.resize(dim + 1);
  for (std::size_t d = 0; d < dim; ++d) o.values[d] = n(rng);
  o.values[dim] = 0.25;
  return o;
}

AgentConfig config_for(Backbone b, TdMode m, std::size_t dim) {
  AgentConfig c;
  c.backbone = b;
  c.td_mode = m;
  c.hyper_dim = dim;
  c.hidden = {16};
  return c;
}

void set_constant(approx::Mlp& net, double value) {
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    auto& p = net.layer(l);
    std::fill(p.weights.begin(), p.weights.end(), 0.0);
    std::fill(p.biases.begin(), p.biases.end(), 0.0);
  }
  std::fill(net.layer(net.num_layers() - 1).biases.begin(), net.layer(net.num_layers() - 1).biases.end(), value);
}

TrainableNet& network(Agent& agent, const std::string& name) {
  for (auto& [n, net] : agent.networks())
    if (n == name) return *net;
  FAIL("no network named " << name);
  throw std::logic_error("unreachable");
}

std::vector<buffer::Transition> rollout_batch(Agent& agent, std::size_t n, bool explore, Rng& rng) {
  const std::size_t dim = agent.items().dim();
  std::vector<buffer::Transition> out;
  std::uniform_real_distribution<double> reward(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    buffer::Transition t;
    t.obs = random_obs(dim, rng);
    t.action = agent.select_action(t.obs, explore, rng);
    t.reward = reward(rng);
    t.next_obs = random_obs(dim, rng);
    t.done = i % 5 == 4;
    t.episode_id = i / 5;
    t.step_index = i % 5;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<const buffer::Transition*> pointers(const std::vector<buffer::Transition>& batch) {
  std::vector<const buffer::Transition*> out;
  for (const auto& t : batch) out.push_back(&t);
  return out;
}

}  // namespace

TEST_CASE("top_k orders by score and breaks ties by lower index", "[agents][slate]") {
  const env::ItemEmbeddings items(3, 2, {1, 0, 0, 1, -1, 0});
  const std::vector<double> hyper{1.0, 0.0};
  CHECK(slate_from_hyper_action(hyper, items, 2).items == std::vector<std::size_t>{0, 1});

  const std::vector<double> tied{0.5, 1.0, 1.0, 0.5};
  CHECK(top_k(tied, 3) == std::vector<std::size_t>{1, 2, 0});
  CHECK(top_k(tied, 0).empty());
  CHECK_THROWS_AS(top_k(tied, 5), ConfigError);
}

TEST_CASE("Plackett-Luce slate probabilities sum to one", "[agents][slate]") {
  Rng rng(11);
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<double> scores(5);
  for (double& s : scores) s = n(rng);
  double total = 0.0;
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t b = 0; b < 5; ++b)
      for (std::size_t c = 0; c < 5; ++c) {
        if (a == b || a == c || b == c) continue;
        total += std::exp(plackett_luce_log_prob(scores, {{a, b, c}}));
      }
  CHECK(total == Approx(1.0).margin(1e-12));
}

TEST_CASE("Plackett-Luce gradient matches finite differences", "[agents][slate]") {
  Rng rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> scores(6);
  for (double& s : scores) s = n(rng);
  const env::SlateAction slate{{4, 1, 2}};
  std::vector<double> grad(scores.size());
  plackett_luce_log_prob(scores, slate, grad);
  const double h = 1e-6;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto up = scores, down = scores;
    up[i] += h;
    down[i] -= h;
    const double fd = (plackett_luce_log_prob(up, slate) - plackett_luce_log_prob(down, slate)) / (2 * h);
    CHECK(grad[i] == Approx(fd).margin(1e-8));
  }
  CHECK_THROWS_AS(plackett_luce_log_prob(scores, {{1, 1}}), ConfigError);
}

TEST_CASE("Gumbel top-k samples follow the Plackett-Luce model", "[agents][slate]") {
  const std::vector<double> scores{0.0, 1.0, -0.5, 0.3};
  Rng rng(17);
  const int n = 40000;
  std::vector<int> first(4, 0);
  for (int i = 0; i < n; ++i) ++first[gumbel_top_k(scores, 2, rng).items[0]];
  for (std::size_t i = 0; i < 4; ++i) {
    const double p = std::exp(plackett_luce_log_prob(scores, {{i}}));
    const double sd = std::sqrt(n * p * (1 - p));
    CHECK(std::abs(first[i] - n * p) < 4 * sd);
  }
}

TEST_CASE("Gaussian log-density integrates to one", "[agents][slate]") {
  const double sigma = 0.4, mean = 0.7;
  const int steps = 20000;
  const double lo = mean - 12 * sigma, hi = mean + 12 * sigma, dx = (hi - lo) / steps;
  double total = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double x = lo + i * dx;
    const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
    total += w * std::exp(gaussian_log_density(std::vector<double>{x}, std::vector<double>{mean}, sigma)) * dx;
  }
  CHECK(total == Approx(1.0).margin(1e-9));
  const std::vector<double> x{0.1, -0.2}, mu{0.0, 0.0};
  const double expect = -0.5 * 0.05 / 0.25 - 2 * std::log(0.5) - std::log(2 * std::numbers::pi);
  CHECK(gaussian_log_density(x, mu, 0.5) == Approx(expect).margin(1e-14));
  CHECK_THROWS_AS(gaussian_log_density(x, mu, 0.0), ConfigError);
  CHECK_THROWS_AS(gaussian_log_density(x, std::vector<double>{0.0}, 1.0), ShapeError);
}

TEST_CASE("epsilon-greedy likelihood is a normalized mixture", "[agents][slate]") {
  const env::SlateAction greedy{{2}};
  double total = 0.0;
  for (std::size_t i = 0; i < 4; ++i) total += std::exp(epsilon_greedy_log_prob(0.3, 4, {{i}}, greedy));
  CHECK(total == Approx(1.0).margin(1e-12));
  CHECK(std::exp(epsilon_greedy_log_prob(0.3, 4, greedy, greedy)) == Approx(0.7 + 0.3 / 4));
  CHECK(std::exp(epsilon_greedy_log_prob(0.3, 4, {{0}}, greedy)) == Approx(0.3 / 4));
  CHECK(uniform_slate_log_prob(5, 2) == Approx(-std::log(20.0)));
}

TEST_CASE("Emitted likelihoods sum to one on a tiny instance", "[agents][policy]") {
  const auto items = make_items(4, 1);
  Rng rng(2);
  const auto obs = random_obs(1, rng);

  SECTION("a2c") {
    auto agent = make_agent(config_for(Backbone::a2c, TdMode::original, 1), items, 1, 9);
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      PolicyOutput a;
      a.slate = {{i}};
      total += std::exp(*agent->current_log_likelihood(obs, a));
    }
    CHECK(total == Approx(1.0).margin(1e-6));
  }
  SECTION("dqn") {
    auto agent = make_agent(config_for(Backbone::dqn, TdMode::original, 1), items, 1, 9);
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      PolicyOutput a;
      a.slate = {{i}};
      total += std::exp(*agent->current_log_likelihood(obs, a));
    }
    CHECK(total == Approx(1.0).margin(1e-6));
  }
  SECTION("hac_lite over the hyper-action line") {
    auto cfg = config_for(Backbone::hac_lite, TdMode::original, 1);
    cfg.exploration.sigma = 0.3;
    auto agent = make_agent(cfg, items, 1, 9);
    const int steps = 20000;
    const double lo = -6.0, hi = 6.0, dx = (hi - lo) / steps;
    double total = 0.0;
    for (int i = 0; i <= steps; ++i) {
      PolicyOutput a;
      a.hyper_action = {lo + i * dx};
      const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
      total += w * std::exp(*agent->current_log_likelihood(obs, a)) * dx;
    }
    CHECK(total == Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("A2C exploration reports the Plackett-Luce likelihood", "[agents][a2c]") {
  const auto items = make_items(10, 4);
  auto agent = make_agent(config_for(Backbone::a2c, TdMode::original, 4), items, 3, 1);
  Rng rng(8);
  const auto obs = random_obs(4, rng);
  for (int i = 0; i < 20; ++i) {
    const auto out = agent->select_action(obs, true, rng);
    CHECK_FALSE(out.deterministic);
    CHECK(out.log_likelihood == Approx(*agent->current_log_likelihood(obs, out)).margin(1e-12));
    env::validate_slate(out.slate, 10, 3);
  }
  const auto greedy = agent->select_action(obs, false, rng);
  CHECK(greedy.deterministic);
  CHECK(greedy.slate == agent->select_action(obs, false, rng).slate);
}

TEST_CASE("DQN with epsilon 1 picks items uniformly", "[agents][dqn]") {
  auto cfg = config_for(Backbone::dqn, TdMode::original, 3);
  cfg.exploration.epsilon = 1.0;
  auto agent = make_agent(cfg, make_items(5, 3), 1, 4);
  Rng rng(21);
  const auto obs = random_obs(3, rng);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 10000; ++i) ++counts[agent->select_action(obs, true, rng).slate.items[0]];
  const double sd = std::sqrt(10000 * 0.2 * 0.8);
  for (int c : counts) CHECK(std::abs(c - 2000.0) <= 3 * sd);
}

TEST_CASE("Continuous exploration noise", "[agents][continuous]") {
  const auto items = make_items(20, 4);
  Rng rng(13);
  const auto obs = random_obs(4, rng);

  SECTION("sigma 0 emits the actor output exactly") {
    auto cfg = config_for(Backbone::ddpg, TdMode::original, 4);
    cfg.exploration.sigma = 0.0;
    ContinuousAgent agent(cfg, items, 3, rng);
    const auto out = agent.select_action(obs, true, rng);
    CHECK(out.hyper_action == agent.actor().act(obs.input()));
    CHECK(out.deterministic);
    CHECK_FALSE(agent.current_log_likelihood(obs, out).has_value());
    CHECK(agent.importance(obs, out).beta == 1.0);
  }
  SECTION("sigma 0.5 perturbs with mean square sigma^2 * dim") {
    auto cfg = config_for(Backbone::hac_lite, TdMode::decomposed, 4);
    cfg.exploration.sigma = 0.5;
    ContinuousAgent agent(cfg, items, 3, rng);
    const auto mean = agent.actor().act(obs.input());
    double msd = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const auto out = agent.select_action(obs, true, rng);
      double sq = 0.0;
      for (std::size_t d = 0; d < 4; ++d) sq += (out.hyper_action[d] - mean[d]) * (out.hyper_action[d] - mean[d]);
      msd += sq / n;
      if (i < 10) CHECK(out.log_likelihood == Approx(gaussian_log_density(out.hyper_action, mean, 0.5)));
    }
    CHECK(msd == Approx(0.25 * 4).epsilon(0.1));
  }
  SECTION("explore=false is deterministic") {
    auto cfg = config_for(Backbone::hac_lite, TdMode::decomposed, 4);
    ContinuousAgent agent(cfg, items, 3, rng);
    const auto out = agent.select_action(obs, false, rng);
    CHECK(out.deterministic);
    CHECK(out.hyper_action == agent.actor().act(obs.input()));
  }
}

TEST_CASE("Continuous agents reject mismatched dimensions", "[agents][continuous]") {
  const auto items = make_items(10, 4);
  auto cfg = config_for(Backbone::ddpg, TdMode::original, 3);
  Rng rng(1);
  CHECK_THROWS_AS(ContinuousAgent(cfg, items, 2, rng), ShapeError);
  cfg.hyper_dim = 4;
  ContinuousAgent agent(cfg, items, 2, rng);
  env::Observation bad{{0.1, 0.2}};
  CHECK_THROWS(agent.select_action(bad, true, rng));
}

TEST_CASE("Agent config validation", "[agents][config]") {
  AgentConfig c;
  c.backbone = Backbone::dueling_dqn;
  c.td_mode = TdMode::decomposed;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.td_mode = TdMode::original;
  CHECK_NOTHROW(c.validate());
  c.exploration.epsilon = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AgentConfig{};
  c.exploration.sigma = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AgentConfig{};
  c.beta_clip_lo = 2.0;
  c.beta_clip_hi = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AgentConfig{};
  c.lr_q = 0.3;
  c.lr_v = 0.001;
  CHECK_NOTHROW(c.validate());
  CHECK(parse_backbone("hac_lite") == Backbone::hac_lite);
  CHECK_THROWS_AS(parse_backbone("sqn"), ConfigError);
  CHECK(parse_td_mode("decomposed") == TdMode::decomposed);
}

TEST_CASE("Dueling composition", "[agents][dueling]") {
  CHECK(dueling_q(1.0, 0.5, 0.0) == 1.5);
  CHECK(dueling_q(0.7, 0.2, 0.2) == 0.7);

  Rng rng(4);
  const auto items = make_items(6, 3);
  DuelingDqnAgent agent(config_for(Backbone::dueling_dqn, TdMode::original, 3), items, 2, rng);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> adv(6);
  for (double& a : adv) a = n(rng);
  auto shifted = adv;
  for (double& a : shifted) a += 3.25;
  const std::vector<std::vector<std::size_t>> slates{{0, 1}, {2, 5}, {4, 3}};
  for (const auto& s : slates) CHECK(agent.slate_q(0.4, shifted, s) == Approx(agent.slate_q(0.4, adv, s)).margin(1e-12));
  CHECK(top_k(shifted, 2) == top_k(adv, 2));
  const std::vector<double> flat(6, 0.8);
  CHECK(agent.slate_q(0.4, flat, slates[1]) == Approx(0.4).margin(1e-15));
}

TEST_CASE("A2C policy loss and advantage", "[agents][a2c]") {
  const auto p = tdcore::advantage_policy_loss(0.3, -1.0);
  CHECK(p.loss == Approx(0.3));
  CHECK(p.d_log_pi == -0.3);

  const auto items = make_items(8, 3);
  Rng rng(6);

  SECTION("zero advantage gives zero policy gradient") {
    auto agent = make_agent(config_for(Backbone::a2c, TdMode::original, 3), items, 2, 2);
    set_constant(network(*agent, "v").net, 0.0);
    auto batch = rollout_batch(*agent, 8, true, rng);
    for (auto& t : batch) t.reward = 0.0;
    const auto actor_before = network(*agent, "actor").net;
    const auto report = agent->update(pointers(batch));
    CHECK(report.grad_norm_policy == 0.0);
    CHECK(report.mean_advantage == 0.0);
    CHECK(network(*agent, "actor").net == actor_before);
  }

  SECTION("decomposed advantage removes the user residual") {
    for (auto mode : {TdMode::original, TdMode::decomposed}) {
      auto cfg = config_for(Backbone::a2c, mode, 3);
      auto agent = make_agent(cfg, items, 2, 2);
      set_constant(network(*agent, "v").net, 1.0);
      if (mode == TdMode::decomposed) set_constant(network(*agent, "q").net, 0.9);
      auto batch = rollout_batch(*agent, 6, true, rng);
      for (auto& t : batch) {
        t.reward = 0.6;
        t.done = false;
      }
      const auto report = agent->update(pointers(batch));
      if (mode == TdMode::original) {
        CHECK(report.mean_advantage == Approx(0.5).margin(1e-12));
      } else {
        CHECK(report.mean_advantage == Approx(-0.1).margin(1e-12));
      }
    }
  }
}

TEST_CASE("DQN update at a fixed point does nothing", "[agents][dqn]") {
  const auto items = make_items(8, 3);
  auto agent = make_agent(config_for(Backbone::dqn, TdMode::original, 3), items, 2, 3);
  set_constant(network(*agent, "q").net, 1.2);
  Rng rng(3);
  auto batch = rollout_batch(*agent, 1, true, rng);
  batch[0].done = true;
  batch[0].reward = 1.2;
  const auto before = network(*agent, "q").net;
  const auto report = agent->update(pointers(batch));
  CHECK(report.critic_loss == 0.0);
  CHECK(report.grad_norm_q == 0.0);
  CHECK(network(*agent, "q").net == before);
}

TEST_CASE("With gamma 0 both DQN modes regress Q onto r", "[agents][dqn]") {
  const auto items = make_items(8, 3);
  auto make = [&](TdMode m) {
    auto cfg = config_for(Backbone::dqn, m, 3);
    cfg.gamma = 0.0;
    cfg.use_beta = false;
    return make_agent(cfg, items, 2, 5);
  };
  auto original = make(TdMode::original);
  auto decomposed = make(TdMode::decomposed);
  REQUIRE(network(*original, "q").net == network(*decomposed, "q").net);
  Rng rng(12);
  for (int round = 0; round < 5; ++round) {
    Rng copy = rng;
    const auto batch = rollout_batch(*original, 16, true, rng);
    const auto batch2 = rollout_batch(*decomposed, 16, true, copy);
    for (std::size_t i = 0; i < batch.size(); ++i) REQUIRE(batch[i].action.slate == batch2[i].action.slate);
    original->update(pointers(batch));
    decomposed->update(pointers(batch));
  }
  const auto& a = network(*original, "q").net;
  const auto& b = network(*decomposed, "q").net;
  for (std::size_t i = 0; i < a.parameter_count(); ++i) CHECK(a.parameter(i) == Approx(b.parameter(i)).margin(1e-14));
}

TEST_CASE("Decomposed updates respect the stop-gradient contract", "[agents][stopgrad]") {
  const auto items = make_items(10, 4);
  for (auto b : {Backbone::a2c, Backbone::dqn, Backbone::ddpg, Backbone::hac_lite}) {
    for (bool target : {false, true}) {
      auto cfg = config_for(b, TdMode::decomposed, 4);
      cfg.use_target_net = target;
      auto agent = make_agent(cfg, items, 3, 7);
      Rng rng(31);
      for (int round = 0; round < 3; ++round) {
        const auto batch = rollout_batch(*agent, 12, true, rng);
        const auto report = agent->update(pointers(batch));
        REQUIRE_FALSE(report.skipped);
        const auto& audit = agent->last_audit();
        INFO(to_string(b) << " target=" << target);
        REQUIRE(audit.recorded);
        CHECK(audit.v_from_action_td.all_zero());
        CHECK(audit.q_from_state_td.all_zero());
        CHECK_FALSE(audit.q_from_action_td.all_zero());
        CHECK_FALSE(audit.v_from_state_td.all_zero());
        CHECK(std::isfinite(report.action_td_loss));
        CHECK(std::isfinite(report.state_td_loss));
        CHECK(report.mean_beta >= cfg.beta_clip_lo);
        CHECK(report.mean_beta <= cfg.beta_clip_hi);
      }
    }
  }
}

TEST_CASE("Every backbone trains in both modes", "[agents]") {
  const auto items = make_items(10, 4);
  for (auto b : {Backbone::a2c, Backbone::dqn, Backbone::ddpg, Backbone::hac_lite, Backbone::dueling_dqn}) {
    for (auto m : {TdMode::original, TdMode::decomposed}) {
      if (b == Backbone::dueling_dqn && m == TdMode::decomposed) continue;
      INFO(to_string(b) << " " << to_string(m));
      auto agent = make_agent(config_for(b, m, 4), items, 3, 1);
      Rng rng(2);
      std::vector<approx::Mlp> before;
      for (auto& [name, net] : agent->networks()) before.push_back(net->net);
      const auto batch = rollout_batch(*agent, 16, true, rng);
      const auto report = agent->update(pointers(batch));
      CHECK_FALSE(report.skipped);
      std::size_t i = 0;
      for (auto& [name, net] : agent->networks()) {
        INFO(name);
        CHECK_FALSE(net->net == before[i++]);
      }
      if (m == TdMode::original) CHECK(std::isfinite(report.critic_loss));
      else CHECK(std::isfinite(report.action_td_loss));
      CHECK_THROWS_AS(agent->update({}), ConfigError);
    }
  }
}

TEST_CASE("HAC-lite with zero noise matches DDPG bit for bit", "[agents][continuous]") {
  const auto items = make_items(12, 4);
  for (auto m : {TdMode::original, TdMode::decomposed}) {
    auto ddpg_cfg = config_for(Backbone::ddpg, m, 4);
    ddpg_cfg.exploration.sigma = 0.0;
    auto hac_cfg = ddpg_cfg;
    hac_cfg.backbone = Backbone::hac_lite;
    auto ddpg = make_agent(ddpg_cfg, items, 3, 42);
    auto hac = make_agent(hac_cfg, items, 3, 42);
    Rng r1(9), r2(9);
    for (int round = 0; round < 5; ++round) {
      const auto b1 = rollout_batch(*ddpg, 16, true, r1);
      const auto b2 = rollout_batch(*hac, 16, true, r2);
      ddpg->update(pointers(b1));
      hac->update(pointers(b2));
    }
    const auto p1 = ddpg->parameters();
    const auto p2 = hac->parameters();
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(*p1[i].second == *p2[i].second);
  }
}

TEST_CASE("HAC-lite and DDPG differ only in the critic's action input", "[agents][continuous]") {
  const auto items = make_items(12, 4);
  auto ddpg_cfg = config_for(Backbone::ddpg, TdMode::original, 4);
  ddpg_cfg.exploration.sigma = 0.5;
  auto hac_cfg = ddpg_cfg;
  hac_cfg.backbone = Backbone::hac_lite;
  auto ddpg = make_agent(ddpg_cfg, items, 3, 42);
  auto hac = make_agent(hac_cfg, items, 3, 42);
  for (std::size_t i = 0; i < ddpg->parameters().size(); ++i)
    REQUIRE(*ddpg->parameters()[i].second == *hac->parameters()[i].second);
  Rng rng(9);
  const auto batch = rollout_batch(*hac, 16, true, rng);
  ddpg->update(pointers(batch));
  hac->update(pointers(batch));
  CHECK_FALSE(network(*ddpg, "q").net == network(*hac, "q").net);
}

TEST_CASE("Actor gradient step", "[agents][continuous]") {
  Rng rng(77);
  const std::vector<std::vector<double>> obs{{0.3, -0.2}, {-0.5, 0.1}, {0.9, 0.4}};
  auto make_actor = [&](double lr) {
    ContinuousActor actor;
    actor.bound = 3.0;
    actor.net = TrainableNet(approx::Mlp::glorot({2, 8, 1}, approx::Activation::tanh, rng), approx::UpdateRule::adam, lr,
                             false);
    return actor;
  };

  SECTION("quadratic critic drives the action to its maximum") {
    const auto critic = [](std::span<const double>, std::span<const double> a, std::span<double> dq) {
      dq[0] = -2.0 * (a[0] - 2.0);
      return -(a[0] - 2.0) * (a[0] - 2.0);
    };
    for (double lr : {0.01, 0.03, 0.1}) {
      auto actor = make_actor(lr);
      for (int i = 0; i < 500; ++i) actor_gradient_step(actor, obs, critic, 0.005);
      for (const auto& o : obs) CHECK(actor.act(o)[0] == Approx(2.0).margin(0.01));
    }
  }
  SECTION("stationary point gives a vanishing gradient") {
    auto actor = make_actor(0.01);
    const double a0 = actor.act(obs[0])[0];
    const auto critic = [a0](std::span<const double>, std::span<const double> a, std::span<double> dq) {
      dq[0] = -2.0 * (a[0] - a0);
      return -(a[0] - a0) * (a[0] - a0);
    };
    const auto step = actor_gradient_step(actor, std::span(obs).first(1), critic, 0.005);
    CHECK(step.grad_norm < 1e-8);
  }
  SECTION("constant critic leaves the actor unchanged") {
    auto actor = make_actor(0.01);
    const auto before = actor.net.net;
    const auto critic = [](std::span<const double>, std::span<const double>, std::span<double> dq) {
      std::fill(dq.begin(), dq.end(), 0.0);
      return 4.0;
    };
    const auto step = actor_gradient_step(actor, obs, critic, 0.005);
    CHECK(step.grad_norm == 0.0);
    CHECK(step.policy_loss == -4.0);
    CHECK(actor.net.net == before);
  }
  SECTION("non-finite critic output is a divergence") {
    auto actor = make_actor(0.01);
    const auto critic = [](std::span<const double>, std::span<const double>, std::span<double> dq) {
      dq[0] = std::nan("");
      return 0.0;
    };
    CHECK_THROWS_AS(actor_gradient_step(actor, obs, critic, 0.005), DivergenceError);
  }
}

TEST_CASE("Critic input gradient matches finite differences", "[agents][continuous]") {
  const auto items = make_items(10, 3);
  Rng rng(15);
  ContinuousAgent agent(config_for(Backbone::ddpg, TdMode::original, 3), items, 2, rng);
  const auto obs = random_obs(3, rng);
  const std::vector<double> a{0.4, -0.3, 1.1};
  std::vector<double> dq(3);
  const auto critic = agent.critic_gradient();
  const double q = critic(obs.input(), a, dq);
  CHECK(q == Approx(agent.critic().forward_scalar(concat(obs.input(), a))));
  const double h = 1e-6;
  for (std::size_t d = 0; d < 3; ++d) {
    auto up = a, down = a;
    up[d] += h;
    down[d] -= h;
    const double fd = (agent.critic().forward_scalar(concat(obs.input(), up)) -
                       agent.critic().forward_scalar(concat(obs.input(), down))) /
                      (2 * h);
    CHECK(dq[d] == Approx(fd).margin(1e-7));
  }
}

TEST_CASE("Divergent batches are skipped and counted", "[agents]") {
  const auto items = make_items(10, 3);
  for (auto b : {Backbone::a2c, Backbone::dqn, Backbone::hac_lite, Backbone::dueling_dqn}) {
    auto agent = make_agent(config_for(b, TdMode::original, 3), items, 2, 1);
    Rng rng(4);
    auto batch = rollout_batch(*agent, 4, true, rng);
    batch[1].reward = std::numeric_limits<double>::infinity();
    std::vector<approx::Mlp> before;
    for (auto& [name, net] : agent->networks()) before.push_back(net->net);
    const auto report = agent->update(pointers(batch));
    INFO(to_string(b));
    CHECK(report.skipped);
    CHECK(agent->divergence_count() == 1);
    std::size_t i = 0;
    for (auto& [name, net] : agent->networks()) CHECK(net->net == before[i++]);
  }
}

TEST_CASE("Tabular decomposed TD recovers the oracle values", "[agents][tabular]") {
  oracle::TabularMdp m;
  m.n_states = 3;
  m.n_actions = 2;
  m.gamma = 0.9;
  m.transition = {{{0.1, 0.6, 0.3}, {0.5, 0.2, 0.3}}, {{0.3, 0.3, 0.4}, {0.0, 0.8, 0.2}}, {{0, 0, 1}, {0, 0, 1}}};
  m.reward = {{1.0, 0.2}, {-0.5, 0.8}, {0.0, 0.0}};
  m.terminal = {false, false, true};
  const oracle::StochasticPolicy pi{{{0.7, 0.3}, {0.4, 0.6}, {0.5, 0.5}}};
  const auto truth = oracle::policy_evaluation(m, pi);

  TabularLearnerConfig cfg;
  cfg.lr = 0.03;

  SECTION("on-policy") {
    TabularTdLearner learner(m, pi, pi, cfg);
    Rng rng(1);
    learner.train(200000, rng);
    CHECK(sup_distance(learner.q_table(), truth.q_star) < 0.05);
    CHECK(sup_distance(learner.v_table(), truth.v_star) < 0.05);
    CHECK(learner.updates() == 200000);
  }
  SECTION("off-policy with beta correction") {
    TabularTdLearner learner(m, pi, oracle::StochasticPolicy::uniform(3, 2), cfg);
    CHECK(learner.beta(0, 0) == Approx(1.4));
    CHECK(learner.beta(1, 0) == Approx(0.8));
    Rng rng(2);
    learner.train(200000, rng);
    CHECK(sup_distance(learner.q_table(), truth.q_star) < 0.05);
    CHECK(sup_distance(learner.v_table(), truth.v_star) < 0.05);
  }
  SECTION("full-gradient rules are biased by stochastic transitions") {
    TabularTdLearner decomposed(m, pi, pi, cfg);
    Rng rng(3);
    decomposed.train(200000, rng);
    for (auto rule : {TabularRule::vtd, TabularRule::qtd}) {
      auto c = cfg;
      c.rule = rule;
      TabularTdLearner learner(m, pi, pi, c);
      Rng r(3);
      learner.train(200000, r);
      INFO(to_string(rule));
      if (rule == TabularRule::vtd) {
        CHECK(sup_distance(learner.v_table(), truth.v_star) > sup_distance(decomposed.v_table(), truth.v_star));
      } else {
        CHECK(sup_distance(learner.q_table(), truth.q_star) > sup_distance(decomposed.q_table(), truth.q_star));
      }
    }
  }
}

TEST_CASE("Full-gradient tabular rules converge on deterministic dynamics", "[agents][tabular]") {
  oracle::TabularMdp m;
  m.n_states = 3;
  m.n_actions = 2;
  m.gamma = 0.9;
  m.transition = {{{0, 1, 0}, {0, 0, 1}}, {{1, 0, 0}, {0, 0, 1}}, {{0, 0, 1}, {0, 0, 1}}};
  m.reward = {{0.5, 1.0}, {0.3, -0.4}, {0.0, 0.0}};
  m.terminal = {false, false, true};
  const oracle::StochasticPolicy pi{{{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}}};
  const auto truth = oracle::policy_evaluation(m, pi);
  for (auto rule : {TabularRule::vtd, TabularRule::qtd, TabularRule::decomposed}) {
    TabularLearnerConfig cfg;
    cfg.rule = rule;
    TabularTdLearner learner(m, pi, pi, cfg);
    Rng rng(4);
    learner.train(50000, rng);
    INFO(to_string(rule));
    if (rule != TabularRule::qtd) CHECK(sup_distance(learner.v_table(), truth.v_star) < 1e-3);
    if (rule != TabularRule::vtd) {
      CHECK(learner.q(0, 0) == Approx(truth.q_star[0][0]).margin(1e-3));
      CHECK(learner.q(1, 1) == Approx(truth.q_star[1][1]).margin(1e-3));
    }
  }
}

TEST_CASE("Tabular learning rate decays harmonically", "[agents][tabular]") {
  TabularLearnerConfig cfg;
  cfg.lr = 0.2;
  cfg.lr_half_life = 100.0;
  CHECK(cfg.lr_at(0) == 0.2);
  CHECK(cfg.lr_at(100) == Approx(0.1));
  CHECK(cfg.lr_at(300) == Approx(0.05));
}
