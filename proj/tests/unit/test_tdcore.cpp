#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "tdlab/oracle/fixtures.hpp"
#include "tdlab/random.hpp"
#include "tdlab/tdcore/alignment.hpp"
#include "tdlab/tdcore/losses.hpp"

using namespace tdlab;
using namespace tdlab::tdcore;
using Catch::Approx;

namespace {

TdSample sample(double r, std::optional<double> v_s, std::optional<double> v_next, std::optional<double> q,
                std::optional<double> q_next = std::nullopt, double gamma = 0.9, bool done = false) {
  return TdSample{r, v_s, v_next, q, q_next, gamma, done};
}

TdSample random_sample(Rng& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> g(0.0, 1.0);
  return sample(u(rng), u(rng), u(rng), u(rng), u(rng), g(rng), g(rng) < 0.2);
}

// Central difference of f at x.
template <class F>
double numeric(F f, double x) {
  return (f(x + 1e-6) - f(x - 1e-6)) / 2e-6;
}

}  // namespace

TEST_CASE("vtd loss", "[tdcore]") {
  CHECK(vtd_loss(sample(0, 0.0, 0.0, std::nullopt)).loss == 0.0);
  const auto a = vtd_loss(sample(1.0, 2.5, 2.0, std::nullopt));
  CHECK(a.residual == Approx(0.3));
  CHECK(a.loss == Approx(0.09));
  const auto b = vtd_loss(sample(1.0, 2.5, 99.0, std::nullopt, std::nullopt, 0.9, true));
  CHECK(b.residual == Approx(-1.5));
  CHECK(b.loss == Approx(2.25));
  CHECK(b.grads.v_next == 0.0);
}

TEST_CASE("qtd loss", "[tdcore]") {
  CHECK(qtd_loss(sample(0, std::nullopt, std::nullopt, 0.0, 0.0)).loss == 0.0);
  const auto a = qtd_loss(sample(1.0, std::nullopt, std::nullopt, 2.0, 1.0));
  CHECK(a.residual == Approx(-0.1));
  CHECK(a.loss == Approx(0.01));
  CHECK(qtd_loss(sample(-0.2, std::nullopt, std::nullopt, -0.2, std::nullopt, 0.9, true)).loss == 0.0);
  CHECK_THROWS_AS(qtd_loss(sample(1.0, std::nullopt, std::nullopt, 2.0)), ConfigError);
}

TEST_CASE("action TD loss", "[tdcore]") {
  CHECK(action_td_loss(sample(1.0, std::nullopt, 2.0, 2.8)).loss == Approx(0.0).margin(1e-15));
  const auto a = action_td_loss(sample(-0.2, std::nullopt, 1.0, 0.0));
  CHECK(a.residual == Approx(0.7));
  CHECK(a.loss == Approx(0.49));
  CHECK(a.grads.q == Approx(-1.4));
  CHECK(a.grads.v_next == 0.0);
}

TEST_CASE("state TD losses", "[tdcore]") {
  CHECK(state_td_loss(sample(0, 0.7, std::nullopt, 0.7)).loss == 0.0);
  const auto a = state_td_loss(sample(0, 1.0, std::nullopt, 0.4));
  CHECK(a.residual == Approx(0.6));
  CHECK(a.loss == Approx(0.36));
  CHECK(a.grads.q == 0.0);
  CHECK(a.grads.v_s == Approx(1.2));

  const auto b = beta_state_td_loss(sample(0, 1.0, std::nullopt, 0.0), 2.0);
  CHECK(b.loss == Approx(2.0));
  CHECK(b.grads.v_s == Approx(4.0));
  CHECK(b.grads.q == 0.0);
  const auto one = beta_state_td_loss(sample(0, 1.0, std::nullopt, 0.4), 1.0);
  CHECK(one.loss == a.loss);
  CHECK(one.grads.v_s == a.grads.v_s);
  CHECK_THROWS_AS(beta_state_td_loss(sample(0, 1.0, std::nullopt, 0.4), 0.0), ConfigError);
  CHECK_THROWS_AS(beta_state_td_loss(sample(0, 1.0, std::nullopt, 0.4), -1.0), ConfigError);
}

TEST_CASE("beta weight", "[tdcore]") {
  CHECK(beta_weight(-1.3, -1.3) == 1.0);
  CHECK(beta_weight(std::log(2.0) - 4.0, -4.0, 0.1, 10.0) == Approx(2.0).epsilon(1e-12));
  CHECK(beta_weight(10.0, 0.0, 0.1, 10.0) == 10.0);
  CHECK(beta_weight(-10.0, 0.0, 0.1, 10.0) == 0.1);
  CHECK_THROWS_AS(beta_weight(std::nan(""), 0.0), DivergenceError);
  CHECK_THROWS_AS(beta_weight(0.0, 0.0, 2.0, 1.0), ConfigError);
}

TEST_CASE("advantage", "[tdcore]") {
  CHECK(advantage(sample(1.0, 2.5, 2.0, std::nullopt)) == Approx(0.3));
  CHECK(advantage(sample(1.0, 1.0 + 0.9 * 2.0, 2.0, std::nullopt)) == Approx(0.0).margin(1e-15));
  CHECK(advantage(sample(1.0, 2.5, 7.0, std::nullopt, std::nullopt, 0.9, true)) == Approx(-1.5));
}

TEST_CASE("policy losses", "[tdcore]") {
  const auto p = advantage_policy_loss(0.3, -1.0);
  CHECK(p.loss == Approx(0.3));
  CHECK(p.d_log_pi == Approx(-0.3));
  CHECK(advantage_policy_loss(0.0, -2.0).d_log_pi == 0.0);
  const auto q = q_max_policy_loss(1.7);
  CHECK(q.loss == -1.7);
  CHECK(q.d_log_pi == -1.0);
}

TEST_CASE("residuals", "[tdcore]") {
  CHECK(residuals(sample(1.0, 0.0, 2.0, 1.0 + 0.9 * 2.0)).delta_u == Approx(0.0).margin(1e-15));
  CHECK(residuals(sample(1.0, 0.4, 2.0, 0.4)).delta_pi == 0.0);
  const auto d = residuals(sample(1.0, 2.5, 2.0, 2.6));
  CHECK(d.delta_u == Approx(0.2));
  CHECK(d.delta_pi == Approx(0.1));
  CHECK(d.delta_u + d.delta_pi == Approx(vtd_loss(sample(1.0, 2.5, 2.0, std::nullopt)).residual));
}

TEST_CASE("non-finite inputs are rejected", "[tdcore]") {
  const double nan = std::nan("");
  CHECK_THROWS_AS(vtd_loss(sample(nan, 0.0, 0.0, std::nullopt)), DivergenceError);
  CHECK_THROWS_AS(action_td_loss(sample(0.0, std::nullopt, nan, 0.0)), DivergenceError);
  CHECK_THROWS_AS(state_td_loss(sample(0.0, 0.0, std::nullopt, nan)), DivergenceError);
  CHECK_THROWS_AS(advantage(sample(0.0, nan, 0.0, std::nullopt)), DivergenceError);
  CHECK_THROWS_AS(vtd_loss(sample(0.0, 0.0, 0.0, std::nullopt, std::nullopt, 1.5)), ConfigError);
}

TEST_CASE("random-sample properties", "[tdcore][property]") {
  Rng rng(314);
  for (int i = 0; i < 10000; ++i) {
    const auto s = random_sample(rng);
    const auto vtd = vtd_loss(s);
    const auto qtd = qtd_loss(s);
    const auto act = action_td_loss(s);
    const auto st = state_td_loss(s);
    const auto d = residuals(s);
    // vtd residual = delta_u + delta_pi
    CHECK(d.delta_u + d.delta_pi == Approx(vtd.residual).margin(1e-12));
    CHECK(d.delta_u == act.residual);
    CHECK(d.delta_pi == -st.residual);
    CHECK(vtd.advantage.value() == advantage(s));
    for (const auto* l : {&vtd, &qtd, &act, &st}) {
      CHECK(l->loss >= 0.0);
      CHECK((l->loss == 0.0) == (l->residual == 0.0));
    }
    // stop-gradient contracts
    CHECK(act.grads.v_next == 0.0);
    CHECK(act.grads.v_s == 0.0);
    CHECK(st.grads.q == 0.0);
    CHECK(st.grads.v_next == 0.0);
  }
}

TEST_CASE("loss gradients match finite differences", "[tdcore][grad]") {
  Rng rng(2718);
  for (int i = 0; i < 50; ++i) {
    auto s = random_sample(rng);
    s.done = false;
    const auto vtd = vtd_loss(s);
    CHECK(vtd.grads.v_s == Approx(numeric([&](double x) { auto t = s; t.v_s = x; return vtd_loss(t).loss; }, *s.v_s)).epsilon(1e-6).margin(1e-6));
    CHECK(vtd.grads.v_next == Approx(numeric([&](double x) { auto t = s; t.v_next = x; return vtd_loss(t).loss; }, *s.v_next)).epsilon(1e-6).margin(1e-6));
    const auto qtd = qtd_loss(s);
    CHECK(qtd.grads.q == Approx(numeric([&](double x) { auto t = s; t.q = x; return qtd_loss(t).loss; }, *s.q)).epsilon(1e-6).margin(1e-6));
    CHECK(qtd.grads.q_next == Approx(numeric([&](double x) { auto t = s; t.q_next = x; return qtd_loss(t).loss; }, *s.q_next)).epsilon(1e-6).margin(1e-6));
    const auto act = action_td_loss(s);
    CHECK(act.grads.q == Approx(numeric([&](double x) { auto t = s; t.q = x; return action_td_loss(t).loss; }, *s.q)).epsilon(1e-6).margin(1e-6));
    const double beta = 0.1 + 0.2 * i;
    const auto st = beta_state_td_loss(s, beta);
    CHECK(st.grads.v_s == Approx(numeric([&](double x) { auto t = s; t.v_s = x; return beta_state_td_loss(t, beta).loss; }, *s.v_s)).epsilon(1e-6).margin(1e-6));
  }
}

TEST_CASE("beta-weighted minimizer is the weighted mean", "[tdcore]") {
  Rng rng(55);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> w(0.1, 3.0);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> q{u(rng), u(rng), u(rng)};
    const std::vector<double> beta{w(rng), w(rng), w(rng)};
    double num = 0.0, den = 0.0;
    for (int k = 0; k < 3; ++k) {
      num += beta[k] * q[k];
      den += beta[k];
    }
    const double closed = num / den;
    // Gradient of the summed loss vanishes at the closed form and only there.
    auto grad = [&](double v) {
      double g = 0.0;
      for (int k = 0; k < 3; ++k) g += beta_state_td_loss(sample(0, v, std::nullopt, q[k]), beta[k]).grads.v_s;
      return g;
    };
    CHECK(grad(closed) == Approx(0.0).margin(1e-12));
    CHECK(grad(closed + 0.1) > 0.0);
    CHECK(grad(closed - 0.1) < 0.0);
  }
}

TEST_CASE("bound check", "[tdcore]") {
  const std::vector<DecompositionResiduals> one{{0.1, 0.2}};
  const auto b = bound_check(one);
  CHECK(b.delta1 == Approx(0.1));
  CHECK(b.delta2 == Approx(0.2));
  CHECK(b.vtd_bound_ok);
  const std::vector<DecompositionResiduals> zeros(5);
  const auto z = bound_check(zeros);
  CHECK(z.delta1 == 0.0);
  CHECK(z.delta2 == 0.0);
  CHECK(z.vtd_bound_ok);
  CHECK_THROWS_AS(bound_check(std::vector<DecompositionResiduals>{}), ConfigError);

  Rng rng(1000);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<DecompositionResiduals> many(1000);
  for (auto& r : many) r = {u(rng), u(rng)};
  const auto m = bound_check(many);
  CHECK(m.vtd_bound_ok);
  CHECK(m.violations == 0);
}

TEST_CASE("alignment classification", "[tdcore]") {
  // v_s = 0, q = 0.5, r + gamma v_next = 1
  CHECK(classify_alignment(sample(1.0, 0.0, 0.0, 0.5)) == AlignmentCase::a);
  // v_s = 0, target = 0.1, q = 0.5
  CHECK(classify_alignment(sample(0.1, 0.0, 0.0, 0.5)) == AlignmentCase::b);
  // q = 0, v_s = 0.5, q target = 1
  CHECK(classify_alignment(sample(1.0, 0.5, 0.0, 0.0, 0.0)) == AlignmentCase::c);
  CHECK(classify_alignment(sample(1.0, 2.0, 0.0, 0.0, 0.0)) == AlignmentCase::d);
  // ties count as aligned
  CHECK(classify_alignment(sample(1.0, 0.0, 0.0, 1.0)) == AlignmentCase::a);
}

TEST_CASE("alignment fixtures", "[tdcore][oracle]") {
  using oracle::make_alignment_fixture;
  for (const auto& s : make_alignment_fixture(AlignmentCase::a)) CHECK(classify_alignment(s) == AlignmentCase::a);
  for (const auto& s : make_alignment_fixture(AlignmentCase::c)) CHECK(classify_alignment(s) == AlignmentCase::c);
  for (const auto& s : make_alignment_fixture(AlignmentCase::d)) {
    CHECK(classify_alignment(s) == AlignmentCase::d);
    CHECK(qtd_loss(s).loss < 1e-24);
    CHECK(std::abs(residuals(s).delta_pi) > 0.1);
  }

  const auto b = make_alignment_fixture(AlignmentCase::b);
  REQUIRE(!b.empty());
  CHECK(*b[0].v_s == 1.0);
  CHECK(*b[0].q == 0.5);
  const auto d0 = residuals(b[0]);
  CHECK(vtd_loss(b[0]).residual == Approx(0.0).margin(1e-15));
  CHECK(d0.delta_u == Approx(0.5).epsilon(1e-12));
  CHECK(d0.delta_pi == Approx(-0.5).epsilon(1e-12));
  double vtd = 0.0, st = 0.0, act = 0.0;
  for (const auto& s : b) {
    CHECK(classify_alignment(s) == AlignmentCase::b);
    vtd += vtd_loss(s).loss;
    st += state_td_loss(s).loss;
    act += action_td_loss(s).loss;
  }
  const double n = static_cast<double>(b.size());
  CHECK(vtd / n < 1e-12);
  CHECK(st / n > 0.1);
  CHECK(act / n > 0.1);
}
