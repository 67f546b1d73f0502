#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mra/agent.hpp"
#include "mra/benchmarks.hpp"
#include "mra/parallel.hpp"
#include "test_support.hpp"

namespace mra {
namespace {

using testing::linear_simplex_agent;
using testing::random_vector;
using testing::zero_box_agent;

OracleConfig value_config(double eps, int n, std::uint64_t seed = 0) {
  OracleConfig c;
  c.kind = OracleKind::value_subopt;
  c.eps = eps;
  c.responses = n;
  c.seed = seed;
  return c;
}

OracleConfig price_config(double eps, int n, std::uint64_t seed = 0) {
  OracleConfig c = value_config(eps, n, seed);
  c.kind = OracleKind::price_perturbed;
  return c;
}

// -geomean(C x), evaluated directly.
double geomean_objective(const Matrix& C, const Vector& x) {
  const Vector u = C * x;
  double log_sum = 0.0;
  for (double v : u) log_sum += std::log(std::max(v, 0.0));
  return -std::exp(log_sum / static_cast<double>(u.size()));
}

TEST(ConjugateOracle, LinearSimplexAtZeroPrice) {
  Vector c(3);
  c << 3, 1, 2;
  const auto agent = linear_simplex_agent(0, c, 2.0);
  const OracleResponse r = conjugate_oracle(*agent, Vector::Zero(3));
  EXPECT_NEAR(r.x[0], 0.0, 1e-6);
  EXPECT_NEAR(r.x[1], 2.0, 1e-6);
  EXPECT_NEAR(r.x[2], 0.0, 1e-6);
  EXPECT_NEAR(r.lagrangian_value, 2.0, 1e-7);
}

TEST(ConjugateOracle, LinearSimplexShiftedPrice) {
  Vector c(3);
  c << 3, 1, 2;
  const auto agent = linear_simplex_agent(0, c, 2.0);
  const OracleResponse r = conjugate_oracle(*agent, Vector::Unit(3, 0) * 5.0);
  EXPECT_NEAR(r.x[0], 2.0, 1e-6);
  EXPECT_NEAR(r.lagrangian_value, -4.0, 1e-7);
  EXPECT_NEAR(r.lagrangian_value, r.f_value - 5.0 * r.x[0], 1e-9);
}

TEST(ConjugateOracle, GeomeanAgentBeatsRandomFeasiblePoints) {
  std::mt19937_64 rng(21);
  const int p = 3, m = 6;
  const Matrix C = testing::random_matrix(rng, p, m, 0.1, 1.0);
  const ResourceAgent agent(0, C);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector y = random_vector(rng, m, -0.5, 0.5);
    const OracleResponse r = conjugate_oracle(agent, y);
    EXPECT_NEAR(r.f_value, geomean_objective(C, r.x), 1e-6);
    for (int s = 0; s < 1000; ++s) {
      Vector z(m);
      for (int j = 0; j < m; ++j) z[j] = expo(rng);
      z *= unit(rng) / z.sum();
      EXPECT_LE(r.lagrangian_value, geomean_objective(C, z) - y.dot(z) + 1e-7);
    }
  }
}

TEST(ValueBundle, OneDimensionalClosedForm) {
  const auto agent = zero_box_agent(0, 1);
  const ResponseBundle b = value_suboptimal_bundle(*agent, Vector::Ones(1), value_config(0.1, 10), 1);
  ASSERT_EQ(b.width(), 10);
  EXPECT_EQ(b.dropped, 0);
  EXPECT_NEAR(b.Z(0, 0), 1.0, 1e-7);
  int low = 0, high = 0;
  for (int j = 1; j < b.width(); ++j) {
    const double z = b.Z(0, j);
    if (std::fabs(z - 0.9) < 1e-6) ++low;
    else if (std::fabs(z - 1.0) < 1e-6) ++high;
  }
  EXPECT_EQ(low + high, 9);
  EXPECT_GT(low, 0);
}

TEST(ValueBundle, ZeroRadiusKeepsExactValue) {
  Vector c(4);
  c << 1, 1, 2, 0.5;
  const auto agent = linear_simplex_agent(0, c, 1.0);
  Vector y(4);
  y << 0.5, 0.5, 0.0, 0.0;
  OracleConfig cfg = value_config(0.0, 6);
  const ResponseBundle b = value_suboptimal_bundle(*agent, y, cfg, 2);
  for (int j = 0; j < b.width(); ++j) EXPECT_NEAR(b.lagrangian_values[j], 0.5, 1e-6);
}

TEST(ValueBundle, ShipmentColumnsSatisfyBound) {
  std::mt19937_64 rng(4);
  const int m = 8;
  const Vector cost = random_vector(rng, m, 0.5, 3.0);
  const double mass = 0.3;
  const ShipmentAgent agent(0, cost, mass);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector y = random_vector(rng, m, -1.0, 1.0);
    const double exact = (cost - y).minCoeff() * mass;
    const ResponseBundle b = value_suboptimal_bundle(agent, y, value_config(0.1, 10, trial), 3);
    ASSERT_EQ(b.width(), 10);
    for (int j = 0; j < b.width(); ++j) {
      const Vector z = b.Z.col(j);
      EXPECT_GE(z.minCoeff(), -1e-7);
      EXPECT_NEAR(z.sum(), mass, 1e-7);
      EXPECT_LE(cost.dot(z) - y.dot(z), exact + 0.1 * std::fabs(exact) + 1e-6);
    }
    EXPECT_LE(b.lagrangian_values[0], exact + 1e-9);
    // Convex combinations keep the bound.
    std::exponential_distribution<double> expo(1.0);
    for (int s = 0; s < 20; ++s) {
      Vector theta(b.width());
      for (int j = 0; j < b.width(); ++j) theta[j] = expo(rng);
      theta /= theta.sum();
      const Vector z = b.Z * theta;
      EXPECT_LE(agent.value(z) - y.dot(z), exact + 0.1 * std::fabs(exact) + 1e-6);
    }
  }
}

TEST(ValueBundle, FloorKeepsRadiusWhenConjugateVanishes) {
  // f = 0 on [0, 1] at y = 0: f* = 0, so only the floor spreads the columns.
  const auto agent = zero_box_agent(0, 2);
  const ResponseBundle b = value_suboptimal_bundle(*agent, Vector::Zero(2), value_config(0.1, 5), 1);
  for (int j = 0; j < b.width(); ++j) {
    EXPECT_GE(b.Z.col(j).minCoeff(), -1e-7);
    EXPECT_LE(b.Z.col(j).maxCoeff(), 1.0 + 1e-7);
  }
  EXPECT_DOUBLE_EQ(value_subopt_bound(0.0, 0.1, 1e-8), 1e-9);
  EXPECT_DOUBLE_EQ(value_subopt_bound(-2.0, 0.1, 1e-8), -1.8);
}

TEST(PriceBundle, ZeroRadius) {
  std::mt19937_64 rng(8);
  const Vector cost = random_vector(rng, 5, 0.0, 1.0);
  const ShipmentAgent agent(0, cost, 1.0);
  const Vector y = random_vector(rng, 5);
  const ResponseBundle b = price_perturbed_bundle(agent, y, price_config(0.0, 6), 1);
  for (int j = 0; j < b.width(); ++j)
    EXPECT_NEAR(b.lagrangian_values[j], b.lagrangian_values[0], 1e-9);
}

TEST(PriceBundle, ZeroPrice) {
  Vector c(3);
  c << 2, 1, 3;
  const auto agent = linear_simplex_agent(0, c, 1.0);
  const ResponseBundle b = price_perturbed_bundle(*agent, Vector::Zero(3), price_config(0.5, 5), 1);
  for (int j = 0; j < b.width(); ++j) EXPECT_NEAR(b.lagrangian_values[j], 1.0, 1e-7);
}

TEST(PriceBundle, SignInvariantArgmin) {
  const auto agent = zero_box_agent(0, 1);
  const ResponseBundle b = price_perturbed_bundle(*agent, Vector::Ones(1), price_config(0.2, 8), 1);
  for (int j = 0; j < b.width(); ++j) EXPECT_NEAR(b.Z(0, j), 1.0, 1e-6);
}

TEST(PriceBundle, ExactColumnIsMinimal) {
  std::mt19937_64 rng(12);
  const ShipmentAgent agent(0, random_vector(rng, 6, 0.0, 2.0), 0.5);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector y = random_vector(rng, 6);
    const ResponseBundle b = price_perturbed_bundle(agent, y, price_config(0.3, 10, trial), trial);
    for (int j = 1; j < b.width(); ++j)
      EXPECT_LE(b.lagrangian_values[0], b.lagrangian_values[j] + 1e-7);
  }
}

TEST(ComposeBundle, SingleOracleMatchesDirectCall) {
  std::mt19937_64 rng(2);
  const ShipmentAgent agent(3, random_vector(rng, 5, 0.0, 2.0), 1.0);
  const Vector y = random_vector(rng, 5);
  const OracleConfig cfg = value_config(0.1, 10, 77);
  const ResponseBundle a = compose_bundle(agent, y, cfg, 4);
  const ResponseBundle b = value_suboptimal_bundle(agent, y, cfg, 4);
  EXPECT_EQ(a.Z, b.Z);
  EXPECT_EQ(a.lagrangian_values, b.lagrangian_values);
}

TEST(ComposeBundle, HistoryConcatenates) {
  std::mt19937_64 rng(6);
  const ShipmentAgent agent(0, random_vector(rng, 4, 0.0, 2.0), 1.0);
  OracleConfig cfg = value_config(0.1, 10, 1);
  cfg.history = 3;
  std::vector<ResponseBundle> history;
  history.push_back(compose_bundle(agent, random_vector(rng, 4), cfg, 1));
  history.push_back(compose_bundle(agent, random_vector(rng, 4), cfg, 2));
  const Vector y = random_vector(rng, 4);
  const ResponseBundle b = compose_bundle(agent, y, cfg, 3, history);
  ASSERT_EQ(b.width(), 30);
  for (int h = 0; h < 2; ++h) {
    for (int j = 0; j < 10; ++j) {
      const int col = 10 * (h + 1) + j;
      EXPECT_EQ(b.Z.col(col), history[h].Z.col(j));
      EXPECT_EQ(b.tags[col].iteration, h + 1);
      EXPECT_NEAR(b.lagrangian_values[col], b.f_values[col] - y.dot(b.Z.col(col)), 1e-12);
    }
  }
  history.push_back(history[0]);
  EXPECT_THROW(compose_bundle(agent, y, cfg, 4, history), std::invalid_argument);
}

TEST(ComposeBundle, MixingSplitsBudget) {
  std::mt19937_64 rng(10);
  const Vector cost = random_vector(rng, 6, 0.5, 2.0);
  const ShipmentAgent agent(0, cost, 1.0);
  OracleConfig cfg = value_config(0.1, 10, 5);
  cfg.mixing = {{0.1, 5}, {0.01, 5}};
  cfg.validate();
  const Vector y = random_vector(rng, 6);
  const double exact = (cost - y).minCoeff();
  const ResponseBundle b = compose_bundle(agent, y, cfg, 1);
  ASSERT_EQ(b.width(), 10);
  int within_tenth = 0, within_hundredth = 0;
  for (int j = 0; j < b.width(); ++j) {
    const double lag = cost.dot(b.Z.col(j)) - y.dot(b.Z.col(j));
    const double eps = b.tags[j].eps;
    EXPECT_LE(lag, exact + eps * std::fabs(exact) + 1e-6);
    if (j == 0) continue;
    if (eps == 0.1) ++within_tenth;
    if (eps == 0.01) ++within_hundredth;
  }
  EXPECT_EQ(b.tags[0].kind, OracleKind::exact);
  EXPECT_EQ(within_tenth + 1, 5);
  EXPECT_EQ(within_hundredth, 5);
}

TEST(OracleConfig, MixingMustCoverBudget) {
  OracleConfig cfg = value_config(0.1, 10);
  cfg.mixing = {{0.1, 5}, {0.01, 4}};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(ComposeBundle, DeterministicAcrossSchedules) {
  std::mt19937_64 rng(14);
  std::vector<ShipmentAgent> agents;
  std::vector<Vector> prices;
  for (int i = 0; i < 6; ++i) {
    agents.emplace_back(i, random_vector(rng, 5, 0.0, 2.0), 0.2);
    prices.push_back(random_vector(rng, 5));
  }
  const OracleConfig cfg = value_config(0.1, 8, 99);
  std::vector<ResponseBundle> forward(6), parallel(6);
  for (int i = 0; i < 6; ++i) forward[i] = compose_bundle(agents[i], prices[i], cfg, 7);
  parallel_for(6, 4, [&](int i) { parallel[5 - i] = compose_bundle(agents[5 - i], prices[5 - i], cfg, 7); });
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(forward[i].Z, parallel[i].Z);
    EXPECT_EQ(forward[i].lagrangian_values, parallel[i].lagrangian_values);
  }
  const ResponseBundle other = compose_bundle(agents[0], prices[0], cfg, 8);
  EXPECT_NE(other.Z, forward[0].Z);
}

}  // namespace
}  // namespace mra
