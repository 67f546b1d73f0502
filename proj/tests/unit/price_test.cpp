#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mra/agent.hpp"
#include "mra/benchmarks.hpp"
#include "mra/price.hpp"
#include "test_support.hpp"

namespace mra {
namespace {

using testing::inequality_coupling;
using testing::random_matrix;
using testing::random_vector;

// Homogeneous barrier with the proximal term, written from the cut list.
double barrier_value(const std::vector<Cut>& cuts, double t, const Vector& lbar) {
  if (t <= 0.0) return INFINITY;
  double f = -std::log(t) + 0.5 * (t * t + lbar.squaredNorm());
  for (const Cut& c : cuts) {
    const double s = (t * c.d - c.c.dot(lbar)) / c.n;
    if (s <= 0.0) return INFINITY;
    f -= std::log(s);
  }
  return f;
}

template <typename F>
double ternary_min(F f, double lo, double hi, double* arg) {
  for (int it = 0; it < 200; ++it) {
    const double a = lo + (hi - lo) / 3.0, b = hi - (hi - lo) / 3.0;
    if (f(a) < f(b)) hi = b;
    else lo = a;
  }
  *arg = 0.5 * (lo + hi);
  return f(*arg);
}

TEST(PriceBox, Examples) {
  const PriceBox a = make_price_box(3.0, 3.0, 1);
  EXPECT_DOUBLE_EQ(a.lower[0], 1.0);
  EXPECT_DOUBLE_EQ(a.upper[0], 9.0);
  const PriceBox b = make_price_box(0.0, 2.0, 3);
  EXPECT_EQ(b.lower, Vector::Zero(3));
  EXPECT_THROW(make_price_box(-1.0, 2.0, 1), std::invalid_argument);
  EXPECT_THROW(make_price_box(2.0, 1.0, 1), std::invalid_argument);
}

TEST(PriceBox, CutsContainTheBox) {
  Vector lo(2), hi(2);
  lo << 0.3, 1.0;
  hi << 0.6, 2.0;
  const PriceBox box = make_price_box(lo, hi);
  const std::vector<Cut> cuts = box_cuts(box);
  ASSERT_EQ(cuts.size(), 4u);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < 200; ++s) {
    Vector l(2);
    for (int j = 0; j < 2; ++j) l[j] = box.lower[j] + u(rng) * (box.upper[j] - box.lower[j]);
    for (const Cut& c : cuts) EXPECT_LE(c.c.dot(l), c.d + 1e-12);
  }
  Vector outside = box.upper;
  outside[1] += 0.1;
  bool excluded = false;
  for (const Cut& c : cuts) excluded |= c.c.dot(outside) > c.d;
  EXPECT_TRUE(excluded);
}

TEST(GenerateCut, Examples) {
  const Coupling c = inequality_coupling({Matrix::Ones(1, 1)}, Vector::Ones(1));
  const auto cut = generate_cut(c, {Vector::Constant(1, 2.0)}, Vector::Constant(1, 0.3), 4);
  ASSERT_TRUE(cut.has_value());
  EXPECT_DOUBLE_EQ(cut->c[0], -1.0);
  EXPECT_DOUBLE_EQ(cut->d, -0.3);
  EXPECT_DOUBLE_EQ(cut->n, std::sqrt(1.09));
  EXPECT_EQ(cut->iteration, 4);
  EXPECT_FALSE(generate_cut(c, {Vector::Ones(1)}, Vector::Constant(1, 0.3), 5).has_value());
  EXPECT_THROW(make_cut(Vector::Zero(2), 0.0, 1), std::invalid_argument);
}

TEST(Subgradient, ClampedStep) {
  // lambda0 = (2, 1) with q = (1, 0) and alpha_1 = 1 lands on (1, 1).
  Subgradient sg(make_price_box(0.0, 1.0, 2), StepRule::one_over_k, Vector{{2.0, 1.0}});
  sg.step(0.0, Vector{{1.0, 0.0}});
  EXPECT_DOUBLE_EQ(sg.lambda()[0], 1.0);
  EXPECT_DOUBLE_EQ(sg.lambda()[1], 1.0);
  sg.step(0.0, Vector{{2.0, -1.0}});  // alpha_2 = 0.5
  EXPECT_DOUBLE_EQ(sg.lambda()[0], 0.0);
  EXPECT_DOUBLE_EQ(sg.lambda()[1], 1.5);
  EXPECT_FALSE(sg.stalled());
}

TEST(Subgradient, ZeroSubgradientStalls) {
  Subgradient sg(make_price_box(0.0, 1.0, 2), StepRule::one_over_sqrt_k, Vector{{1.0, 1.0}});
  sg.step(1.0, Vector::Zero(2));
  EXPECT_TRUE(sg.stalled());
  EXPECT_EQ(sg.lambda(), Vector::Ones(2));
}

TEST(Subgradient, StepRules) {
  EXPECT_DOUBLE_EQ(step_size(StepRule::tenth_over_sqrt_k, 4), 0.05);
  EXPECT_DOUBLE_EQ(step_size(StepRule::one_over_sqrt_k, 4), 0.5);
  EXPECT_DOUBLE_EQ(step_size(StepRule::one_over_k, 4), 0.25);
  EXPECT_DOUBLE_EQ(step_size(StepRule::ten_over_k, 4), 2.5);
  EXPECT_DOUBLE_EQ(step_size(StepRule::ten_over_k, 0), 10.0);
  for (StepRule r : kAllStepRules) EXPECT_EQ(step_rule_from_string(to_string(r)), r);
}

TEST(Subgradient, QuadraticDualConverges) {
  // g(l) = -(l - c)^2 / 2; q = l - c is a subgradient of -g.
  for (double c : {2.0, 7.0}) {
    const PriceBox box = make_price_box(0.0, 5.0 / 3.0, 1);  // [0, 5]
    Subgradient sg(box, StepRule::one_over_sqrt_k, Vector::Zero(1));
    double g_prev = -INFINITY;
    for (int k = 0; k < 10000; ++k) {
      const double l = sg.lambda()[0];
      sg.step(-0.5 * (l - c) * (l - c), Vector::Constant(1, l - c));
      EXPECT_TRUE(box.contains(sg.lambda()));
      EXPECT_GE(sg.g_best(), g_prev);
      g_prev = sg.g_best();
    }
    EXPECT_NEAR(sg.lambda()[0], std::min(c, 5.0), 1e-3);
  }
}

TEST(Subgradient, PatienceStops) {
  Subgradient sg(make_price_box(0.0, 1.0, 1), StepRule::one_over_k, Vector::Ones(1), 1e-9, 5);
  for (int k = 0; k < 5; ++k) sg.step(1.0, Vector::Constant(1, 1e-3));
  EXPECT_FALSE(sg.stalled());
  sg.step(1.0, Vector::Constant(1, 1e-3));
  EXPECT_TRUE(sg.stalled());
}

TEST(Subgradient, OracleResidualIsSupergradient) {
  std::mt19937_64 rng(5);
  const Vector c1 = random_vector(rng, 3), c2 = random_vector(rng, 4);
  const auto a1 = testing::linear_simplex_agent(0, c1, 1.0);
  const auto a2 = testing::linear_simplex_agent(1, c2, 2.0);
  const Coupling cp = inequality_coupling({random_matrix(rng, 2, 3), random_matrix(rng, 2, 4)},
                                          random_vector(rng, 2));
  const auto g_and_q = [&](const Vector& lambda, Vector* q) {
    const auto y = local_prices(cp, lambda);
    const OracleResponse r1 = conjugate_oracle(*a1, y[0]), r2 = conjugate_oracle(*a2, y[1]);
    const double f[] = {r1.f_value, r2.f_value};
    if (q) *q = cp.b() - cp.apply({r1.x, r2.x});
    return dual_value(cp, lambda, {r1.x, r2.x}, f);
  };
  for (int trial = 0; trial < 20; ++trial) {
    const Vector lambda = random_vector(rng, 2, 0.0, 3.0);
    Vector q;
    const double g = g_and_q(lambda, &q);
    for (int s = 0; s < 20; ++s) {
      const Vector other = random_vector(rng, 2, 0.0, 3.0);
      EXPECT_LE(g_and_q(other, nullptr), g + q.dot(lambda - other) + 1e-7);
    }
  }
}

TEST(Accpm, InitialCenterMatchesNestedSearch) {
  const PriceBox box = make_price_box(0.5, 2.0, 1);
  const Accpm accpm(box);
  EXPECT_TRUE(accpm.last_centering().converged);
  const std::vector<Cut> cuts = box_cuts(box);
  double t_star = 0, l_star = 0;
  ternary_min([&](double t) {
    double l;
    return ternary_min([&](double v) { return barrier_value(cuts, t, Vector::Constant(1, v)); },
                       t * box.lower[0], t * box.upper[0], &l);
  }, 1e-6, 10.0, &t_star);
  ternary_min([&](double v) { return barrier_value(cuts, t_star, Vector::Constant(1, v)); },
              t_star * box.lower[0], t_star * box.upper[0], &l_star);
  EXPECT_NEAR(accpm.center()[0], t_star, 1e-6);
  EXPECT_NEAR(accpm.center()[1], l_star, 1e-6);
}

TEST(Accpm, OneCutCenterMatchesNestedSearch) {
  const PriceBox box = make_price_box(0.5, 2.0, 1);
  Accpm accpm(box);
  const double l0 = accpm.query_price()[0];
  const Cut cut = make_cut(Vector::Constant(1, -1.0), -l0, 1);  // l >= l0
  accpm.add_cut(cut);
  EXPECT_EQ(accpm.cuts().size(), 3u);
  EXPECT_GT(accpm.min_slack(accpm.center()), 0.0);
  std::vector<Cut> cuts = box_cuts(box);
  cuts.push_back(cut);
  double t_star = 0, l_star = 0;
  const auto inner = [&](double t, double* l) {
    return ternary_min([&](double v) { return barrier_value(cuts, t, Vector::Constant(1, v)); },
                       t * l0, t * box.upper[0], l);
  };
  ternary_min([&](double t) { double l; return inner(t, &l); }, 1e-6, 10.0, &t_star);
  inner(t_star, &l_star);
  EXPECT_NEAR(accpm.center()[0], t_star, 1e-6);
  EXPECT_NEAR(accpm.center()[1], l_star, 1e-6);
  EXPECT_GT(accpm.query_price()[0], l0);
}

TEST(Accpm, CuttingPastConvergenceDoesNotThrow) {
  AccpmOptions opt;
  opt.stop_tol = 0.0;
  Accpm accpm(make_price_box(0.5, 2.0, 1), opt);
  const double target = 1.0 + 1.0 / 3.0;
  int k = 1;
  for (; k <= 2000 && !accpm.exhausted(); ++k) {
    const double l = accpm.query_price()[0];
    if (l == target) break;
    const double c = l < target ? -1.0 : 1.0;
    accpm.add_cut(make_cut(Vector::Constant(1, c), c * l, k));
    EXPECT_GT(accpm.min_slack(accpm.center()), 0.0);
  }
  EXPECT_NEAR(accpm.query_price()[0], target, 1e-6);
  EXPECT_EQ(accpm.history().size() + accpm.num_box_cuts(), accpm.cuts().size());
}

TEST(Accpm, RejectsDegenerateBox) {
  EXPECT_THROW(Accpm(PriceBox{Vector::Ones(2), Vector::Ones(2)}), std::invalid_argument);
}

// ACCPM with exact oracles on a small resource-allocation instance.
TEST(Accpm, ToyResourceInstance) {
  Instance inst = gen_resource_allocation(3, 4, 2, 2);
  const Reference ref = reference_solve(inst);
  const Coupling& cp = inst.coupling;
  const auto g_and_x = [&](const Vector& lambda, BlockPoint* x) {
    const auto y = local_prices(cp, lambda);
    std::vector<double> f;
    for (int i = 0; i < inst.num_agents(); ++i) {
      const OracleResponse r = conjugate_oracle(*inst.agents[i], y[i]);
      x->push_back(r.x);
      f.push_back(r.f_value);
    }
    return dual_value(cp, lambda, *x, f);
  };
  BlockPoint x_star_resp;
  const double g_star = g_and_x(ref.lambda_star, &x_star_resp);
  EXPECT_NEAR(g_star, ref.f_star, 1e-5 * (1.0 + std::fabs(ref.f_star)));

  Accpm accpm(make_price_box(ref.lambda_star.minCoeff(), ref.lambda_star.maxCoeff(), 2));
  double g_best = -INFINITY;
  int reached = -1;
  for (int k = 1; k <= 100; ++k) {
    const Vector lambda = accpm.query_price();
    BlockPoint x;
    const double g = g_and_x(lambda, &x);
    const double prev = g_best;
    g_best = std::max(g_best, g);
    EXPECT_GE(g_best, prev);
    if (reached < 0 && g_best >= g_star - 0.01 * std::fabs(g_star)) reached = k;
    const auto cut = generate_cut(cp, x, lambda, k);
    if (!cut) break;
    EXPECT_LE(std::fabs(cut->c.dot(lambda) - cut->d), 1e-9 * cut->n);
    EXPECT_LE(cut->c.dot(ref.lambda_star), cut->d + 1e-8);
    const bool done = accpm.add_cut(*cut);
    EXPECT_EQ(static_cast<int>(accpm.cuts().size()), accpm.num_box_cuts() + k);
    EXPECT_GT(accpm.center()[0], 0.0);
    EXPECT_GT(accpm.min_slack(accpm.center()), 0.0);
    if (done) break;
  }
  EXPECT_GT(reached, 0);
}

TEST(AveragedDual, SingleQuery) {
  Accpm accpm(make_price_box(0.5, 2.0, 2));
  const Vector l1 = accpm.query_price();
  accpm.add_cut(make_cut(Vector{{-1.0, 0.5}}, -l1[0] + 0.5 * l1[1], 1));
  const DualAverage avg = accpm.averaged_dual();
  ASSERT_EQ(avg.kept.size(), 1u);
  EXPECT_DOUBLE_EQ(avg.theta[0], 1.0);
  EXPECT_NEAR((avg.lambda - l1).norm(), 0.0, 1e-14);
}

TEST(AveragedDual, SymmetricQueriesGiveMean) {
  // Three queries whose cuts all have slack 1 and norm sqrt(2) at z.
  const Vector z{{1.0, 0.0}};
  std::vector<QueryRecord> history;
  const double prices[] = {0.5, 1.0, 2.5};
  for (double p : prices) {
    QueryRecord q;
    q.z = Vector{{2.0, 2.0 * p}};
    q.cut = make_cut(Vector::Constant(1, 1.0), std::sqrt(2.0), 1);
    history.push_back(q);
  }
  const DualAverage avg = averaged_dual(history, z);
  ASSERT_EQ(avg.theta.size(), 3u);
  for (double t : avg.theta) EXPECT_NEAR(t, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(avg.lambda[0], (0.5 + 1.0 + 2.5) / 3.0, 1e-14);
}

TEST(AveragedDual, DropsNonpositiveSlack) {
  std::vector<QueryRecord> history(2);
  history[0].z = Vector{{1.0, 1.0}};
  history[0].cut = make_cut(Vector::Constant(1, 1.0), 2.0, 1);
  history[1].z = Vector{{1.0, 3.0}};
  history[1].cut = make_cut(Vector::Constant(1, 1.0), 0.5, 2);
  const DualAverage avg = averaged_dual(history, Vector{{1.0, 1.0}});
  EXPECT_EQ(avg.kept, std::vector<int>{0});
  EXPECT_EQ(avg.dropped, std::vector<int>{1});
  EXPECT_DOUBLE_EQ(avg.lambda[0], 1.0);
}

TEST(AveragedDual, MatchesRecomputation) {
  std::mt19937_64 rng(13);
  Accpm accpm(make_price_box(0.2, 1.0, 3));
  const Matrix A = random_matrix(rng, 3, 3);
  const Vector b = random_vector(rng, 3);
  for (int k = 1; k <= 5; ++k) {
    const Vector lambda = accpm.query_price();
    const Vector x = A.transpose() * lambda - Vector::Constant(3, 0.5);  // any response
    accpm.add_cut(make_cut(b - A * x, (b - A * x).dot(lambda), k));
  }
  const DualAverage avg = accpm.averaged_dual();
  const Vector& z = accpm.center();
  const auto& hist = accpm.history();
  ASSERT_EQ(hist.size(), 5u);
  std::vector<double> pi;
  double P = 0.0;
  for (const QueryRecord& q : hist) {
    Vector qhat(4);
    qhat[0] = q.cut.d;
    qhat.tail(3) = -q.cut.c;
    const double slack = (qhat / qhat.norm()).dot(z);  // the query point itself has zero slack
    ASSERT_GT(slack, 0.0);
    pi.push_back(1.0 / slack / qhat.norm());
    P += pi.back();
  }
  Vector expected = Vector::Zero(3);
  double total = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double theta = pi[i] / P;
    EXPECT_NEAR(avg.theta[i], theta, 1e-12);
    total += avg.theta[i];
    expected += theta * hist[i].z.tail(3) / hist[i].z[0];
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR((avg.lambda - expected).norm(), 0.0, 1e-12);
}

}  // namespace
}  // namespace mra
