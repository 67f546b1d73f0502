#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mra/recovery.hpp"
#include "test_support.hpp"

namespace mra {
namespace {

using testing::bundle_from_columns;
using testing::inequality_coupling;
using testing::random_matrix;
using testing::random_vector;

RecoveryConfig config(RecoveryObjective o, Selection s = Selection::convex, int samples = 16) {
  RecoveryConfig c;
  c.objective = o;
  c.selection = s;
  c.samples = samples;
  return c;
}

struct Toy {
  Coupling coupling;
  std::vector<ResponseBundle> bundles;
  Vector lambda;
};

Toy random_toy(std::mt19937_64& rng, int K, int N, int m, int n) {
  Toy t;
  std::vector<Matrix> blocks;
  for (int i = 0; i < K; ++i) {
    blocks.push_back(random_matrix(rng, m, n));
    t.bundles.push_back(bundle_from_columns(random_matrix(rng, n, N)));
  }
  t.coupling = inequality_coupling(std::move(blocks), random_vector(rng, m, -0.5, 0.5));
  t.lambda = random_vector(rng, m, 0.0, 1.0);
  return t;
}

// r_p over every one-hot selection, by odometer.
double enumerate_min_rp(const Toy& t) {
  const int K = static_cast<int>(t.bundles.size());
  std::vector<int> sel(K, 0);
  double best = INFINITY;
  while (true) {
    Vector v = -t.coupling.b();
    for (int i = 0; i < K; ++i) v += t.coupling.block(i) * t.bundles[i].Z.col(sel[i]);
    best = std::min(best, v.cwiseMax(0.0).sum());
    int i = 0;
    while (i < K && ++sel[i] == t.bundles[i].width()) sel[i++] = 0;
    if (i == K) break;
  }
  return best;
}

double objective_of(const Residuals& r, RecoveryObjective o) {
  return o == RecoveryObjective::rp_only ? r.rp : r.rp + r.rc;
}

TEST(RecoverConvex, InterpolationHitsBoundary) {
  Matrix z(1, 2);
  z << 0, 1;
  const std::vector<ResponseBundle> bundles = {bundle_from_columns(z)};
  const Coupling c = inequality_coupling({Matrix::Ones(1, 1)}, Vector::Constant(1, 0.5));
  const RecoveryResult r =
      recover_convex(bundles, c, Vector::Ones(1), config(RecoveryObjective::rp_plus_rc));
  EXPECT_NEAR(r.weights[0][0], 0.5, 1e-6);
  EXPECT_NEAR(r.weights[0][1], 0.5, 1e-6);
  EXPECT_NEAR(r.x_bar[0][0], 0.5, 1e-6);
  EXPECT_NEAR(r.residuals.rp, 0.0, 1e-6);
  EXPECT_NEAR(r.residuals.rc, 0.0, 1e-6);
  EXPECT_FALSE(r.fallback);
}

TEST(RecoverConvex, IdenticalColumns) {
  std::mt19937_64 rng(3);
  const Vector col = random_vector(rng, 3);
  Matrix z(3, 4);
  for (int j = 0; j < 4; ++j) z.col(j) = col;
  const std::vector<ResponseBundle> bundles = {bundle_from_columns(z)};
  const Coupling c = inequality_coupling({random_matrix(rng, 2, 3)}, random_vector(rng, 2));
  const Vector lambda = random_vector(rng, 2, 0.0, 1.0);
  for (auto o : {RecoveryObjective::rp_plus_rc, RecoveryObjective::rp_only}) {
    const RecoveryResult r = recover_convex(bundles, c, lambda, config(o));
    EXPECT_NEAR((r.x_bar[0] - col).norm(), 0.0, 1e-9);
    EXPECT_NEAR(r.lp_objective, objective_of(residuals(c, {col}, lambda), o), 1e-6);
  }
}

TEST(RecoverConvex, MatchesSimplexGridSearch) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Toy t = random_toy(rng, 2, 2, 2, 2);
    for (auto o : {RecoveryObjective::rp_plus_rc, RecoveryObjective::rp_only}) {
      const auto eval = [&](double ta, double tb) {
        const BlockPoint x = {t.bundles[0].Z * Vector{{1 - ta, ta}},
                              t.bundles[1].Z * Vector{{1 - tb, tb}}};
        return objective_of(residuals(t.coupling, x, t.lambda), o);
      };
      double grid = INFINITY, ga = 0, gb = 0;
      for (int a = 0; a <= 100; ++a) {
        for (int b = 0; b <= 100; ++b) {
          const double v = eval(a / 100.0, b / 100.0);
          if (v < grid) grid = v, ga = a / 100.0, gb = b / 100.0;
        }
      }
      // Finer grid around the coarse minimizer.
      double fine = grid;
      for (int a = -20; a <= 20; ++a) {
        for (int b = -20; b <= 20; ++b) {
          const double ta = std::clamp(ga + a * 5e-4, 0.0, 1.0);
          const double tb = std::clamp(gb + b * 5e-4, 0.0, 1.0);
          fine = std::min(fine, eval(ta, tb));
        }
      }
      const RecoveryResult r = recover_convex(t.bundles, t.coupling, t.lambda, config(o));
      EXPECT_LE(objective_of(r.residuals, o), grid + 1e-7);
      EXPECT_NEAR(objective_of(r.residuals, o), fine, 1e-3);
    }
  }
}

TEST(RecoverConvex, WeightsAreSimplexAndReproducePoint) {
  std::mt19937_64 rng(23);
  const Toy t = random_toy(rng, 4, 5, 3, 3);
  const RecoveryResult r =
      recover_convex(t.bundles, t.coupling, t.lambda, config(RecoveryObjective::rp_plus_rc));
  for (int i = 0; i < 4; ++i) {
    EXPECT_GE(r.weights[i].minCoeff(), 0.0);
    EXPECT_NEAR(r.weights[i].sum(), 1.0, 1e-12);
    EXPECT_NEAR((r.x_bar[i] - t.bundles[i].Z * r.weights[i]).norm(), 0.0, 1e-9);
  }
}

TEST(RecoverConvex, DominatesExactResponseAndRpOnlyRelaxes) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    const Toy t = random_toy(rng, 3, 4, 4, 2);
    BlockPoint raw;
    for (const auto& b : t.bundles) raw.push_back(b.Z.col(0));
    const Residuals r0 = residuals(t.coupling, raw, t.lambda);
    const RecoveryResult both =
        recover_convex(t.bundles, t.coupling, t.lambda, config(RecoveryObjective::rp_plus_rc));
    const RecoveryResult rp =
        recover_convex(t.bundles, t.coupling, t.lambda, config(RecoveryObjective::rp_only));
    EXPECT_LE(both.residuals.rp + both.residuals.rc, r0.rp + r0.rc);
    EXPECT_LE(rp.residuals.rp, r0.rp);
    EXPECT_LE(rp.residuals.rp, both.residuals.rp + 1e-7);
  }
}

TEST(RecoverConvex, RejectsNegativePrice) {
  const std::vector<ResponseBundle> bundles = {bundle_from_columns(Matrix::Zero(1, 2))};
  const Coupling c = inequality_coupling({Matrix::Ones(1, 1)}, Vector::Ones(1));
  EXPECT_THROW(recover_convex(bundles, c, -Vector::Ones(1), config(RecoveryObjective::rp_only)),
               std::invalid_argument);
}

TEST(RecoverMilpExact, PicksFeasibleColumn) {
  Matrix z(1, 2);
  z << 0, 1;
  const std::vector<ResponseBundle> bundles = {bundle_from_columns(z)};
  const Coupling c = inequality_coupling({Matrix::Ones(1, 1)}, Vector::Constant(1, 0.5));
  const RecoveryResult r = recover_milp_exact(bundles, c, Vector::Ones(1),
                                              config(RecoveryObjective::rp_only, Selection::integral_exact));
  EXPECT_EQ(r.weights[0][0], 1.0);
  EXPECT_EQ(r.residuals.rp, 0.0);
}

TEST(RecoverMilpExact, TiesGoToLowestIndex) {
  Matrix z(1, 3);
  z << 2, 2, 2;
  const std::vector<ResponseBundle> bundles = {bundle_from_columns(z), bundle_from_columns(z)};
  const Coupling c = inequality_coupling({Matrix::Ones(1, 1), Matrix::Ones(1, 1)}, Vector::Ones(1));
  const RecoveryResult r = recover_milp_exact(bundles, c, Vector::Zero(1),
                                              config(RecoveryObjective::rp_only, Selection::integral_exact));
  EXPECT_EQ(r.weights[0][0], 1.0);
  EXPECT_EQ(r.weights[1][0], 1.0);
  EXPECT_NEAR(r.residuals.rp, 3.0, 1e-12);
}

TEST(RecoverMilpExact, MatchesEnumeration) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = trial < 10 ? 2 : 4, N = trial < 10 ? 2 : 3;
    const Toy t = random_toy(rng, K, N, 3, 2);
    const RecoveryResult r = recover_milp_exact(
        t.bundles, t.coupling, t.lambda, config(RecoveryObjective::rp_only, Selection::integral_exact));
    EXPECT_NEAR(r.residuals.rp, enumerate_min_rp(t), 1e-7);
    for (const Vector& w : r.weights) {
      EXPECT_EQ(w.sum(), 1.0);
      EXPECT_EQ(w.maxCoeff(), 1.0);
    }
  }
}

TEST(RecoverMilpExact, RejectsTooManyBinaries) {
  std::mt19937_64 rng(2);
  const Toy t = random_toy(rng, 3, 9, 2, 2);
  EXPECT_THROW(recover_milp_exact(t.bundles, t.coupling, t.lambda,
                                  config(RecoveryObjective::rp_only, Selection::integral_exact)),
               std::invalid_argument);
}

TEST(RecoverMilpHeuristic, IntegralRelaxationIsKept) {
  Matrix z(1, 2);
  z << 0, 1;
  const std::vector<ResponseBundle> bundles = {bundle_from_columns(z)};
  const Coupling c = inequality_coupling({Matrix::Ones(1, 1)}, Vector::Zero(1));
  for (int samples : {1, 4, 16}) {
    const RecoveryResult r = recover_milp_heuristic(
        bundles, c, Vector::Ones(1),
        config(RecoveryObjective::rp_only, Selection::integral_heuristic, samples));
    EXPECT_EQ(r.weights[0][0], 1.0);
  }
}

TEST(RecoverMilpHeuristic, BoundedByExactAndMonotoneInSamples) {
  std::mt19937_64 rng(37);
  int equal = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Toy t = random_toy(rng, 3, 3, 3, 2);
    const RecoveryResult lp =
        recover_convex(t.bundles, t.coupling, t.lambda, config(RecoveryObjective::rp_only));
    const RecoveryResult exact = recover_milp_exact(
        t.bundles, t.coupling, t.lambda, config(RecoveryObjective::rp_only, Selection::integral_exact));
    const RecoveryResult h1 = recover_milp_heuristic(
        t.bundles, t.coupling, t.lambda,
        config(RecoveryObjective::rp_only, Selection::integral_heuristic, 1), trial);
    const RecoveryResult h16 = recover_milp_heuristic(
        t.bundles, t.coupling, t.lambda,
        config(RecoveryObjective::rp_only, Selection::integral_heuristic, 16), trial);
    EXPECT_LE(lp.residuals.rp, exact.residuals.rp + 1e-7);
    EXPECT_GE(h16.residuals.rp, exact.residuals.rp - 1e-9);
    EXPECT_LE(h16.residuals.rp, h1.residuals.rp);
    if (h16.residuals.rp <= exact.residuals.rp + 1e-9) ++equal;
  }
  EXPECT_GE(equal, 16);
}

TEST(GreedyRound, MovesToFeasibleColumn) {
  Matrix z(1, 2);
  z << 0, 1;
  const std::vector<ResponseBundle> bundles = {bundle_from_columns(z)};
  const Coupling c = inequality_coupling({Matrix::Ones(1, 1)}, Vector::Constant(1, 0.5));
  const std::vector<int> start = {1};
  EXPECT_DOUBLE_EQ(selection_rp(start, bundles, c), 0.5);
  const std::vector<int> out = greedy_round(start, bundles, c);
  EXPECT_EQ(out[0], 0);
  EXPECT_EQ(selection_rp(out, bundles, c), 0.0);
  EXPECT_EQ(greedy_round(out, bundles, c), out);
}

TEST(GreedyRound, ReachesLocalMinimum) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const Toy t = random_toy(rng, 4, 3, 3, 2);
    std::vector<int> start(4);
    for (int& s : start) s = std::uniform_int_distribution<int>(0, 2)(rng);
    const std::vector<int> out = greedy_round(start, t.bundles, t.coupling);
    const double rp = selection_rp(out, t.bundles, t.coupling);
    EXPECT_LE(rp, selection_rp(start, t.bundles, t.coupling));
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 3; ++j) {
        std::vector<int> dev = out;
        dev[i] = j;
        EXPECT_GE(selection_rp(dev, t.bundles, t.coupling), rp - 1e-9);
      }
    }
  }
}

}  // namespace
}  // namespace mra
