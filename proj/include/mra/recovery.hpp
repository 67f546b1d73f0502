#pragma once

// Primal recovery from response bundles: blend each agent's columns with
// simplex weights (an LP), or pick one column per agent (exact MILP, or LP
// relaxation + categorical sampling + greedy rounding).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mra/agent.hpp"
#include "mra/conic.hpp"
#include "mra/coupling.hpp"

namespace mra {

enum class RecoveryObjective { rp_plus_rc, rp_only };
enum class Selection { convex, integral_exact, integral_heuristic };

const char* to_string(RecoveryObjective o);
const char* to_string(Selection s);
RecoveryObjective recovery_objective_from_string(const std::string& s);
Selection selection_from_string(const std::string& s);

struct RecoveryConfig {
  RecoveryObjective objective = RecoveryObjective::rp_plus_rc;
  Selection selection = Selection::convex;
  int samples = 16;  // heuristic only
  std::uint64_t seed = 0;
  conic::Settings solver;
};

struct RecoveryResult {
  BlockPoint x_bar;
  std::vector<Vector> weights;  // u_i, simplex or one-hot
  Residuals residuals;          // at (x_bar, lambda)
  double lp_objective = 0.0;    // solver objective (r_p, or r_p + r_c)
  // The solver failed and x_bar is the exact-response point.
  bool fallback = false;
};

RecoveryResult recover_convex(std::span<const ResponseBundle> bundles, const Coupling& coupling,
                              const Vector& lambda, const RecoveryConfig& config);

// Minimizes r_p over one-hot selections by branch-and-bound. Throws
// std::invalid_argument when the total column count exceeds the solver's
// binary cap; use recover_milp_heuristic instead.
RecoveryResult recover_milp_exact(std::span<const ResponseBundle> bundles,
                                  const Coupling& coupling, const Vector& lambda,
                                  const RecoveryConfig& config);

RecoveryResult recover_milp_heuristic(std::span<const ResponseBundle> bundles,
                                      const Coupling& coupling, const Vector& lambda,
                                      const RecoveryConfig& config, int iteration = 0);

// Coordinate descent over per-agent column choices; moves only on a strict
// decrease of r_p and stops after a pass without moves.
std::vector<int> greedy_round(std::vector<int> selection, std::span<const ResponseBundle> bundles,
                              const Coupling& coupling);

// r_p of a one-hot selection.
double selection_rp(std::span<const int> selection, std::span<const ResponseBundle> bundles,
                    const Coupling& coupling);

RecoveryResult recover(std::span<const ResponseBundle> bundles, const Coupling& coupling,
                       const Vector& lambda, const RecoveryConfig& config, int iteration = 0);

}  // namespace mra
