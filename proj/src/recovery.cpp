#include "mra/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mra/rng.hpp"

namespace mra {

namespace {

void check_bundles(std::span<const ResponseBundle> bundles, const Coupling& coupling) {
  if (static_cast<int>(bundles.size()) != coupling.num_blocks()) {
    throw std::invalid_argument("recovery: " + std::to_string(bundles.size()) +
                                " bundles for " + std::to_string(coupling.num_blocks()) +
                                " agents");
  }
  for (int i = 0; i < coupling.num_blocks(); ++i) {
    if (bundles[i].Z.rows() != coupling.block_dim(i) || bundles[i].width() < 1) {
      throw std::invalid_argument("recovery: bundle " + std::to_string(i) +
                                  " does not match the coupling block");
    }
  }
}

// A_i Z_i for every agent.
std::vector<Matrix> column_images(std::span<const ResponseBundle> bundles,
                                  const Coupling& coupling) {
  std::vector<Matrix> m(bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) m[i] = coupling.block(i) * bundles[i].Z;
  return m;
}

double rp_of(const Vector& v) { return v.cwiseMax(0.0).sum(); }

RecoveryResult from_weights(std::span<const ResponseBundle> bundles, const Coupling& coupling,
                            const Vector& lambda, std::vector<Vector> weights) {
  RecoveryResult r;
  r.x_bar.resize(bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) r.x_bar[i] = bundles[i].Z * weights[i];
  r.weights = std::move(weights);
  r.residuals = residuals(coupling, r.x_bar, lambda);
  return r;
}

std::vector<Vector> one_hot(std::span<const ResponseBundle> bundles,
                            std::span<const int> selection) {
  std::vector<Vector> w(bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    w[i] = Vector::Zero(bundles[i].width());
    w[i][selection[i]] = 1.0;
  }
  return w;
}

double score(const Residuals& r, RecoveryObjective o) {
  return o == RecoveryObjective::rp_only ? r.rp : r.rp + r.rc;
}

// Shared LP/MILP model: u_i on the simplex, s >= M u - b, s >= 0 and, when
// `with_rc`, w >= |M u - b| on rows with positive price.
struct RecoveryModel {
  conic::Program program;
  std::vector<int> u_start;
};

RecoveryModel build_model(const std::vector<Matrix>& images, std::span<const ResponseBundle> bundles,
                          const Coupling& coupling, const Vector& lambda, bool with_rc,
                          bool binary) {
  RecoveryModel model;
  conic::Program& p = model.program;
  const int m = coupling.rows();
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const int start = p.add_variables(bundles[i].width());
    model.u_start.push_back(start);
    conic::Affine simplex(-1.0);
    for (int j = 0; j < bundles[i].width(); ++j) {
      simplex.add(start + j, 1.0);
      if (binary) {
        p.set_binary(start + j);
      } else {
        p.add_nonneg(conic::Affine::variable(start + j));
      }
    }
    p.add_equality(simplex);
  }
  const int s0 = p.add_variables(m);
  conic::Affine objective;
  for (int r = 0; r < m; ++r) {
    conic::Affine v(-coupling.b()[r]);
    for (std::size_t i = 0; i < bundles.size(); ++i) {
      for (int j = 0; j < bundles[i].width(); ++j) {
        const double a = images[i](r, j);
        if (a != 0.0) v.add(model.u_start[i] + j, a);
      }
    }
    p.add_nonneg(conic::Affine::variable(s0 + r));
    p.add_nonneg(conic::Affine::variable(s0 + r) - v);
    objective.add(s0 + r, 1.0);
    if (with_rc && lambda[r] > 0.0) {
      const int w = p.add_variable();
      p.add_nonneg(conic::Affine::variable(w) - v);
      p.add_nonneg(conic::Affine::variable(w) + v);
      objective.add(w, lambda[r]);
    }
  }
  p.minimize(objective);
  return model;
}

std::vector<Vector> extract_weights(const RecoveryModel& model,
                                    std::span<const ResponseBundle> bundles,
                                    const std::vector<double>& point) {
  std::vector<Vector> w(bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    Vector u(bundles[i].width());
    for (int j = 0; j < u.size(); ++j) u[j] = std::max(point[model.u_start[i] + j], 0.0);
    const double total = u.sum();
    if (total > 0.0) {
      u /= total;
    } else {
      u.setZero();
      u[0] = 1.0;
    }
    w[i] = u;
  }
  return w;
}

std::vector<int> exact_selection(std::span<const ResponseBundle> bundles) {
  return std::vector<int>(bundles.size(), 0);
}

}  // namespace

const char* to_string(RecoveryObjective o) {
  return o == RecoveryObjective::rp_only ? "rp_only" : "rp_plus_rc";
}

const char* to_string(Selection s) {
  switch (s) {
    case Selection::convex: return "convex";
    case Selection::integral_exact: return "integral-exact";
    case Selection::integral_heuristic: return "integral-heuristic";
  }
  return "?";
}

RecoveryObjective recovery_objective_from_string(const std::string& s) {
  if (s == "rp_plus_rc") return RecoveryObjective::rp_plus_rc;
  if (s == "rp_only") return RecoveryObjective::rp_only;
  throw std::invalid_argument("unknown recovery objective '" + s + "'");
}

Selection selection_from_string(const std::string& s) {
  if (s == "convex") return Selection::convex;
  if (s == "integral-exact") return Selection::integral_exact;
  if (s == "integral-heuristic") return Selection::integral_heuristic;
  throw std::invalid_argument("unknown selection mode '" + s + "'");
}

RecoveryResult recover_convex(std::span<const ResponseBundle> bundles, const Coupling& coupling,
                              const Vector& lambda, const RecoveryConfig& config) {
  check_bundles(bundles, coupling);
  if ((lambda.array() < 0.0).any()) throw std::invalid_argument("recovery: lambda must be >= 0");
  const bool with_rc = config.objective == RecoveryObjective::rp_plus_rc;
  const std::vector<Matrix> images = column_images(bundles, coupling);
  const RecoveryModel model = build_model(images, bundles, coupling, lambda, with_rc, false);
  const conic::SolveOutcome out = conic::solve(model.program, config.solver);

  RecoveryResult exact = from_weights(bundles, coupling, lambda, one_hot(bundles, exact_selection(bundles)));
  exact.lp_objective = score(exact.residuals, config.objective);
  if (!out.ok()) {
    exact.fallback = true;
    return exact;
  }
  RecoveryResult r = from_weights(bundles, coupling, lambda, extract_weights(model, bundles, out.point));
  r.lp_objective = out.objective_value;
  // u_i = e_1 is feasible for the LP, so the blend is never worse than the
  // exact-response point; solver round-off can only break that by ~tol.
  if (score(r.residuals, config.objective) > score(exact.residuals, config.objective)) {
    exact.lp_objective = out.objective_value;
    return exact;
  }
  return r;
}

double selection_rp(std::span<const int> selection, std::span<const ResponseBundle> bundles,
                    const Coupling& coupling) {
  Vector v = -coupling.b();
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    v.noalias() += coupling.block(i) * bundles[i].Z.col(selection[i]);
  }
  return rp_of(v);
}

std::vector<int> greedy_round(std::vector<int> selection, std::span<const ResponseBundle> bundles,
                              const Coupling& coupling) {
  check_bundles(bundles, coupling);
  if (selection.size() != bundles.size()) {
    throw std::invalid_argument("greedy_round: selection size mismatch");
  }
  const std::vector<Matrix> images = column_images(bundles, coupling);
  Vector v = -coupling.b();
  for (std::size_t i = 0; i < bundles.size(); ++i) v += images[i].col(selection[i]);
  double current = rp_of(v);
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
      const Vector base = v - images[i].col(selection[i]);
      int best = selection[i];
      double best_rp = current;
      for (int j = 0; j < bundles[i].width(); ++j) {
        if (j == selection[i]) continue;
        const double rp = rp_of(base + images[i].col(j));
        if (rp < best_rp - 1e-12 * (1.0 + best_rp)) {
          best_rp = rp;
          best = j;
        }
      }
      if (best != selection[i]) {
        selection[i] = best;
        v = base + images[i].col(best);
        current = rp_of(v);
        moved = true;
      }
    }
  }
  return selection;
}

RecoveryResult recover_milp_exact(std::span<const ResponseBundle> bundles,
                                  const Coupling& coupling, const Vector& lambda,
                                  const RecoveryConfig& config) {
  check_bundles(bundles, coupling);
  int total = 0;
  for (const ResponseBundle& b : bundles) total += b.width();
  if (total > config.solver.max_binaries) {
    throw std::invalid_argument("recover_milp_exact: " + std::to_string(total) +
                                " binaries exceed the cap of " +
                                std::to_string(config.solver.max_binaries) +
                                "; use the integral-heuristic selection");
  }
  const std::vector<Matrix> images = column_images(bundles, coupling);
  const RecoveryModel model = build_model(images, bundles, coupling, lambda, false, true);
  const conic::SolveOutcome out = conic::solve(model.program, config.solver);
  if (!out.ok()) {
    RecoveryResult r = from_weights(bundles, coupling, lambda, one_hot(bundles, exact_selection(bundles)));
    r.lp_objective = r.residuals.rp;
    r.fallback = true;
    return r;
  }
  std::vector<int> selection(bundles.size(), 0);
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    int best = 0;
    for (int j = 1; j < bundles[i].width(); ++j) {
      if (out.point[model.u_start[i] + j] > out.point[model.u_start[i] + best]) best = j;
    }
    selection[i] = best;
  }
  // Ties go to the lowest column index.
  const double optimum = selection_rp(selection, bundles, coupling);
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const int chosen = selection[i];
    for (int j = 0; j < chosen; ++j) {
      selection[i] = j;
      if (selection_rp(selection, bundles, coupling) <= optimum + 1e-9 * (1.0 + optimum)) break;
      selection[i] = chosen;
    }
  }
  RecoveryResult r = from_weights(bundles, coupling, lambda, one_hot(bundles, selection));
  r.lp_objective = r.residuals.rp;
  return r;
}

RecoveryResult recover_milp_heuristic(std::span<const ResponseBundle> bundles,
                                      const Coupling& coupling, const Vector& lambda,
                                      const RecoveryConfig& config, int iteration) {
  if (config.samples < 1) throw std::invalid_argument("heuristic recovery needs samples >= 1");
  RecoveryConfig relaxed = config;
  relaxed.objective = RecoveryObjective::rp_plus_rc;
  const RecoveryResult lp = recover_convex(bundles, coupling, lambda, relaxed);

  std::vector<int> best;
  double best_rp = 0.0;
  for (int s = 0; s < config.samples; ++s) {
    std::vector<int> selection(bundles.size());
    for (std::size_t i = 0; i < bundles.size(); ++i) {
      auto rng = substream(config.seed, {static_cast<std::uint64_t>(iteration),
                                         static_cast<std::uint64_t>(Stream::heuristic_sampling),
                                         static_cast<std::uint64_t>(s), i});
      const Vector& u = lp.weights[i];
      std::discrete_distribution<int> pick(u.data(), u.data() + u.size());
      selection[i] = pick(rng);
    }
    selection = greedy_round(std::move(selection), bundles, coupling);
    const double rp = selection_rp(selection, bundles, coupling);
    if (best.empty() || rp < best_rp) {
      best = std::move(selection);
      best_rp = rp;
    }
  }
  RecoveryResult r = from_weights(bundles, coupling, lambda, one_hot(bundles, best));
  r.lp_objective = best_rp;
  r.fallback = lp.fallback;
  return r;
}

RecoveryResult recover(std::span<const ResponseBundle> bundles, const Coupling& coupling,
                       const Vector& lambda, const RecoveryConfig& config, int iteration) {
  switch (config.selection) {
    case Selection::convex: return recover_convex(bundles, coupling, lambda, config);
    case Selection::integral_exact: return recover_milp_exact(bundles, coupling, lambda, config);
    case Selection::integral_heuristic:
      return recover_milp_heuristic(bundles, coupling, lambda, config, iteration);
  }
  throw std::logic_error("unreachable selection mode");
}

}  // namespace mra
