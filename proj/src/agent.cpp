#include "mra/agent.hpp"

#include <cmath>
#include <limits>

#include "mra/rng.hpp"

namespace mra {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

conic::Affine lagrangian(const AgentModel& agent, const Vector& y) {
  conic::Affine lag = agent.objective();
  for (int k = 0; k < agent.dim(); ++k) {
    if (y[k] != 0.0) lag.add(k, -y[k]);
  }
  return lag;
}

Vector head(const std::vector<double>& point, int dim) {
  return Eigen::Map<const Vector>(point.data(), dim);
}

void check_price(const AgentModel& agent, const Vector& y) {
  if (y.size() != agent.dim()) {
    throw std::invalid_argument("agent " + std::to_string(agent.id()) + ": price has length " +
                                std::to_string(y.size()) + ", expected " +
                                std::to_string(agent.dim()));
  }
}

void push_column(ResponseBundle& bundle, int col, const Vector& x, double f, double lag,
                 ColumnTag tag) {
  bundle.Z.col(col) = x;
  bundle.f_values[col] = f;
  bundle.lagrangian_values[col] = lag;
  bundle.tags[col] = tag;
}

ResponseBundle start_bundle(const AgentModel& agent, const OracleResponse& exact, int width,
                            int iteration) {
  ResponseBundle b;
  b.Z.resize(agent.dim(), width);
  b.f_values.assign(width, 0.0);
  b.lagrangian_values.assign(width, 0.0);
  b.tags.assign(width, {});
  for (int j = 0; j < width; ++j) {
    push_column(b, j, exact.x, exact.f_value, exact.lagrangian_value,
                {OracleKind::exact, 0.0, iteration});
  }
  return b;
}

std::optional<OracleResponse> value_subopt_column(const AgentModel& agent, const Vector& y,
                                                  const OracleResponse& exact, double eps,
                                                  const OracleConfig& config, int iteration,
                                                  int column) {
  auto rng = substream(config.seed, {static_cast<std::uint64_t>(agent.id()),
                                     static_cast<std::uint64_t>(iteration),
                                     static_cast<std::uint64_t>(Stream::value_direction),
                                     static_cast<std::uint64_t>(column)});
  std::normal_distribution<double> normal;
  conic::Affine direction;
  for (int k = 0; k < agent.dim(); ++k) direction.add(k, -normal(rng));

  const double bound = value_subopt_bound(exact.lagrangian_value, eps, config.abs_floor);
  conic::Program p = agent.lifted();
  p.add_nonneg(conic::Affine(bound) - lagrangian(agent, y));
  p.minimize(direction);
  const conic::SolveOutcome r = conic::solve(p, config.solver);
  if (!r.ok()) return std::nullopt;

  OracleResponse out;
  out.x = head(r.point, agent.dim());
  out.f_value = agent.value(out.x);
  if (!std::isfinite(out.f_value)) return std::nullopt;
  out.lagrangian_value = out.f_value - y.dot(out.x);
  const double slack = 1e-7 * (1.0 + std::abs(exact.lagrangian_value));
  if (out.lagrangian_value > bound + slack || !agent.in_domain(out.x, 1e-6)) return std::nullopt;
  return out;
}

std::optional<OracleResponse> perturbed_column(const AgentModel& agent, const Vector& y,
                                               double eps, const OracleConfig& config,
                                               int iteration, int column) {
  auto rng = substream(config.seed, {static_cast<std::uint64_t>(agent.id()),
                                     static_cast<std::uint64_t>(iteration),
                                     static_cast<std::uint64_t>(Stream::price_perturbation),
                                     static_cast<std::uint64_t>(column)});
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Vector shifted = y;
  for (int k = 0; k < agent.dim(); ++k) shifted[k] += eps * std::abs(y[k]) * unit(rng);
  try {
    OracleResponse out = conjugate_oracle(agent, shifted, config.use_analytic, config.solver);
    out.lagrangian_value = out.f_value - y.dot(out.x);
    return out;
  } catch (const OracleError&) {
    return std::nullopt;
  }
}

ResponseBundle fresh_bundle(const AgentModel& agent, const Vector& y, const OracleConfig& config,
                            int iteration, const std::vector<std::pair<double, int>>& groups) {
  check_price(agent, y);
  const OracleResponse exact = conjugate_oracle(agent, y, config.use_analytic, config.solver);
  if (config.kind == OracleKind::exact) return start_bundle(agent, exact, 1, iteration);

  int width = 0;
  for (const auto& [eps, count] : groups) width += count;
  ResponseBundle b = start_bundle(agent, exact, width, iteration);
  int col = 1;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto [eps, count] = groups[g];
    const int fresh = g == 0 ? count - 1 : count;
    for (int c = 0; c < fresh; ++c, ++col) {
      const std::optional<OracleResponse> r =
          config.kind == OracleKind::value_subopt
              ? value_subopt_column(agent, y, exact, eps, config, iteration, col)
              : perturbed_column(agent, y, eps, config, iteration, col);
      if (r) {
        push_column(b, col, r->x, r->f_value, r->lagrangian_value,
                    {config.kind, eps, iteration});
      } else {
        ++b.dropped;
      }
    }
  }
  return b;
}

}  // namespace

AgentModel::AgentModel(int id, int dim, conic::Program lifted, conic::Affine objective)
    : id_(id), dim_(dim), lifted_(std::move(lifted)), objective_(std::move(objective)) {
  if (dim_ < 1 || lifted_.num_variables() < dim_) {
    throw std::invalid_argument("agent " + std::to_string(id_) +
                                ": lifted program must start with the decision variables");
  }
  objective_.evaluate(std::vector<double>(lifted_.num_variables(), 0.0));
}

double AgentModel::value(const Vector& x) const {
  if (x.size() != dim_) throw std::invalid_argument("agent value: dimension mismatch");
  conic::Program p = lifted_;
  for (int k = 0; k < dim_; ++k) p.add_equality(conic::Affine::variable(k) - conic::Affine(x[k]));
  p.minimize(objective_);
  const conic::SolveOutcome r = conic::solve(p);
  return r.ok() ? r.objective_value : kNaN;
}

bool AgentModel::in_domain(const Vector& x, double /*tol*/) const {
  return std::isfinite(value(x));
}

const char* to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::exact: return "exact";
    case OracleKind::value_subopt: return "value";
    case OracleKind::price_perturbed: return "price";
  }
  return "?";
}

OracleKind oracle_kind_from_string(const std::string& s) {
  if (s == "exact") return OracleKind::exact;
  if (s == "value") return OracleKind::value_subopt;
  if (s == "price") return OracleKind::price_perturbed;
  throw std::invalid_argument("unknown oracle kind '" + s + "' (expected exact, value or price)");
}

void OracleConfig::validate() const {
  if (eps < 0.0) throw std::invalid_argument("oracle eps must be nonnegative");
  if (responses < 1) throw std::invalid_argument("oracle responses must be at least 1");
  if (history < 1) throw std::invalid_argument("oracle history must be at least 1");
  if (abs_floor < 0.0) throw std::invalid_argument("oracle abs_floor must be nonnegative");
  if (!mixing.empty()) {
    int total = 0;
    for (const auto& [e, count] : mixing) {
      if (e < 0.0 || count < 1) {
        throw std::invalid_argument("mixing entries need eps >= 0 and count >= 1");
      }
      total += count;
    }
    if (total != responses) {
      throw std::invalid_argument("mixing counts sum to " + std::to_string(total) +
                                  ", expected " + std::to_string(responses));
    }
  }
}

OracleResponse conjugate_oracle(const AgentModel& agent, const Vector& y, bool use_analytic,
                                const conic::Settings& settings) {
  check_price(agent, y);
  if (use_analytic) {
    if (std::optional<OracleResponse> r = agent.analytic_response(y)) return *r;
  }
  conic::Program p = agent.lifted();
  p.minimize(lagrangian(agent, y));
  const conic::SolveOutcome r = conic::solve(p, settings);
  if (!r.ok()) {
    throw OracleError("agent " + std::to_string(agent.id()) + ": oracle solve ended with status " +
                      conic::to_string(r.status));
  }
  OracleResponse out;
  out.x = head(r.point, agent.dim());
  out.f_value = agent.value(out.x);
  if (!std::isfinite(out.f_value)) out.f_value = agent.objective().evaluate(r.point);
  out.lagrangian_value = out.f_value - y.dot(out.x);
  return out;
}

double value_subopt_bound(double exact_lagrangian, double eps, double abs_floor) {
  return exact_lagrangian + eps * std::max(std::abs(exact_lagrangian), abs_floor);
}

ResponseBundle value_suboptimal_bundle(const AgentModel& agent, const Vector& y,
                                       const OracleConfig& config, int iteration) {
  OracleConfig c = config;
  c.kind = OracleKind::value_subopt;
  c.mixing.clear();
  return fresh_bundle(agent, y, c, iteration, {{config.eps, config.responses}});
}

ResponseBundle price_perturbed_bundle(const AgentModel& agent, const Vector& y,
                                      const OracleConfig& config, int iteration) {
  OracleConfig c = config;
  c.kind = OracleKind::price_perturbed;
  c.mixing.clear();
  return fresh_bundle(agent, y, c, iteration, {{config.eps, config.responses}});
}

ResponseBundle compose_bundle(const AgentModel& agent, const Vector& y, const OracleConfig& config,
                              int iteration, std::span<const ResponseBundle> history) {
  if (static_cast<int>(history.size()) > std::max(config.history - 1, 0)) {
    throw std::invalid_argument("compose_bundle: " + std::to_string(history.size()) +
                                " prior bundles exceed the history window");
  }
  std::vector<std::pair<double, int>> groups = config.mixing;
  if (groups.empty()) groups = {{config.eps, config.responses}};
  ResponseBundle b = fresh_bundle(agent, y, config, iteration, groups);
  if (history.empty()) return b;

  int width = b.width();
  for (const ResponseBundle& h : history) width += h.width();
  const int fresh = b.width();
  b.Z.conservativeResize(Eigen::NoChange, width);
  int col = fresh;
  for (const ResponseBundle& h : history) {
    for (int j = 0; j < h.width(); ++j, ++col) {
      b.Z.col(col) = h.Z.col(j);
      b.f_values.push_back(h.f_values[j]);
      b.lagrangian_values.push_back(h.f_values[j] - y.dot(h.Z.col(j)));
      b.tags.push_back(h.tags[j]);
    }
  }
  return b;
}

}  // namespace mra
