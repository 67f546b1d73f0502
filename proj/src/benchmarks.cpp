#include "mra/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "mra/rng.hpp"

namespace mra {

namespace {

using conic::Affine;
using conic::Program;
using LiftedModel = std::pair<Program, Affine>;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Affine var(int v, double coef = 1.0) { return Affine::variable(v, coef); }

OracleResponse make_response(const AgentModel& agent, Vector x, const Vector& y) {
  OracleResponse r;
  r.f_value = agent.value(x);
  r.lagrangian_value = r.f_value - y.dot(x);
  r.x = std::move(x);
  return r;
}

LiftedModel resource_program(const Matrix& C) {
  Affine objective;
  const int m = static_cast<int>(C.cols());
  const int p = static_cast<int>(C.rows());
  Program prog;
  const int x0 = prog.add_variables(m, "x");
  const int u0 = prog.add_variables(p, "u");
  const int s = prog.add_variable("s");
  Affine budget(1.0);
  for (int j = 0; j < m; ++j) {
    prog.add_nonneg(var(x0 + j));
    budget.add(x0 + j, -1.0);
  }
  prog.add_nonneg(budget);
  std::vector<Affine> terms;
  for (int k = 0; k < p; ++k) {
    Affine row = var(u0 + k, -1.0);
    for (int j = 0; j < m; ++j) row.add(x0 + j, C(k, j));
    prog.add_equality(row);
    terms.push_back(var(u0 + k));
  }
  conic::add_geomean_hypograph(prog, terms, s);
  objective = var(s, -1.0);
  return {std::move(prog), std::move(objective)};
}

LiftedModel project_program(const Vector& r, double q) {
  Affine objective;
  const int m = static_cast<int>(r.size());
  Program prog;
  const int x0 = prog.add_variables(m, "x");
  const int t0 = prog.add_variables(m, "xt");
  Affine one(1.0);
  for (int j = 0; j < m; ++j) {
    prog.add_nonneg(var(t0 + j));
    prog.add_nonneg(Affine(1.0) - var(t0 + j));
    prog.add_nonneg(var(x0 + j) - var(t0 + j, q));
    prog.add_nonneg(Affine(q) - var(x0 + j));
    one.add(t0 + j, -1.0);
    objective.add(t0 + j, -r[j]);
  }
  prog.add_nonneg(one);
  return {std::move(prog), std::move(objective)};
}

LiftedModel team_program(double a, double d, double cap) {
  Affine objective;
  Program prog;
  const int c = prog.add_variable("c");
  const int e = prog.add_variable("e");
  const int t = prog.add_variable("t");
  prog.add_nonneg(var(c));
  prog.add_nonneg(Affine(cap) - var(c));
  prog.add_nonneg(var(e) - var(c) + Affine(d));
  prog.add_nonneg(var(e));
  prog.add_rotated_soc(var(t), Affine(1.0), var(e));
  objective = var(t, a);
  return {std::move(prog), std::move(objective)};
}

LiftedModel commodity_program(const Graph& g, int source, int sink, double weight, double R) {
  Affine objective;
  const int q = static_cast<int>(g.edges.size());
  Program prog;
  const int x0 = prog.add_variables(q, "x");
  const int z0 = prog.add_variables(q, "z");
  const int d = prog.add_variable("d");
  const int h = prog.add_variable("h");
  for (int e = 0; e < q; ++e) {
    prog.add_nonneg(var(z0 + e));
    prog.add_nonneg(var(x0 + e) - var(z0 + e));
    prog.add_nonneg(Affine(R) - var(x0 + e));
  }
  // Conservation at every node but the last (the rows sum to zero).
  std::vector<Affine> balance(g.nodes);
  for (int e = 0; e < q; ++e) {
    balance[g.edges[e].first].add(z0 + e, -1.0);
    balance[g.edges[e].second].add(z0 + e, 1.0);
  }
  balance[source].add(d, 1.0);
  balance[sink].add(d, -1.0);
  for (int v = 0; v + 1 < g.nodes; ++v) prog.add_equality(balance[v]);
  prog.add_rotated_soc(var(d), Affine(1.0), var(h));
  objective = var(h, -weight);
  return {std::move(prog), std::move(objective)};
}

LiftedModel shipment_program(const Vector& cost, double mass) {
  Affine objective;
  const int m = static_cast<int>(cost.size());
  Program prog;
  const int x0 = prog.add_variables(m, "x");
  Affine total(-mass);
  for (int j = 0; j < m; ++j) {
    prog.add_nonneg(var(x0 + j));
    total.add(x0 + j, 1.0);
    objective.add(x0 + j, cost[j]);
  }
  prog.add_equality(total);
  return {std::move(prog), std::move(objective)};
}


std::uint64_t as_key(Stream s) { return static_cast<std::uint64_t>(s); }

double param_or(const nlohmann::json& params, const char* key, double fallback) {
  return params.contains(key) ? params.at(key).get<double>() : fallback;
}

int param_or(const nlohmann::json& params, const char* key, int fallback) {
  return params.contains(key) ? params.at(key).get<int>() : fallback;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

// -- agents -----------------------------------------------------------------

ResourceAgent::ResourceAgent(int id, Matrix C)
    : AgentModel(id, static_cast<int>(C.cols()), resource_program(C)),
      C_(std::move(C)) {}

double ResourceAgent::value(const Vector& x) const {
  const Vector u = (C_ * x).cwiseMax(0.0);
  return -std::exp(u.array().log().mean());
}

bool ResourceAgent::in_domain(const Vector& x, double tol) const {
  return x.minCoeff() >= -tol && x.sum() <= 1.0 + tol;
}

ProjectAgent::ProjectAgent(int id, Vector r, double q)
    : AgentModel(id, static_cast<int>(r.size()), project_program(r, q)),
      r_(std::move(r)), q_(q) {}

std::optional<OracleResponse> ProjectAgent::analytic_response(const Vector& y) const {
  const int m = static_cast<int>(r_.size());
  int best = -1;
  double best_coef = 0.0;
  for (int j = 0; j < m; ++j) {
    const double coef = -r_[j] - q_ * std::min(y[j], 0.0);
    if (coef < best_coef) {
      best_coef = coef;
      best = j;
    }
  }
  Vector x(m);
  for (int j = 0; j < m; ++j) x[j] = y[j] > 0.0 ? q_ : (j == best ? q_ : 0.0);
  return make_response(*this, std::move(x), y);
}

double ProjectAgent::value(const Vector& x) const {
  // Fractional knapsack: fill the highest rewards up to one unit.
  const int m = static_cast<int>(r_.size());
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return r_[a] > r_[b]; });
  double left = 1.0, reward = 0.0;
  for (int j : order) {
    if (left <= 0.0) break;
    const double take = std::min(std::clamp(x[j] / q_, 0.0, 1.0), left);
    reward += r_[j] * take;
    left -= take;
  }
  return -reward;
}

bool ProjectAgent::in_domain(const Vector& x, double tol) const {
  return x.minCoeff() >= -tol && x.maxCoeff() <= q_ + tol;
}

TeamAgent::TeamAgent(int id, double a, double d, double cap)
    : AgentModel(id, 1, team_program(a, d, cap)),
      a_(a), d_(d), cap_(cap) {}

std::optional<OracleResponse> TeamAgent::analytic_response(const Vector& y) const {
  // f is flat on [0, d] and then quadratic, so only a positive price buys
  // capacity, up to d + y / (2a).
  Vector x(1);
  x[0] = y[0] > 0.0 ? std::clamp(d_ + y[0] / (2.0 * a_), 0.0, cap_) : 0.0;
  return make_response(*this, std::move(x), y);
}

double TeamAgent::value(const Vector& x) const {
  const double over = std::max(std::max(x[0], 0.0) - d_, 0.0);
  return a_ * over * over;
}

bool TeamAgent::in_domain(const Vector& x, double tol) const {
  return x[0] >= -tol && x[0] <= cap_ + tol;
}

CommodityAgent::CommodityAgent(int id, const Graph& graph, int source, int sink, double weight,
                               double R)
    : AgentModel(id, static_cast<int>(graph.edges.size()),
                 commodity_program(graph, source, sink, weight, R)),
      graph_(graph), source_(source), sink_(sink), weight_(weight), R_(R) {}

double CommodityAgent::value(const Vector& x) const {
  return -weight_ * std::sqrt(max_flow(graph_, source_, sink_, x));
}

bool CommodityAgent::in_domain(const Vector& x, double tol) const {
  return x.minCoeff() >= -tol && x.maxCoeff() <= R_ + tol;
}

ShipmentAgent::ShipmentAgent(int id, Vector cost, double mass)
    : AgentModel(id, static_cast<int>(cost.size()), shipment_program(cost, mass)),
      cost_(std::move(cost)), mass_(mass) {}

std::optional<OracleResponse> ShipmentAgent::analytic_response(const Vector& y) const {
  Eigen::Index best = 0;
  (cost_ - y).minCoeff(&best);  // first minimizer on ties
  Vector x = Vector::Zero(cost_.size());
  x[best] = mass_;
  return make_response(*this, std::move(x), y);
}

double ShipmentAgent::value(const Vector& x) const { return cost_.dot(x); }

bool ShipmentAgent::in_domain(const Vector& x, double tol) const {
  return x.minCoeff() >= -tol && std::abs(x.sum() - mass_) <= tol;
}

double max_flow(const Graph& graph, int source, int sink, const Vector& capacity) {
  if (source == sink) return 0.0;
  const int n = graph.nodes;
  // Residual graph with paired arcs: arc 2e forward, 2e+1 backward.
  std::vector<double> cap(2 * graph.edges.size());
  std::vector<std::vector<int>> out(n);
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    cap[2 * e] = std::max(capacity[static_cast<Eigen::Index>(e)], 0.0);
    cap[2 * e + 1] = 0.0;
    out[graph.edges[e].first].push_back(static_cast<int>(2 * e));
    out[graph.edges[e].second].push_back(static_cast<int>(2 * e + 1));
  }
  auto head = [&](int arc) {
    const auto& [from, to] = graph.edges[arc / 2];
    return arc % 2 == 0 ? to : from;
  };
  double flow = 0.0;
  const double eps = 1e-15;
  for (;;) {
    std::vector<int> via(n, -1);
    std::vector<bool> seen(n, false);
    std::deque<int> queue{source};
    seen[source] = true;
    while (!queue.empty() && !seen[sink]) {
      const int u = queue.front();
      queue.pop_front();
      for (int arc : out[u]) {
        const int v = head(arc);
        if (!seen[v] && cap[arc] > eps) {
          seen[v] = true;
          via[v] = arc;
          queue.push_back(v);
        }
      }
    }
    if (!seen[sink]) break;
    double push = std::numeric_limits<double>::infinity();
    for (int v = sink; v != source; v = head(via[v] ^ 1)) push = std::min(push, cap[via[v]]);
    for (int v = sink; v != source; v = head(via[v] ^ 1)) {
      cap[via[v]] -= push;
      cap[via[v] ^ 1] += push;
    }
    flow += push;
  }
  return flow;
}

// -- generators -------------------------------------------------------------

Instance gen_resource_allocation(std::uint64_t seed, int K, int m, int p) {
  require(K >= 1 && m >= 1 && p >= 1, "resource allocation needs K, m, p >= 1");
  auto rng = substream(seed, {as_key(Stream::generator)});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Instance inst;
  inst.generator = "resource_allocation";
  inst.seed = seed;
  inst.params = {{"K", K}, {"m", m}, {"p", p}};
  std::vector<Matrix> blocks;
  for (int i = 0; i < K; ++i) {
    Matrix C(p, m);
    for (int j = 0; j < m; ++j) {
      for (int k = 0; k < p; ++k) C(k, j) = (j + unit(rng)) / m;
    }
    inst.agents.push_back(std::make_shared<ResourceAgent>(i, std::move(C)));
    blocks.push_back(Matrix::Identity(m, m));
  }
  // Resource j is the (m - j)-th interval from the top: the efficient
  // (high index) resources get the small budgets.
  const double n = K;
  Vector R(m);
  for (int j = 0; j < m; ++j) {
    const int band = m - 1 - j;
    R[j] = std::sqrt(n) + (n / 2.0 - std::sqrt(n)) * (band + unit(rng)) / m;
  }
  inst.coupling = Coupling(std::move(blocks), std::move(R),
                           std::vector<RowKind>(m, RowKind::inequality));
  return inst;
}

Instance gen_assignment(std::uint64_t seed, int n, int m) {
  require(n >= 1 && m >= 1, "assignment needs n, m >= 1");
  auto rng = substream(seed, {as_key(Stream::generator)});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix reward(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) reward(i, j) = unit(rng);
  }
  const int q_max = (n + 2 * m - 1) / (2 * m);
  std::uniform_int_distribution<int> q_draw(1, q_max);
  Vector q(n);
  for (int i = 0; i < n; ++i) q[i] = q_draw(rng);
  const double w = reward.sum() / (30.0 * q.sum());
  std::uniform_real_distribution<double> a_draw(0.8 * w, 1.25 * w);
  Vector a(m), d(m);
  for (int j = 0; j < m; ++j) a[j] = a_draw(rng);
  const int d_max = static_cast<int>(std::ceil(q.sum() / n));
  std::uniform_int_distribution<int> d_draw(1, d_max);
  for (int j = 0; j < m; ++j) d[j] = d_draw(rng);

  Instance inst;
  inst.generator = "assignment";
  inst.seed = seed;
  inst.params = {{"n", n}, {"m", m}, {"infeasibility_scale", d.norm()}};
  std::vector<Matrix> blocks;
  for (int i = 0; i < n; ++i) {
    inst.agents.push_back(std::make_shared<ProjectAgent>(i, reward.row(i).transpose(), q[i]));
    blocks.push_back(Matrix::Identity(m, m));
  }
  for (int j = 0; j < m; ++j) {
    inst.agents.push_back(std::make_shared<TeamAgent>(n + j, a[j], d[j], q.sum()));
    Matrix col = Matrix::Zero(m, 1);
    col(j, 0) = -1.0;
    blocks.push_back(std::move(col));
  }
  inst.coupling = Coupling(std::move(blocks), Vector::Zero(m),
                           std::vector<RowKind>(m, RowKind::inequality));
  return inst;
}

Instance gen_mcf(std::uint64_t seed, int K, int nodes, int edges) {
  require(K >= 1 && nodes >= 2, "mcf needs K >= 1 and at least 2 nodes");
  require(edges >= nodes && edges <= nodes * (nodes - 1),
          "mcf needs nodes <= edges <= nodes * (nodes - 1)");
  auto rng = substream(seed, {as_key(Stream::generator)});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> node(0, nodes - 1);
  std::normal_distribution<double> normal;

  Graph g;
  g.nodes = nodes;
  std::vector<int> perm(nodes);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::set<std::pair<int, int>> used;
  for (int k = 0; k < nodes; ++k) {
    const std::pair<int, int> e{perm[k], perm[(k + 1) % nodes]};
    g.edges.push_back(e);
    used.insert(e);
  }
  while (static_cast<int>(g.edges.size()) < edges) {
    const int u = node(rng), v = node(rng);
    if (u == v || used.count({u, v})) continue;
    g.edges.emplace_back(u, v);
    used.insert({u, v});
  }
  Vector c(edges);
  for (int e = 0; e < edges; ++e) c[e] = (0.2 + 1.8 * unit(rng)) * std::exp(0.5);
  const double R = c.maxCoeff();

  Instance inst;
  inst.generator = "mcf";
  inst.seed = seed;
  inst.params = {{"K", K}, {"nodes", nodes}, {"edges", edges}};
  std::vector<Matrix> blocks;
  for (int i = 0; i < K; ++i) {
    const double weight = 0.5 + unit(rng);
    const double volume = std::exp(normal(rng));
    int r = node(rng), s = node(rng);
    while (s == r) s = node(rng);
    inst.agents.push_back(std::make_shared<CommodityAgent>(i, g, r, s, weight, R));
    blocks.push_back(volume * Matrix::Identity(edges, edges));
  }
  inst.coupling = Coupling(std::move(blocks), std::move(c),
                           std::vector<RowKind>(edges, RowKind::inequality));
  return inst;
}

Instance gen_shipment(std::uint64_t seed, int K, int m, int d, double sigma) {
  require(K >= 1 && m >= 1 && d >= 1 && sigma >= 0.0, "shipment needs K, m, d >= 1, sigma >= 0");
  auto rng = substream(seed, {as_key(Stream::generator)});
  std::normal_distribution<double> normal;
  Matrix src(K, d), dst(m, d);
  for (int i = 0; i < K; ++i) {
    for (int k = 0; k < d; ++k) src(i, k) = normal(rng);
  }
  for (int j = 0; j < m; ++j) {
    for (int k = 0; k < d; ++k) dst(j, k) = normal(rng);
  }
  Matrix cost(K, m);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < m; ++j) cost(i, j) = (src.row(i) - dst.row(j)).norm();
  }
  Vector mu_s(K), mu_t(m);
  for (int i = 0; i < K; ++i) mu_s[i] = std::exp(normal(rng));
  for (int j = 0; j < m; ++j) mu_t[j] = std::exp(normal(rng));
  mu_s /= mu_s.sum();
  mu_t /= mu_t.sum();
  const Vector cap = mu_t * std::exp(sigma * sigma / 2.0);

  // Volumes are redrawn until the capacities leave a strictly feasible
  // transport plan; each attempt has its own substream.
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto vrng = substream(seed, {as_key(Stream::generator), 1, static_cast<std::uint64_t>(attempt)});
    Vector v(K);
    for (int i = 0; i < K; ++i) v[i] = std::exp(sigma * normal(vrng));

    Instance inst;
    inst.generator = "shipment";
    inst.seed = seed;
    inst.params = {{"K", K}, {"m", m}, {"d", d}, {"sigma", sigma}, {"volume_attempt", attempt}};
    std::vector<Matrix> blocks;
    std::vector<RowKind> kinds;
    for (int j = 0; j < m; ++j) kinds.push_back(RowKind::equality_upper);
    for (int j = 0; j < m; ++j) kinds.push_back(RowKind::equality_lower);
    for (int j = 0; j < m; ++j) kinds.push_back(RowKind::inequality);
    for (int i = 0; i < K; ++i) {
      inst.agents.push_back(std::make_shared<ShipmentAgent>(i, cost.row(i).transpose(), mu_s[i]));
      Matrix block(3 * m, m);
      block << Matrix::Identity(m, m), -Matrix::Identity(m, m), v[i] * Matrix::Identity(m, m);
      blocks.push_back(std::move(block));
    }
    Vector b(3 * m);
    b << mu_t, -mu_t, cap;
    inst.coupling = Coupling(std::move(blocks), std::move(b), std::move(kinds));
    if (slater_margin(inst) > 1e-9) return inst;
  }
  throw std::runtime_error("shipment: no strictly feasible volume draw in 100 attempts");
}

Instance generate(const std::string& generator, std::uint64_t seed, const nlohmann::json& params) {
  if (generator == "resource_allocation") {
    return gen_resource_allocation(seed, param_or(params, "K", 100), param_or(params, "m", 50),
                                   param_or(params, "p", 5));
  }
  if (generator == "assignment") {
    return gen_assignment(seed, param_or(params, "n", 200), param_or(params, "m", 50));
  }
  if (generator == "mcf") {
    return gen_mcf(seed, param_or(params, "K", 100), param_or(params, "nodes", 15),
                   param_or(params, "edges", 100));
  }
  if (generator == "shipment") {
    return gen_shipment(seed, param_or(params, "K", 100), param_or(params, "m", 25),
                        param_or(params, "d", 10), param_or(params, "sigma", 0.8));
  }
  throw std::invalid_argument("unknown generator '" + generator + "'");
}

std::string generator_for_family(const std::string& family) {
  if (family == "ra") return "resource_allocation";
  if (family == "assign") return "assignment";
  if (family == "mcf") return "mcf";
  if (family == "ship") return "shipment";
  throw std::invalid_argument("unknown family '" + family + "' (expected ra, assign, mcf, ship)");
}

// -- centralized solves -----------------------------------------------------

namespace {

struct Centralized {
  Program program;
  std::vector<int> offsets;
  Affine objective;
};

Centralized stack_agents(const Instance& inst) {
  Centralized c;
  for (const auto& agent : inst.agents) {
    const int off = c.program.append(agent->lifted());
    c.offsets.push_back(off);
    c.objective += agent->objective().shifted(off);
  }
  return c;
}

// b_r - (A x)_r over the stacked variables.
Affine coupling_row(const Instance& inst, const Centralized& c, int r) {
  Affine row(inst.coupling.b()[r]);
  for (int i = 0; i < inst.num_agents(); ++i) {
    const Matrix& A = inst.coupling.block(i);
    for (int k = 0; k < A.cols(); ++k) {
      if (A(r, k) != 0.0) row.add(c.offsets[i] + k, -A(r, k));
    }
  }
  return row;
}

}  // namespace

Reference reference_solve(const Instance& inst, const conic::Settings& settings) {
  Centralized c = stack_agents(inst);
  const Coupling& cp = inst.coupling;
  std::vector<int> dual_row(cp.rows(), -1);
  for (int r = 0; r < cp.rows(); ++r) {
    if (cp.row_kind()[r] == RowKind::equality_lower) continue;
    dual_row[r] = c.program.num_rows();
    if (cp.row_kind()[r] == RowKind::equality_upper) {
      c.program.add_equality(coupling_row(inst, c, r));
    } else {
      c.program.add_nonneg(coupling_row(inst, c, r));
    }
  }
  c.program.minimize(c.objective);
  const conic::SolveOutcome out = conic::solve(c.program, settings);
  if (!out.ok()) {
    throw std::runtime_error(std::string("reference solve ended with status ") +
                             conic::to_string(out.status));
  }
  Reference ref;
  ref.f_star = 0.0;
  for (int i = 0; i < inst.num_agents(); ++i) {
    Vector x = Eigen::Map<const Vector>(out.point.data() + c.offsets[i], inst.agents[i]->dim());
    ref.f_star += inst.agents[i]->value(x);
    ref.x_star.push_back(std::move(x));
  }
  ref.lambda_star = Vector::Zero(cp.rows());
  for (int r = 0; r < cp.rows(); ++r) {
    switch (cp.row_kind()[r]) {
      case RowKind::inequality: ref.lambda_star[r] = std::max(out.duals[dual_row[r]], 0.0); break;
      case RowKind::equality_upper: {
        const double nu = out.duals[dual_row[r]];
        ref.lambda_star[r] = std::max(nu, 0.0);
        ref.lambda_star[cp.partner(r)] = std::max(-nu, 0.0);
        break;
      }
      case RowKind::equality_lower: break;
    }
  }
  return ref;
}

double slater_margin(const Instance& inst, const conic::Settings& settings) {
  Centralized c = stack_agents(inst);
  const int t = c.program.add_variable("margin");
  const Coupling& cp = inst.coupling;
  for (int r = 0; r < cp.rows(); ++r) {
    switch (cp.row_kind()[r]) {
      case RowKind::inequality: c.program.add_nonneg(coupling_row(inst, c, r) - var(t)); break;
      case RowKind::equality_upper: c.program.add_equality(coupling_row(inst, c, r)); break;
      case RowKind::equality_lower: break;
    }
  }
  c.program.add_nonneg(Affine(1.0) - var(t));
  c.program.minimize(var(t, -1.0));
  const conic::SolveOutcome out = conic::solve(c.program, settings);
  if (!out.ok()) return -std::numeric_limits<double>::infinity();
  return out.point[t];
}

}  // namespace mra
