#pragma once

// Agents and their price-directed oracles. An agent describes f_i through a
// lifted conic program whose first dim() variables are x_i; inner variables
// follow. The exact oracle minimizes f(z) - y'z; the two multiple-response
// oracles return bundles of near-optimal responses.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mra/conic.hpp"
#include "mra/coupling.hpp"

namespace mra {

struct OracleResponse {
  Vector x;
  double f_value = 0.0;
  double lagrangian_value = 0.0;  // f_value - y'x
};

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AgentModel {
 public:
  // `lifted` holds the constraints of dom f (objective left unset);
  // `objective` is f written over the lifted variables.
  AgentModel(int id, int dim, conic::Program lifted, conic::Affine objective);
  AgentModel(int id, int dim, std::pair<conic::Program, conic::Affine> lifted)
      : AgentModel(id, dim, std::move(lifted.first), std::move(lifted.second)) {}
  virtual ~AgentModel() = default;

  int id() const { return id_; }
  int dim() const { return dim_; }
  const conic::Program& lifted() const { return lifted_; }
  const conic::Affine& objective() const { return objective_; }

  // Closed-form minimizer of f(z) - y'z, for agents that have one.
  virtual std::optional<OracleResponse> analytic_response(const Vector& /*y*/) const {
    return std::nullopt;
  }
  // f(x). The default minimizes the lifted objective with x pinned and
  // returns NaN when x is outside dom f.
  virtual double value(const Vector& x) const;
  virtual bool in_domain(const Vector& x, double tol) const;

 private:
  int id_;
  int dim_;
  conic::Program lifted_;
  conic::Affine objective_;
};

enum class OracleKind { exact, value_subopt, price_perturbed };

const char* to_string(OracleKind kind);
OracleKind oracle_kind_from_string(const std::string& s);

struct ColumnTag {
  OracleKind kind = OracleKind::exact;
  double eps = 0.0;
  int iteration = 0;
};

struct ResponseBundle {
  Matrix Z;  // dim x width, column 0 is the exact response
  std::vector<double> f_values;
  std::vector<double> lagrangian_values;
  std::vector<ColumnTag> tags;
  int dropped = 0;  // columns replaced by a copy of the exact response

  int width() const { return static_cast<int>(Z.cols()); }
};

struct OracleConfig {
  OracleKind kind = OracleKind::value_subopt;
  double eps = 0.1;
  int responses = 10;  // N_i
  // (eps, count) pairs splitting N_i; counts must sum to `responses`.
  std::vector<std::pair<double, int>> mixing;
  int history = 1;  // H_i, bundles kept including the fresh one
  double abs_floor = 1e-8;
  std::uint64_t seed = 0;
  bool use_analytic = true;
  conic::Settings solver;

  void validate() const;
};

OracleResponse conjugate_oracle(const AgentModel& agent, const Vector& y, bool use_analytic = true,
                                const conic::Settings& settings = {});

// Bound on f(z) - y'z admitted by a value-suboptimal column.
double value_subopt_bound(double exact_lagrangian, double eps, double abs_floor);

ResponseBundle value_suboptimal_bundle(const AgentModel& agent, const Vector& y,
                                       const OracleConfig& config, int iteration);
ResponseBundle price_perturbed_bundle(const AgentModel& agent, const Vector& y,
                                      const OracleConfig& config, int iteration);

// Fresh bundle built per config (mixing groups share one exact column),
// followed by every column of `history` with its Lagrangian value
// re-evaluated at y.
ResponseBundle compose_bundle(const AgentModel& agent, const Vector& y, const OracleConfig& config,
                              int iteration, std::span<const ResponseBundle> history = {});

}  // namespace mra
