#pragma once

// Seeded generators for the four benchmark families, their agent models,
// and the centralized solves used as ground truth.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mra/conic.hpp"
#include "mra/instance.hpp"

namespace mra {

// f(x) = -geomean(C x) on {x >= 0, 1'x <= 1}.
class ResourceAgent : public AgentModel {
 public:
  ResourceAgent(int id, Matrix C);
  double value(const Vector& x) const override;
  bool in_domain(const Vector& x, double tol) const override;
  const Matrix& C() const { return C_; }

 private:
  Matrix C_;
};

// Project: f(x) = min -r'xt  s.t.  q xt <= x, 1'xt <= 1, 0 <= xt <= 1, with
// dom f restricted to 0 <= x <= q.
class ProjectAgent : public AgentModel {
 public:
  ProjectAgent(int id, Vector r, double q);
  std::optional<OracleResponse> analytic_response(const Vector& y) const override;
  double value(const Vector& x) const override;
  bool in_domain(const Vector& x, double tol) const override;

 private:
  Vector r_;
  double q_;
};

// Team: f(c) = a (c - d)_+^2 on 0 <= c <= cap.
class TeamAgent : public AgentModel {
 public:
  TeamAgent(int id, double a, double d, double cap);
  std::optional<OracleResponse> analytic_response(const Vector& y) const override;
  double value(const Vector& x) const override;
  bool in_domain(const Vector& x, double tol) const override;

 private:
  double a_, d_, cap_;
};

struct Graph {
  int nodes = 0;
  std::vector<std::pair<int, int>> edges;  // (from, to)
};

// Commodity: f(x) = min -w sqrt(d) s.t. 0 <= z <= x, flow conservation
// moving d units from source to sink, on dom f = {0 <= x <= R}.
class CommodityAgent : public AgentModel {
 public:
  CommodityAgent(int id, const Graph& graph, int source, int sink, double weight, double R);
  double value(const Vector& x) const override;
  bool in_domain(const Vector& x, double tol) const override;

 private:
  Graph graph_;
  int source_, sink_;
  double weight_, R_;
};

// Source row: f(x) = c'x on {x >= 0, 1'x = mass}.
class ShipmentAgent : public AgentModel {
 public:
  ShipmentAgent(int id, Vector cost, double mass);
  std::optional<OracleResponse> analytic_response(const Vector& y) const override;
  double value(const Vector& x) const override;
  bool in_domain(const Vector& x, double tol) const override;

 private:
  Vector cost_;
  double mass_;
};

// Maximum s-t flow with the given edge capacities (negative ones count as 0).
double max_flow(const Graph& graph, int source, int sink, const Vector& capacity);

Instance gen_resource_allocation(std::uint64_t seed, int K = 100, int m = 50, int p = 5);
Instance gen_assignment(std::uint64_t seed, int n = 200, int m = 50);
Instance gen_mcf(std::uint64_t seed, int K = 100, int nodes = 15, int edges = 100);
Instance gen_shipment(std::uint64_t seed, int K = 100, int m = 25, int d = 10, double sigma = 0.8);

// Dispatch by generator name (resource_allocation, assignment, mcf,
// shipment); missing params take the defaults above.
Instance generate(const std::string& generator, std::uint64_t seed, const nlohmann::json& params);
// Short CLI family names: ra, assign, mcf, ship.
std::string generator_for_family(const std::string& family);

// Centralized solve of the whole coupled problem. Equality pairs are solved
// as one equality whose multiplier nu is split as (nu_+, nu_-).
Reference reference_solve(const Instance& instance, const conic::Settings& settings = {});
// Largest t with b - Ax >= t on inequality rows, equality pairs held with
// equality, x in the agents' domains, capped at 1.
double slater_margin(const Instance& instance, const conic::Settings& settings = {});

}  // namespace mra
