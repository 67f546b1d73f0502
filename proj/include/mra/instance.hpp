#pragma once

// A benchmark instance: coupling, agents, generator provenance and an
// optional centralized reference solution. The JSON form stores the dense
// coupling; agents are rebuilt from (generator, params, seed) on load.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mra/agent.hpp"
#include "mra/coupling.hpp"

namespace mra {

struct Reference {
  double f_star = 0.0;
  BlockPoint x_star;
  Vector lambda_star;
};

struct Instance {
  Coupling coupling;
  std::vector<std::shared_ptr<const AgentModel>> agents;
  std::string generator;
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::optional<Reference> reference;

  int num_agents() const { return static_cast<int>(agents.size()); }
  // params["infeasibility_scale"] when the generator recorded one (b == 0).
  std::optional<double> infeasibility_scale() const;
  // sum_i f_i(x_i); NaN if any block has no value.
  double objective(const BlockPoint& x) const;
  bool in_domain(const BlockPoint& x, double tol) const;
};

nlohmann::json to_json(const Instance& instance);
Instance instance_from_json(const nlohmann::json& j);

void save_instance(const Instance& instance, const std::filesystem::path& path);
Instance load_instance(const std::filesystem::path& path);

}  // namespace mra
