#include "mra/instance.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "mra/benchmarks.hpp"

namespace mra {

namespace {

nlohmann::json vector_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vector_from(const nlohmann::json& j) {
  const std::vector<double> v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::optional<double> Instance::infeasibility_scale() const {
  if (params.contains("infeasibility_scale")) return params.at("infeasibility_scale").get<double>();
  return std::nullopt;
}

double Instance::objective(const BlockPoint& x) const {
  coupling.check_point(x);
  double total = 0.0;
  for (int i = 0; i < num_agents(); ++i) total += agents[i]->value(x[i]);
  return total;
}

bool Instance::in_domain(const BlockPoint& x, double tol) const {
  coupling.check_point(x);
  for (int i = 0; i < num_agents(); ++i) {
    if (!agents[i]->in_domain(x[i], tol)) return false;
  }
  return true;
}

nlohmann::json to_json(const Instance& inst) {
  const Coupling& c = inst.coupling;
  nlohmann::json j;
  j["m"] = c.rows();
  std::vector<int> dims;
  nlohmann::json blocks = nlohmann::json::array();
  for (int i = 0; i < c.num_blocks(); ++i) {
    dims.push_back(c.block_dim(i));
    const Matrix& A = c.block(i);
    std::vector<double> flat;
    flat.reserve(A.size());
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      for (Eigen::Index k = 0; k < A.cols(); ++k) flat.push_back(A(r, k));
    }
    blocks.push_back(std::move(flat));
  }
  j["block_dims"] = dims;
  j["A_blocks"] = std::move(blocks);
  j["b"] = vector_json(c.b());
  std::vector<std::string> kinds;
  for (RowKind k : c.row_kind()) kinds.emplace_back(to_string(k));
  j["row_kind"] = kinds;
  j["generator"] = inst.generator;
  j["params"] = inst.params;
  j["seed"] = inst.seed;
  if (inst.reference) {
    nlohmann::json ref;
    ref["f_star"] = inst.reference->f_star;
    nlohmann::json xs = nlohmann::json::array();
    for (const Vector& x : inst.reference->x_star) xs.push_back(vector_json(x));
    ref["x_star"] = std::move(xs);
    ref["lambda_star"] = vector_json(inst.reference->lambda_star);
    j["reference"] = std::move(ref);
  }
  return j;
}

Instance instance_from_json(const nlohmann::json& j) {
  const std::string generator = j.at("generator").get<std::string>();
  const std::uint64_t seed = j.at("seed").get<std::uint64_t>();
  Instance inst = generate(generator, seed, j.at("params"));

  // The stored coupling must be exactly what the generator reproduces.
  const Coupling& c = inst.coupling;
  const std::vector<int> dims = j.at("block_dims").get<std::vector<int>>();
  bool same = j.at("m").get<int>() == c.rows() && static_cast<int>(dims.size()) == c.num_blocks();
  for (int i = 0; same && i < c.num_blocks(); ++i) {
    same = dims[i] == c.block_dim(i);
    const std::vector<double> flat = j.at("A_blocks").at(i).get<std::vector<double>>();
    same = same && static_cast<Eigen::Index>(flat.size()) == c.block(i).size();
    for (Eigen::Index r = 0; same && r < c.block(i).rows(); ++r) {
      for (Eigen::Index k = 0; same && k < c.block(i).cols(); ++k) {
        same = flat[r * c.block(i).cols() + k] == c.block(i)(r, k);
      }
    }
  }
  same = same && vector_from(j.at("b")) == c.b();
  const std::vector<std::string> kinds = j.at("row_kind").get<std::vector<std::string>>();
  for (int r = 0; same && r < c.rows(); ++r) same = row_kind_from_string(kinds[r]) == c.row_kind()[r];
  if (!same) {
    throw std::invalid_argument("instance: stored coupling does not match generator '" + generator +
                                "' with seed " + std::to_string(seed));
  }
  if (j.contains("reference")) {
    const nlohmann::json& ref = j.at("reference");
    Reference r;
    r.f_star = ref.at("f_star").get<double>();
    if (ref.contains("x_star")) {
      for (const auto& x : ref.at("x_star")) r.x_star.push_back(vector_from(x));
    }
    if (ref.contains("lambda_star")) r.lambda_star = vector_from(ref.at("lambda_star"));
    inst.reference = std::move(r);
  }
  return inst;
}

void save_instance(const Instance& inst, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(inst).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Instance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return instance_from_json(nlohmann::json::parse(in));
}

}  // namespace mra
