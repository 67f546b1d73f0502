#pragma once

// Experiment driver: a price-discovery loop (subgradient or ACCPM) with
// parallel bundle generation, MRA recovery and per-iteration metrics for the
// tracked primal points.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mra/agent.hpp"
#include "mra/instance.hpp"
#include "mra/price.hpp"
#include "mra/recovery.hpp"

namespace mra {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { subgradient, accpm };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

// Either a saved instance file or a generator call.
struct InstanceSource {
  std::string file;
  std::string generator;  // generator or family name
  std::uint64_t seed = 0;
  nlohmann::json params = nlohmann::json::object();
};

struct StoppingConfig {
  double accpm_tol = 1e-6;
  int subgrad_patience = 50;
  double subgrad_tol = 1e-9;
  double eps_r = 0.0;  // r_p + r_c of the MRA point; 0 disables
};

struct ExperimentConfig {
  InstanceSource instance;
  Method method = Method::accpm;
  StepRule step_rule = StepRule::one_over_sqrt_k;
  bool sweep_steps = false;
  OracleConfig oracle;
  RecoveryConfig recovery;
  int recovery_every = 1;
  int max_iterations = 100;
  double feasibility_threshold = 1e-6;
  double infeasibility_scale = 0.0;  // 0: ||b||, or the instance's own scale
  bool track_dual_average = false;
  std::string output;  // directory; empty writes nothing
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware concurrency
  StoppingConfig stopping;

  void validate() const;
};

// Every field must be present; unknown keys are rejected. Throws ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

enum class TrackedPoint { raw, mra, avg, proj, dualavg };
inline constexpr int kNumTrackedPoints = 5;
inline constexpr TrackedPoint kTrackedPoints[kNumTrackedPoints] = {
    TrackedPoint::raw, TrackedPoint::mra, TrackedPoint::avg, TrackedPoint::proj,
    TrackedPoint::dualavg};
const char* to_string(TrackedPoint p);

struct PointMetrics {
  bool present = false;
  double f = std::numeric_limits<double>::quiet_NaN();
  double subopt = std::numeric_limits<double>::quiet_NaN();
  double rp = std::numeric_limits<double>::quiet_NaN();
  double rc = std::numeric_limits<double>::quiet_NaN();
  double relinf = std::numeric_limits<double>::quiet_NaN();
  bool domfeas = false;

  bool feasible(double threshold) const { return present && domfeas && relinf < threshold; }
};

struct IterationRecord {
  int k = 0;
  double g_lambda = 0.0;
  std::array<PointMetrics, kNumTrackedPoints> points;

  PointMetrics& at(TrackedPoint p) { return points[static_cast<int>(p)]; }
  const PointMetrics& at(TrackedPoint p) const { return points[static_cast<int>(p)]; }
};

// What the loop saw at one iteration, for observers.
struct IterationView {
  int k;
  const Vector& lambda;
  const std::vector<Vector>& y;
  std::span<const ResponseBundle> bundles;
  const BlockPoint& raw;
  const RecoveryResult* recovery;  // null when recovery was skipped
  const IterationRecord& record;
  bool& stop;  // set to end the run after this iteration
};

using IterationObserver = std::function<void(const IterationView&)>;

struct ExperimentResult {
  std::vector<IterationRecord> records;
  StepRule step_rule = StepRule::one_over_sqrt_k;
  std::string stop_reason;  // max_iterations, accpm, subgradient, eps_r, observer
  Vector final_lambda;
};

// (f - f_star) / |f_star|, or f - f_star when |f_star| < 1e-12.
double suboptimality(double f, double f_star);

// Mean of the first k points.
BlockPoint primal_average(std::span<const BlockPoint> history, int k);

// Euclidean projection onto {x : A x <= b}, solved through its dual QP over
// the coupling rows (equality pairs as one free multiplier).
class Projector {
 public:
  explicit Projector(const Coupling& coupling, conic::Settings settings = {});
  BlockPoint operator()(const BlockPoint& x) const;

 private:
  const Coupling& coupling_;
  conic::Settings settings_;
  std::vector<int> rows_;       // coupling row per multiplier
  std::vector<bool> free_;      // equality pair
  Matrix gram_;                 // A_r A_r'
};

BlockPoint project_feasible(const Coupling& coupling, const BlockPoint& x);

// Loads or generates the configured instance and fills in the reference
// solution when it is missing.
Instance prepare_instance(const ExperimentConfig& cfg);

// Box spanning [min lambda*/3, 3 max lambda*] in every coordinate.
PriceBox price_box_from_reference(const Reference& ref, int m);

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Instance& instance,
                                const IterationObserver& observer = {});

// Index of the run with the smallest final raw-point r_p; ties keep the
// earlier run.
int select_step_rule(std::span<const ExperimentResult> runs);

// Runs every step rule with the subgradient method.
struct SweepResult {
  std::vector<ExperimentResult> runs;  // in kAllStepRules order
  int selected = 0;
};
SweepResult run_step_sweep(const ExperimentConfig& cfg, const Instance& instance);

}  // namespace mra
