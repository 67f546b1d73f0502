#pragma once

// Price discovery: the price box, neutral cuts, projected dual subgradient
// and the homogeneous analytic-center cutting-plane method on z = (t, lbar)
// with lambda = lbar / t, plus the weighted average of its query prices.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mra/coupling.hpp"

namespace mra {

struct PriceBox {
  Vector lower;
  Vector upper;

  int size() const { return static_cast<int>(lower.size()); }
  Vector project(const Vector& lambda) const;
  bool contains(const Vector& lambda, double tol = 0.0) const;
};

// lower = p_min / 3, upper = 3 p_max, coordinatewise.
PriceBox make_price_box(const Vector& p_min, const Vector& p_max);
PriceBox make_price_box(double p_min, double p_max, int m);

// Halfspace {l : c'l <= d}; n = sqrt(|c|^2 + d^2).
struct Cut {
  Vector c;
  double d = 0.0;
  double n = 0.0;
  int iteration = 0;  // 0 for box cuts
};

Cut make_cut(Vector c, double d, int iteration);
// The 2m cuts describing the box: lower bounds first, then upper bounds.
std::vector<Cut> box_cuts(const PriceBox& box);

// c = b - Ax, d = c'lambda. Returns nullopt when c = 0 (lambda is optimal).
std::optional<Cut> generate_cut(const Coupling& coupling, const BlockPoint& oracle_x,
                                const Vector& lambda, int iteration);

enum class StepRule { tenth_over_sqrt_k, one_over_sqrt_k, one_over_k, ten_over_k };

const char* to_string(StepRule rule);
StepRule step_rule_from_string(const std::string& s);
double step_size(StepRule rule, int k);  // k >= 1
inline constexpr StepRule kAllStepRules[] = {StepRule::tenth_over_sqrt_k, StepRule::one_over_sqrt_k,
                                            StepRule::one_over_k, StepRule::ten_over_k};

class Subgradient {
 public:
  Subgradient(PriceBox box, StepRule rule, Vector lambda0, double tol = 1e-9, int patience = 50);

  const Vector& lambda() const { return lambda_; }
  int iteration() const { return k_; }
  double g_best() const { return g_best_; }
  // g_best improved by less than tol for `patience` consecutive steps, or
  // the last subgradient was zero.
  bool stalled() const { return stalled_; }

  // Takes g(lambda^k) and q^k = b - A x^k in the superdifferential sense
  // (q^k is a subgradient of -g), then moves to lambda^{k+1}.
  void step(double g, const Vector& q);

 private:
  PriceBox box_;
  StepRule rule_;
  Vector lambda_;
  double tol_;
  int patience_;
  int k_ = 0;
  double g_best_ = 0.0;
  int flat_ = 0;
  bool stalled_ = false;
};

struct AccpmOptions {
  double newton_tol = 1e-8;
  int max_newton = 100;
  double armijo = 0.25;
  double backtrack = 0.5;
  double stop_tol = 1e-6;  // on ||lambda^{k+1} - lambda^k||_2
};

struct CenteringInfo {
  int newton_steps = 0;
  double grad_norm = 0.0;
  bool converged = false;
};

// A query point and the cut it produced.
struct QueryRecord {
  Vector z;  // (t, lbar)
  Cut cut;
};

struct DualAverage {
  Vector lambda;              // sum_i theta_i lambda_i
  std::vector<double> beta;   // per kept index
  std::vector<double> pi;
  std::vector<double> theta;
  std::vector<int> kept;      // indices into the query history
  std::vector<int> dropped;   // indices with nonpositive slack
  double P = 0.0;
};

// Weights each query i by 1 / (slack_i(z) * n_i), slack_i the normalized
// cut slack (t d_i - c_i'lbar) / n_i at the evaluation point z = (t, lbar).
DualAverage averaged_dual(std::span<const QueryRecord> history, const Vector& z);

class Accpm {
 public:
  explicit Accpm(const PriceBox& box, AccpmOptions options = {});

  // Price at the current analytic center.
  Vector query_price() const { return z_.tail(m_) / z_[0]; }
  const Vector& center() const { return z_; }
  int dim() const { return m_; }

  // Records the query (current center, cut), adds the cut to the barrier and
  // re-centers. Returns true when the new price moved by at most stop_tol, or
  // when the cut leaves no strictly interior point (exhausted() turns true and
  // the cut is discarded).
  bool add_cut(const Cut& cut);
  bool exhausted() const { return exhausted_; }

  const std::vector<Cut>& cuts() const { return cuts_; }
  int num_box_cuts() const { return box_cut_count_; }
  const std::vector<QueryRecord>& history() const { return history_; }
  const CenteringInfo& last_centering() const { return info_; }
  DualAverage averaged_dual() const { return mra::averaged_dual(history_, z_); }

  // F(z) including the proximal term, +inf outside the domain.
  double barrier(const Vector& z) const;
  Vector gradient(const Vector& z) const;
  // Minimum normalized slack over all cuts at z.
  double min_slack(const Vector& z) const;

 private:
  void recenter();
  bool push_inside(const Cut& cut);

  int m_;
  AccpmOptions options_;
  std::vector<Cut> cuts_;
  Matrix rows_;  // a_j = (d_j, -c_j) / n_j as rows, grown by doubling
  int box_cut_count_ = 0;
  Vector z_;
  CenteringInfo info_;
  std::vector<QueryRecord> history_;
  bool exhausted_ = false;
};

}  // namespace mra
