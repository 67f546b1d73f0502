#pragma once

// Conic subproblem interface: linear or convex-quadratic objective over
// zero / nonnegative / second-order cone constraint blocks, optional binary
// variables. One interior-point backend sits behind `solve`.

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mra::conic {

struct Term {
  int var;
  double coef;
};

// sum_k coef_k * x[var_k] + constant
class Affine {
 public:
  Affine() = default;
  Affine(double constant) : constant(constant) {}  // NOLINT: implicit on purpose

  static Affine variable(int var, double coef = 1.0) {
    Affine a;
    a.terms.push_back({var, coef});
    return a;
  }

  Affine& add(int var, double coef) {
    terms.push_back({var, coef});
    return *this;
  }
  Affine& operator+=(const Affine& o);
  Affine& operator-=(const Affine& o);
  Affine& operator*=(double k);

  friend Affine operator+(Affine a, const Affine& b) { return a += b; }
  friend Affine operator-(Affine a, const Affine& b) { return a -= b; }
  friend Affine operator*(double k, Affine a) { return a *= k; }

  Affine shifted(int offset) const;
  // Value at a point; `x` must cover every referenced variable.
  double evaluate(std::span<const double> x) const;

  std::vector<Term> terms;
  double constant = 0.0;
};

enum class ConeKind { zero, nonneg, soc };

struct ConeBlock {
  ConeKind kind;
  // zero: each row == 0; nonneg: each row >= 0; soc: ||rows[1:]|| <= rows[0]
  std::vector<Affine> rows;
};

class Program {
 public:
  int add_variable(std::string name = {});
  // Returns the index of the first of `count` consecutive new variables.
  int add_variables(int count, const std::string& prefix = {});
  int num_variables() const { return static_cast<int>(names_.size()); }
  const std::string& name(int var) const { return names_.at(var); }

  void minimize(Affine objective) { objective_ = std::move(objective); }
  // Adds (1/2) * value * x_i * x_j + (1/2) * value * x_j * x_i for i != j,
  // and (1/2) * value * x_i^2 for i == j.
  void add_quadratic(int i, int j, double value);

  void add_equality(Affine expr);  // expr == 0
  void add_nonneg(Affine expr);    // expr >= 0
  void add_soc(std::vector<Affine> rows);
  // w^2 <= u * v with u, v >= 0.
  void add_rotated_soc(const Affine& u, const Affine& v, const Affine& w);
  void set_binary(int var);
  // Copies the variables, constraints, quadratic terms and binaries of
  // `other` (not its objective) with indices shifted past the existing
  // variables. Returns the shift.
  int append(const Program& other);

  const Affine& objective() const { return objective_; }
  struct QuadEntry {
    int i, j;
    double value;
  };
  const std::vector<QuadEntry>& quadratic() const { return quad_; }
  const std::vector<ConeBlock>& blocks() const { return blocks_; }
  const std::vector<int>& binaries() const { return binaries_; }
  // Total constraint rows so far; the next row added gets this index in
  // SolveOutcome::duals.
  int num_rows() const { return num_rows_; }

  // Objective value (linear + quadratic) at x.
  double objective_value(std::span<const double> x) const;
  // Largest constraint violation at x (0 when feasible).
  double max_violation(std::span<const double> x) const;

 private:
  void check_vars(const Affine& a) const;

  std::vector<std::string> names_;
  Affine objective_;
  std::vector<QuadEntry> quad_;
  std::vector<ConeBlock> blocks_;
  std::vector<int> binaries_;
  int num_rows_ = 0;
};

enum class Status { optimal, infeasible, unbounded, numerical_limit };

const char* to_string(Status s);

struct SolveStats {
  int iterations = 0;
  int nodes = 0;  // branch-and-bound nodes (1 for continuous programs)
  double seconds = 0.0;
  // Set when progress stalled and the best iterate met only `tol_reduced`.
  bool reduced_accuracy = false;
};

struct SolveOutcome {
  Status status = Status::numerical_limit;
  std::vector<double> point;  // nonempty iff status == optimal
  double objective_value = 0.0;
  // Dual multipliers, one per constraint row in block order (optimal only).
  std::vector<double> duals;
  std::optional<std::vector<double>> best_iterate;  // numerical_limit only
  SolveStats stats;

  bool ok() const { return status == Status::optimal; }
};

struct Settings {
  double tol = 1e-8;
  double tol_infeasible = 1e-8;
  double tol_reduced = 1e-6;
  int max_iterations = 200;
  int max_binaries = 25;
  int equilibrate_iterations = 10;
  bool verbose = false;  // per-iteration trace on stderr
};

SolveOutcome solve(const Program& program, const Settings& settings = {});

// Constrains s <= geomean(terms) (and terms >= 0) with a balanced tower of
// 2-term geometric-mean cones. The term list is padded to a power of two with
// copies of s itself, which leaves the hypograph exact.
void add_geomean_hypograph(Program& program, std::span<const Affine> terms,
                           int hypograph_var);

}  // namespace mra::conic
