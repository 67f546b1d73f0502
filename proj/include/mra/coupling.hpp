#pragma once

// Coupled problem data: sum_i A_i x_i <= b with per-agent column blocks,
// plus the residual and dual-value definitions shared by every module.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <span>
#include <vector>

namespace mra {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// One vector per agent block.
using BlockPoint = std::vector<Vector>;

enum class RowKind { inequality, equality_upper, equality_lower };

const char* to_string(RowKind kind);
RowKind row_kind_from_string(const std::string& s);

class Coupling {
 public:
  Coupling() = default;
  // Throws std::invalid_argument when the blocks disagree on row count, or
  // when an equality pair is not an exact negated copy.
  Coupling(std::vector<Matrix> blocks, Vector b, std::vector<RowKind> row_kind);

  int rows() const { return static_cast<int>(b_.size()); }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  int block_dim(int i) const { return static_cast<int>(blocks_[i].cols()); }
  int total_dim() const { return total_dim_; }

  const Matrix& block(int i) const { return blocks_[i]; }
  const std::vector<Matrix>& blocks() const { return blocks_; }
  const Vector& b() const { return b_; }
  const std::vector<RowKind>& row_kind() const { return row_kind_; }
  // Row index of the partner of an equality-pair row, -1 for inequalities.
  int partner(int row) const { return partner_[row]; }

  // sum_i A_i x_i
  Vector apply(const BlockPoint& x) const;
  void check_point(const BlockPoint& x) const;

 private:
  std::vector<Matrix> blocks_;
  Vector b_;
  std::vector<RowKind> row_kind_;
  std::vector<int> partner_;
  int total_dim_ = 0;
};

struct Residuals {
  double rp = 0.0;  // 1'(Ax - b)_+
  double rc = 0.0;  // lambda'|Ax - b|
};

// y_i = -A_i' lambda for every block.
std::vector<Vector> local_prices(const Coupling& coupling, const Vector& lambda);

Residuals residuals(const Coupling& coupling, const BlockPoint& x, const Vector& lambda);
Residuals residuals_from_product(const Vector& ax, const Vector& b, const Vector& lambda);

// r_p / ||b||_2. When b == 0 the caller must supply `scale`; otherwise it
// overrides ||b||_2 when given.
double relative_primal_infeasibility(const Residuals& res, const Coupling& coupling,
                                     std::optional<double> scale = std::nullopt);

// g(lambda) = sum_i (f_i(x_i) - y_i'x_i) - lambda'b, where x_i are exact
// oracle responses at y_i = -A_i' lambda and `f` their objective values.
double dual_value(const Coupling& coupling, const Vector& lambda, const BlockPoint& x,
                  std::span<const double> f);

inline bool stopping_check(const Residuals& res, double eps_r) {
  return res.rp + res.rc <= eps_r;
}

}  // namespace mra
