#pragma once

#include <span>
#include <vector>

namespace mra::conic {

// Sparse LDL^T factorization of a symmetric quasi-definite matrix with a
// fixed sparsity pattern. The pattern is given once (upper triangle, CSC,
// every diagonal entry present); numeric factorizations reuse the symbolic
// analysis. Pivots whose sign disagrees with the expected sign (or that are
// too small) are replaced by a signed regularization value.
class QuasiDefiniteLdl {
 public:
  QuasiDefiniteLdl(int n, std::vector<int> col_ptr, std::vector<int> row_idx,
                   std::vector<int> pivot_signs);

  // `values` is aligned with the pattern given to the constructor.
  void factor(std::span<const double> values, double dyn_eps = 1e-13,
              double dyn_delta = 2e-7);

  // Solves in place: rhs <- (L D L^T)^{-1} rhs.
  void solve(std::span<double> rhs) const;

  int size() const { return n_; }
  int dynamic_regularizations() const { return dyn_count_; }
  long factor_nonzeros() const { return static_cast<long>(li_.size()); }

 private:
  int n_;
  std::vector<int> perm_;     // perm_[new] = old
  std::vector<int> iperm_;    // iperm_[old] = new
  std::vector<int> ap_, ai_;  // permuted upper pattern
  std::vector<int> slot_;     // original entry -> permuted entry
  std::vector<double> ax_;
  std::vector<int> signs_;    // in permuted order
  std::vector<int> etree_, lnz_, lp_, li_;
  std::vector<double> lx_, d_, dinv_;
  int dyn_count_ = 0;

  // workspace
  std::vector<int> y_idx_, elim_buf_, next_space_;
  std::vector<char> y_mark_;
  std::vector<double> y_vals_;
  mutable std::vector<double> work_;
};

}  // namespace mra::conic
