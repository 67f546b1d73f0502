#include "mra/sparse_ldl.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mra::conic {

QuasiDefiniteLdl::QuasiDefiniteLdl(int n, std::vector<int> col_ptr,
                                   std::vector<int> row_idx,
                                   std::vector<int> pivot_signs)
    : n_(n) {
  if (static_cast<int>(col_ptr.size()) != n + 1 ||
      static_cast<int>(pivot_signs.size()) != n) {
    throw std::invalid_argument("QuasiDefiniteLdl: inconsistent pattern");
  }
  const int nnz = col_ptr[n];

  // Fill-reducing ordering on the symmetric pattern.
  std::vector<Eigen::Triplet<double, int>> trips;
  trips.reserve(2 * nnz);
  for (int j = 0; j < n; ++j) {
    for (int p = col_ptr[j]; p < col_ptr[j + 1]; ++p) {
      const int i = row_idx[p];
      if (i > j) throw std::invalid_argument("QuasiDefiniteLdl: not upper");
      trips.emplace_back(i, j, 1.0);
      if (i != j) trips.emplace_back(j, i, 1.0);
    }
  }
  Eigen::SparseMatrix<double, Eigen::ColMajor, int> full(n, n);
  full.setFromTriplets(trips.begin(), trips.end());
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> amd;
  Eigen::AMDOrdering<int> ordering;
  ordering(full, amd);
  perm_.assign(amd.indices().data(), amd.indices().data() + n);
  iperm_.assign(n, 0);
  for (int k = 0; k < n; ++k) iperm_[perm_[k]] = k;

  // Permuted upper pattern.
  std::vector<int> count(n, 0);
  for (int j = 0; j < n; ++j) {
    for (int p = col_ptr[j]; p < col_ptr[j + 1]; ++p) {
      const int a = iperm_[row_idx[p]], b = iperm_[j];
      ++count[std::max(a, b)];
    }
  }
  ap_.assign(n + 1, 0);
  for (int j = 0; j < n; ++j) ap_[j + 1] = ap_[j] + count[j];
  ai_.assign(nnz, 0);
  ax_.assign(nnz, 0.0);
  slot_.assign(nnz, 0);
  std::vector<int> next(ap_.begin(), ap_.end() - 1);
  for (int j = 0; j < n; ++j) {
    for (int p = col_ptr[j]; p < col_ptr[j + 1]; ++p) {
      const int a = iperm_[row_idx[p]], b = iperm_[j];
      const int col = std::max(a, b);
      const int q = next[col]++;
      ai_[q] = std::min(a, b);
      slot_[p] = q;
    }
  }
  signs_.assign(n, 1);
  for (int k = 0; k < n; ++k) signs_[k] = pivot_signs[perm_[k]] >= 0 ? 1 : -1;

  // Elimination tree and column counts.
  etree_.assign(n, -1);
  lnz_.assign(n, 0);
  std::vector<int> work(n, 0);
  for (int j = 0; j < n; ++j) {
    work[j] = j;
    for (int p = ap_[j]; p < ap_[j + 1]; ++p) {
      int i = ai_[p];
      while (work[i] != j) {
        if (etree_[i] == -1) etree_[i] = j;
        ++lnz_[i];
        work[i] = j;
        i = etree_[i];
      }
    }
  }
  lp_.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) lp_[i + 1] = lp_[i] + lnz_[i];
  li_.assign(lp_[n], 0);
  lx_.assign(lp_[n], 0.0);
  d_.assign(n, 0.0);
  dinv_.assign(n, 0.0);
  y_idx_.assign(n, 0);
  elim_buf_.assign(n, 0);
  next_space_.assign(n, 0);
  y_mark_.assign(n, 0);
  y_vals_.assign(n, 0.0);
  work_.assign(n, 0.0);
}

void QuasiDefiniteLdl::factor(std::span<const double> values, double dyn_eps,
                              double dyn_delta) {
  for (std::size_t p = 0; p < values.size(); ++p) ax_[slot_[p]] = values[p];
  dyn_count_ = 0;
  for (int i = 0; i < n_; ++i) {
    next_space_[i] = lp_[i];
    y_mark_[i] = 0;
    y_vals_[i] = 0.0;
  }
  for (int k = 0; k < n_; ++k) {
    int nnz_y = 0;
    d_[k] = 0.0;
    for (int p = ap_[k]; p < ap_[k + 1]; ++p) {
      const int bidx = ai_[p];
      if (bidx == k) {
        d_[k] += ax_[p];
        continue;
      }
      y_vals_[bidx] += ax_[p];
      if (y_mark_[bidx]) continue;
      y_mark_[bidx] = 1;
      elim_buf_[0] = bidx;
      int nnz_e = 1;
      int next_idx = etree_[bidx];
      while (next_idx != -1 && next_idx < k) {
        if (y_mark_[next_idx]) break;
        y_mark_[next_idx] = 1;
        elim_buf_[nnz_e++] = next_idx;
        next_idx = etree_[next_idx];
      }
      while (nnz_e) y_idx_[nnz_y++] = elim_buf_[--nnz_e];
    }
    for (int i = nnz_y - 1; i >= 0; --i) {
      const int c = y_idx_[i];
      const int tmp = next_space_[c];
      const double yc = y_vals_[c];
      for (int j = lp_[c]; j < tmp; ++j) y_vals_[li_[j]] -= lx_[j] * yc;
      li_[tmp] = k;
      lx_[tmp] = yc * dinv_[c];
      d_[k] -= yc * lx_[tmp];
      ++next_space_[c];
      y_vals_[c] = 0.0;
      y_mark_[c] = 0;
    }
    if (signs_[k] * d_[k] <= dyn_eps) {
      d_[k] = signs_[k] * dyn_delta;
      ++dyn_count_;
    }
    dinv_[k] = 1.0 / d_[k];
  }
}

void QuasiDefiniteLdl::solve(std::span<double> rhs) const {
  for (int k = 0; k < n_; ++k) work_[k] = rhs[perm_[k]];
  for (int i = 0; i < n_; ++i) {
    const double xi = work_[i];
    for (int j = lp_[i]; j < lp_[i + 1]; ++j) work_[li_[j]] -= lx_[j] * xi;
  }
  for (int i = 0; i < n_; ++i) work_[i] *= dinv_[i];
  for (int i = n_ - 1; i >= 0; --i) {
    double xi = work_[i];
    for (int j = lp_[i]; j < lp_[i + 1]; ++j) xi -= lx_[j] * work_[li_[j]];
    work_[i] = xi;
  }
  for (int k = 0; k < n_; ++k) rhs[perm_[k]] = work_[k];
}

}  // namespace mra::conic
