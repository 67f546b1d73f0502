#include "mra/coupling.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mra {

const char* to_string(RowKind kind) {
  switch (kind) {
    case RowKind::inequality: return "inequality";
    case RowKind::equality_upper: return "equality-pair-upper";
    case RowKind::equality_lower: return "equality-pair-lower";
  }
  return "?";
}

RowKind row_kind_from_string(const std::string& s) {
  if (s == "inequality") return RowKind::inequality;
  if (s == "equality-pair-upper") return RowKind::equality_upper;
  if (s == "equality-pair-lower") return RowKind::equality_lower;
  throw std::invalid_argument("unknown row kind '" + s + "'");
}

Coupling::Coupling(std::vector<Matrix> blocks, Vector b, std::vector<RowKind> row_kind)
    : blocks_(std::move(blocks)), b_(std::move(b)), row_kind_(std::move(row_kind)) {
  const int m = rows();
  if (static_cast<int>(row_kind_.size()) != m) {
    throw std::invalid_argument("coupling: row_kind has " + std::to_string(row_kind_.size()) +
                                " entries for " + std::to_string(m) + " rows");
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].rows() != m) {
      throw std::invalid_argument("coupling: block " + std::to_string(i) + " has " +
                                  std::to_string(blocks_[i].rows()) + " rows, expected " +
                                  std::to_string(m));
    }
    total_dim_ += static_cast<int>(blocks_[i].cols());
  }
  // Pair each upper row with the next unmatched lower row that negates it.
  partner_.assign(m, -1);
  for (int r = 0; r < m; ++r) {
    if (row_kind_[r] != RowKind::equality_upper) continue;
    for (int s = 0; s < m; ++s) {
      if (row_kind_[s] != RowKind::equality_lower || partner_[s] >= 0) continue;
      bool match = b_[s] == -b_[r];
      for (std::size_t i = 0; match && i < blocks_.size(); ++i) {
        match = (blocks_[i].row(s) + blocks_[i].row(r)).cwiseAbs().maxCoeff() == 0.0;
      }
      if (match) {
        partner_[r] = s;
        partner_[s] = r;
        break;
      }
    }
  }
  for (int r = 0; r < m; ++r) {
    if (row_kind_[r] != RowKind::inequality && partner_[r] < 0) {
      throw std::invalid_argument("coupling: equality-pair row " + std::to_string(r) +
                                  " has no negated partner");
    }
  }
}

void Coupling::check_point(const BlockPoint& x) const {
  if (static_cast<int>(x.size()) != num_blocks()) {
    throw std::invalid_argument("point has " + std::to_string(x.size()) + " blocks, expected " +
                                std::to_string(num_blocks()));
  }
  for (int i = 0; i < num_blocks(); ++i) {
    if (x[i].size() != block_dim(i)) {
      throw std::invalid_argument("block " + std::to_string(i) + " has dimension " +
                                  std::to_string(x[i].size()) + ", expected " +
                                  std::to_string(block_dim(i)));
    }
  }
}

Vector Coupling::apply(const BlockPoint& x) const {
  check_point(x);
  Vector ax = Vector::Zero(rows());
  for (int i = 0; i < num_blocks(); ++i) ax.noalias() += blocks_[i] * x[i];
  return ax;
}

std::vector<Vector> local_prices(const Coupling& coupling, const Vector& lambda) {
  if (lambda.size() != coupling.rows()) {
    throw std::invalid_argument("local_prices: lambda has length " +
                                std::to_string(lambda.size()) + ", expected " +
                                std::to_string(coupling.rows()));
  }
  std::vector<Vector> y(coupling.num_blocks());
  for (int i = 0; i < coupling.num_blocks(); ++i) {
    y[i] = -(coupling.block(i).transpose() * lambda);
  }
  return y;
}

Residuals residuals_from_product(const Vector& ax, const Vector& b, const Vector& lambda) {
  if (ax.size() != b.size() || lambda.size() != b.size()) {
    throw std::invalid_argument("residuals: dimension mismatch");
  }
  Residuals r;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const double v = ax[j] - b[j];
    r.rp += std::max(v, 0.0);
    r.rc += lambda[j] * std::abs(v);
  }
  return r;
}

Residuals residuals(const Coupling& coupling, const BlockPoint& x, const Vector& lambda) {
  return residuals_from_product(coupling.apply(x), coupling.b(), lambda);
}

double relative_primal_infeasibility(const Residuals& res, const Coupling& coupling,
                                     std::optional<double> scale) {
  const double denom = scale ? *scale : coupling.b().norm();
  if (!(denom > 0.0)) {
    throw std::invalid_argument(
        "relative infeasibility: ||b|| is zero, an explicit infeasibility scale is required");
  }
  return res.rp / denom;
}

double dual_value(const Coupling& coupling, const Vector& lambda, const BlockPoint& x,
                  std::span<const double> f) {
  if (static_cast<int>(f.size()) != coupling.num_blocks()) {
    throw std::invalid_argument("dual_value: missing objective values");
  }
  const std::vector<Vector> y = local_prices(coupling, lambda);
  coupling.check_point(x);
  double g = -lambda.dot(coupling.b());
  for (int i = 0; i < coupling.num_blocks(); ++i) g += f[i] - y[i].dot(x[i]);
  return g;
}

}  // namespace mra
