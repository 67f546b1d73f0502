// Homogeneous-embedding primal-dual interior-point method for
//
//   minimize    (1/2) x'Px + q'x
//   subject to  Ax + s = b,  s in K
//
// with K a product of zero, nonnegative and second-order cones. Nesterov-Todd
// scaling, Mehrotra predictor-corrector, Ruiz equilibration, and a sparse
// quasi-definite LDL^T of the regularized KKT matrix
//
//   [ P + dI      A'     ]
//   [   A     -(H + dI)  ]
//
// followed by iterative refinement against the unregularized matrix.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mra/conic.hpp"
#include "mra/sparse_ldl.hpp"

namespace mra::conic {
namespace {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Cone {
  ConeKind kind;
  int start;
  int dim;
};

struct StandardForm {
  int n = 0;
  int m = 0;
  SpMat A;  // m x n
  SpMat P;  // n x n, upper triangle
  Vec q, b;
  double obj_const = 0.0;
  std::vector<Cone> cones;
};

StandardForm to_standard_form(const Program& prog) {
  StandardForm sf;
  sf.n = prog.num_variables();
  std::vector<Eigen::Triplet<double, int>> at;
  std::vector<double> b;
  int row = 0;
  for (const ConeBlock& blk : prog.blocks()) {
    const int start = row;
    for (const Affine& e : blk.rows) {
      // s = e(x) = a'x + c  =>  -a'x + s = c
      for (const Term& t : e.terms) at.emplace_back(row, t.var, -t.coef);
      b.push_back(e.constant);
      ++row;
    }
    const int dim = row - start;
    if (blk.kind == ConeKind::soc) {
      sf.cones.push_back({ConeKind::soc, start, dim});
    } else if (!sf.cones.empty() && sf.cones.back().kind == blk.kind &&
               sf.cones.back().start + sf.cones.back().dim == start) {
      sf.cones.back().dim += dim;  // merge adjacent scalar blocks
    } else {
      sf.cones.push_back({blk.kind, start, dim});
    }
  }
  sf.m = row;
  sf.A.resize(sf.m, sf.n);
  sf.A.setFromTriplets(at.begin(), at.end());
  sf.A.makeCompressed();
  sf.b = Eigen::Map<Vec>(b.data(), static_cast<Eigen::Index>(b.size()));

  sf.q = Vec::Zero(sf.n);
  for (const Term& t : prog.objective().terms) sf.q[t.var] += t.coef;
  sf.obj_const = prog.objective().constant;

  std::vector<Eigen::Triplet<double, int>> pt;
  for (const Program::QuadEntry& e : prog.quadratic()) {
    pt.emplace_back(e.i, e.j, e.value);
  }
  sf.P.resize(sf.n, sf.n);
  sf.P.setFromTriplets(pt.begin(), pt.end());
  sf.P.makeCompressed();
  return sf;
}

Vec sym_mul(const SpMat& upper, const Vec& x) {
  return upper.selfadjointView<Eigen::Upper>() * x;
}

// ---------------------------------------------------------------------------
// Cone algebra. SOC vectors are u = (u0, u1).

double soc_residual(const double* u, int d) {
  double t = 0.0;
  for (int k = 1; k < d; ++k) t += u[k] * u[k];
  return u[0] * u[0] - t;
}

// Max step alpha >= 0 keeping u + alpha du in the cone.
double soc_step(const double* u, const double* du, int d) {
  double a = du[0] * du[0], b = u[0] * du[0], c = u[0] * u[0];
  for (int k = 1; k < d; ++k) {
    a -= du[k] * du[k];
    b -= u[k] * du[k];
    c -= u[k] * u[k];
  }
  c = std::max(c, 0.0);
  if (b >= 0.0 && a >= 0.0) {
    // f(alpha) = a alpha^2 + 2 b alpha + c stays nonnegative
    return du[0] >= 0.0 ? kInf : u[0] / -du[0];
  }
  const double disc = std::max(b * b - a * c, 0.0);
  const double denom = -b + std::sqrt(disc);
  if (denom <= 0.0) return 0.0;
  return c / denom;
}

struct SocScaling {
  double eta = 1.0;
  std::vector<double> w;  // normalized scaling point, w'Jw = 1
};

class Scalings {
 public:
  explicit Scalings(const std::vector<Cone>& cones, int m) : cones_(cones) {
    nonneg_w_.assign(m, 1.0);
    for (const Cone& c : cones_) {
      if (c.kind == ConeKind::soc) soc_.emplace_back();
    }
  }

  // Computes W from (s, z) and lambda = W z.
  void update(const Vec& s, const Vec& z, Vec& lambda) {
    int si = 0;
    lambda.setZero(s.size());
    for (const Cone& c : cones_) {
      if (c.kind == ConeKind::nonneg) {
        for (int k = c.start; k < c.start + c.dim; ++k) {
          nonneg_w_[k] = std::sqrt(s[k] / z[k]);
          lambda[k] = std::sqrt(s[k] * z[k]);
        }
      } else if (c.kind == ConeKind::soc) {
        SocScaling& sc = soc_[si++];
        const int d = c.dim;
        const double sn = std::sqrt(std::max(soc_residual(&s[c.start], d), 1e-300));
        const double zn = std::sqrt(std::max(soc_residual(&z[c.start], d), 1e-300));
        std::vector<double> sb(d), zb(d);
        double dot = 0.0;
        for (int k = 0; k < d; ++k) {
          sb[k] = s[c.start + k] / sn;
          zb[k] = z[c.start + k] / zn;
          dot += sb[k] * zb[k];
        }
        const double gamma = std::sqrt(std::max((1.0 + dot) / 2.0, 1e-300));
        sc.w.assign(d, 0.0);
        sc.w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
        for (int k = 1; k < d; ++k) sc.w[k] = (sb[k] - zb[k]) / (2.0 * gamma);
        // renormalize so that w'Jw = 1 exactly
        double tail = 0.0;
        for (int k = 1; k < d; ++k) tail += sc.w[k] * sc.w[k];
        sc.w[0] = std::sqrt(1.0 + tail);
        sc.eta = std::sqrt(sn / zn);
        apply_soc(sc, &z[c.start], &lambda[c.start], d, false);
      }
    }
  }

  // out = W v (inverse = false) or W^{-1} v (inverse = true).
  void apply(const Vec& v, Vec& out, bool inverse) const {
    out.resize(v.size());
    int si = 0;
    for (const Cone& c : cones_) {
      if (c.kind == ConeKind::zero) {
        for (int k = c.start; k < c.start + c.dim; ++k) out[k] = 0.0;
      } else if (c.kind == ConeKind::nonneg) {
        for (int k = c.start; k < c.start + c.dim; ++k) {
          out[k] = inverse ? v[k] / nonneg_w_[k] : v[k] * nonneg_w_[k];
        }
      } else {
        apply_soc(soc_[si++], &v[c.start], &out[c.start], c.dim, inverse);
      }
    }
  }

  // H = W'W entries: calls f(row, col, value) for the upper triangle of each
  // cone block (global row indices).
  template <typename F>
  void for_each_h(F&& f) const {
    int si = 0;
    for (const Cone& c : cones_) {
      if (c.kind == ConeKind::zero) {
        for (int k = c.start; k < c.start + c.dim; ++k) f(k, k, 0.0);
      } else if (c.kind == ConeKind::nonneg) {
        for (int k = c.start; k < c.start + c.dim; ++k) {
          f(k, k, nonneg_w_[k] * nonneg_w_[k]);
        }
      } else {
        const SocScaling& sc = soc_[si++];
        const int d = c.dim;
        // W = eta [w0 w1'; w1 I + w1 w1'/(1+w0)]; W symmetric so H = W W.
        Eigen::MatrixXd W(d, d);
        W(0, 0) = sc.w[0];
        for (int k = 1; k < d; ++k) {
          W(0, k) = W(k, 0) = sc.w[k];
          for (int l = 1; l < d; ++l) {
            W(k, l) = (k == l ? 1.0 : 0.0) + sc.w[k] * sc.w[l] / (1.0 + sc.w[0]);
          }
        }
        W *= sc.eta;
        const Eigen::MatrixXd H = W * W;
        for (int col = 0; col < d; ++col) {
          for (int row = 0; row <= col; ++row) {
            f(c.start + row, c.start + col, H(row, col));
          }
        }
      }
    }
  }

  // out = H v
  void apply_h(const Vec& v, Vec& out) const {
    Vec tmp;
    apply(v, tmp, false);
    apply(tmp, out, false);
  }

 private:
  static void apply_soc(const SocScaling& sc, const double* v, double* out,
                        int d, bool inverse) {
    const double sign = inverse ? -1.0 : 1.0;
    const double scale = inverse ? 1.0 / sc.eta : sc.eta;
    double w1v1 = 0.0;
    for (int k = 1; k < d; ++k) w1v1 += sc.w[k] * v[k];
    out[0] = scale * (sc.w[0] * v[0] + sign * w1v1);
    const double coef = sign * v[0] + w1v1 / (1.0 + sc.w[0]);
    for (int k = 1; k < d; ++k) out[k] = scale * (v[k] + coef * sc.w[k]);
  }

  const std::vector<Cone>& cones_;
  std::vector<double> nonneg_w_;
  std::vector<SocScaling> soc_;
};

// out = u o v (Jordan product)
void jordan(const std::vector<Cone>& cones, const Vec& u, const Vec& v, Vec& out) {
  out.setZero(u.size());
  for (const Cone& c : cones) {
    if (c.kind == ConeKind::nonneg) {
      for (int k = c.start; k < c.start + c.dim; ++k) out[k] = u[k] * v[k];
    } else if (c.kind == ConeKind::soc) {
      const int s = c.start;
      double dot = 0.0;
      for (int k = 0; k < c.dim; ++k) dot += u[s + k] * v[s + k];
      out[s] = dot;
      for (int k = 1; k < c.dim; ++k) out[s + k] = u[s] * v[s + k] + v[s] * u[s + k];
    }
  }
}

// out solves lambda o out = v
void jordan_div(const std::vector<Cone>& cones, const Vec& lambda, const Vec& v,
                Vec& out) {
  out.setZero(v.size());
  for (const Cone& c : cones) {
    if (c.kind == ConeKind::nonneg) {
      for (int k = c.start; k < c.start + c.dim; ++k) out[k] = v[k] / lambda[k];
    } else if (c.kind == ConeKind::soc) {
      const int s = c.start;
      const double rho = soc_residual(&lambda[s], c.dim);
      double l1v1 = 0.0;
      for (int k = 1; k < c.dim; ++k) l1v1 += lambda[s + k] * v[s + k];
      const double x0 = (lambda[s] * v[s] - l1v1) / rho;
      out[s] = x0;
      for (int k = 1; k < c.dim; ++k) {
        out[s + k] = (v[s + k] - x0 * lambda[s + k]) / lambda[s];
      }
    }
  }
}

void add_identity(const std::vector<Cone>& cones, Vec& v, double alpha) {
  for (const Cone& c : cones) {
    if (c.kind == ConeKind::nonneg) {
      for (int k = c.start; k < c.start + c.dim; ++k) v[k] += alpha;
    } else if (c.kind == ConeKind::soc) {
      v[c.start] += alpha;
    }
  }
}

// Smallest alpha such that v + alpha e is in the (closed) cone.
double cone_shift(const std::vector<Cone>& cones, const Vec& v) {
  double alpha = -kInf;
  for (const Cone& c : cones) {
    if (c.kind == ConeKind::nonneg) {
      for (int k = c.start; k < c.start + c.dim; ++k) alpha = std::max(alpha, -v[k]);
    } else if (c.kind == ConeKind::soc) {
      double t = 0.0;
      for (int k = 1; k < c.dim; ++k) t += v[c.start + k] * v[c.start + k];
      alpha = std::max(alpha, std::sqrt(t) - v[c.start]);
    }
  }
  return alpha;
}

double cone_max_step(const std::vector<Cone>& cones, const Vec& u, const Vec& du) {
  double alpha = kInf;
  for (const Cone& c : cones) {
    if (c.kind == ConeKind::nonneg) {
      for (int k = c.start; k < c.start + c.dim; ++k) {
        if (du[k] < 0.0) alpha = std::min(alpha, -u[k] / du[k]);
      }
    } else if (c.kind == ConeKind::soc) {
      alpha = std::min(alpha, soc_step(&u[c.start], &du[c.start], c.dim));
    }
  }
  return alpha;
}

double cone_dot(const std::vector<Cone>& cones, const Vec& u, const Vec& v) {
  double t = 0.0;
  for (const Cone& c : cones) {
    if (c.kind == ConeKind::zero) continue;
    for (int k = c.start; k < c.start + c.dim; ++k) t += u[k] * v[k];
  }
  return t;
}

// ---------------------------------------------------------------------------

class KktSystem {
 public:
  KktSystem(const StandardForm& sf, const Scalings& scalings)
      : sf_(sf), scalings_(scalings), n_(sf.n), m_(sf.m) {
    const int N = n_ + m_;
    // A' in CSC: column r holds row r of A.
    at_ = sf_.A.transpose();
    at_.makeCompressed();

    std::vector<int> signs(N, 1);
    for (int r = 0; r < m_; ++r) signs[n_ + r] = -1;

    // Upper-triangle pattern, each entry tagged with where its value comes from.
    struct Src {
      int kind;  // 0 = P, 1 = A', 2 = H, 3 = diag
      int index;
    };
    std::vector<std::vector<std::pair<int, Src>>> entries(N);
    for (int j = 0; j < n_; ++j) {
      for (SpMat::InnerIterator it(sf_.P, j); it; ++it) {
        if (it.row() < j) entries[j].push_back({it.row(), {0, static_cast<int>(&it.value() - sf_.P.valuePtr())}});
      }
    }
    for (int r = 0; r < m_; ++r) {
      for (SpMat::InnerIterator it(at_, r); it; ++it) {
        entries[n_ + r].push_back({it.row(), {1, static_cast<int>(&it.value() - at_.valuePtr())}});
      }
    }
    h_rows_.clear();
    h_cols_.clear();
    scalings_.for_each_h([&](int row, int col, double) {
      if (row != col) {
        entries[n_ + col].push_back({n_ + row, {2, static_cast<int>(h_rows_.size())}});
        h_rows_.push_back(row);
        h_cols_.push_back(col);
      }
    });
    for (int j = 0; j < N; ++j) entries[j].push_back({j, {3, j}});

    std::vector<int> col_ptr(N + 1, 0), row_idx;
    for (int j = 0; j < N; ++j) {
      col_ptr[j + 1] = col_ptr[j] + static_cast<int>(entries[j].size());
      for (const auto& [row, src] : entries[j]) {
        row_idx.push_back(row);
        sources_.push_back({src.kind, src.index});
      }
    }
    values_.assign(row_idx.size(), 0.0);
    diag_pos_.assign(N, 0);
    for (std::size_t p = 0; p < sources_.size(); ++p) {
      if (sources_[p].first == 3) diag_pos_[sources_[p].second] = static_cast<int>(p);
    }
    p_diag_ = Vec::Zero(n_);
    for (int j = 0; j < n_; ++j) {
      for (SpMat::InnerIterator it(sf_.P, j); it; ++it) {
        if (it.row() == j) p_diag_[j] += it.value();
      }
    }
    ldl_.emplace(N, std::move(col_ptr), std::move(row_idx), std::move(signs));
  }

  void factor(double static_reg) {
    h_diag_ = Vec::Zero(m_);
    h_off_.assign(h_rows_.size(), 0.0);
    std::size_t off = 0;
    scalings_.for_each_h([&](int row, int col, double v) {
      if (row == col) {
        h_diag_[row] = v;
      } else {
        h_off_[off++] = v;
      }
    });
    double max_diag = 0.0;
    for (int j = 0; j < n_; ++j) max_diag = std::max(max_diag, std::abs(p_diag_[j]));
    for (int r = 0; r < m_; ++r) max_diag = std::max(max_diag, std::abs(h_diag_[r]));
    reg_ = static_reg + 4.9e-32 * max_diag;
    for (std::size_t p = 0; p < sources_.size(); ++p) {
      const auto [kind, idx] = sources_[p];
      switch (kind) {
        case 0: values_[p] = sf_.P.valuePtr()[idx]; break;
        case 1: values_[p] = at_.valuePtr()[idx]; break;
        case 2: values_[p] = -h_off_[idx]; break;
        case 3:
          values_[p] = idx < n_ ? p_diag_[idx] + reg_ : -(h_diag_[idx - n_] + reg_);
          break;
      }
    }
    ldl_->factor(values_);
  }

  // Solves K [x; z] = [rx; rz] with iterative refinement.
  void solve(const Vec& rx, const Vec& rz, Vec& x, Vec& z) const {
    const int N = n_ + m_;
    Vec rhs(N);
    rhs << rx, rz;
    Vec sol = rhs;
    ldl_->solve({sol.data(), static_cast<std::size_t>(N)});
    const double rhs_norm = rhs.lpNorm<Eigen::Infinity>();
    Vec res(N), corr(N), trial(N);
    residual(rhs, sol, res);
    double rn = res.lpNorm<Eigen::Infinity>();
    for (int it = 0; it < 10 && rn > 1e-13 * (1.0 + rhs_norm); ++it) {
      corr = res;
      ldl_->solve({corr.data(), static_cast<std::size_t>(N)});
      trial = sol + corr;
      residual(rhs, trial, res);
      const double tn = res.lpNorm<Eigen::Infinity>();
      if (!(tn < rn)) break;
      const bool slow = tn > 0.5 * rn;
      sol.swap(trial);
      rn = tn;
      if (slow) break;
    }
    last_residual_ = rn / (1.0 + rhs_norm);
    x = sol.head(n_);
    z = sol.tail(m_);
  }

  double last_residual() const { return last_residual_; }

 private:
  // res = rhs - K sol (unregularized K)
  void residual(const Vec& rhs, const Vec& sol, Vec& res) const {
    const Vec x = sol.head(n_), z = sol.tail(m_);
    Vec top = sym_mul(sf_.P, x) + sf_.A.transpose() * z;
    Vec hz;
    scalings_.apply_h(z, hz);
    Vec bot = sf_.A * x - hz;
    res.resize(n_ + m_);
    res << rhs.head(n_) - top, rhs.tail(m_) - bot;
  }

  const StandardForm& sf_;
  const Scalings& scalings_;
  int n_, m_;
  SpMat at_;
  std::vector<std::pair<int, int>> sources_;
  std::vector<double> values_;
  std::vector<int> diag_pos_;
  std::vector<int> h_rows_, h_cols_;
  std::vector<double> h_off_;
  Vec h_diag_, p_diag_;
  double reg_ = 1e-8;
  std::optional<QuasiDefiniteLdl> ldl_;
  mutable double last_residual_ = 0.0;
};

// ---------------------------------------------------------------------------

struct Equilibration {
  Vec d, e;  // variable and row scalings
  double c = 1.0;
};

Equilibration equilibrate(StandardForm& sf, int iterations) {
  Equilibration eq;
  eq.d = Vec::Ones(sf.n);
  eq.e = Vec::Ones(sf.m);
  auto clamp = [](double v) { return std::clamp(v, 1e-4, 1e4); };
  for (int it = 0; it < iterations; ++it) {
    Vec cn = Vec::Zero(sf.n), rn = Vec::Zero(sf.m);
    for (int j = 0; j < sf.n; ++j) {
      for (SpMat::InnerIterator p(sf.P, j); p; ++p) {
        const double a = std::abs(p.value());
        cn[j] = std::max(cn[j], a);
        cn[p.row()] = std::max(cn[p.row()], a);
      }
      for (SpMat::InnerIterator p(sf.A, j); p; ++p) {
        const double a = std::abs(p.value());
        cn[j] = std::max(cn[j], a);
        rn[p.row()] = std::max(rn[p.row()], a);
      }
    }
    for (const Cone& c : sf.cones) {
      if (c.kind != ConeKind::soc) continue;
      const double mx = rn.segment(c.start, c.dim).maxCoeff();
      rn.segment(c.start, c.dim).setConstant(mx);
    }
    Vec dd(sf.n), ee(sf.m);
    for (int j = 0; j < sf.n; ++j) dd[j] = cn[j] > 1e-12 ? clamp(1.0 / std::sqrt(cn[j])) : 1.0;
    for (int r = 0; r < sf.m; ++r) ee[r] = rn[r] > 1e-12 ? clamp(1.0 / std::sqrt(rn[r])) : 1.0;
    for (int j = 0; j < sf.n; ++j) {
      for (SpMat::InnerIterator p(sf.P, j); p; ++p) p.valueRef() *= dd[p.row()] * dd[j];
      for (SpMat::InnerIterator p(sf.A, j); p; ++p) p.valueRef() *= ee[p.row()] * dd[j];
    }
    for (int j = 0; j < sf.n; ++j) eq.d[j] = std::clamp(eq.d[j] * dd[j], 1e-8, 1e8);
    for (int r = 0; r < sf.m; ++r) eq.e[r] = std::clamp(eq.e[r] * ee[r], 1e-8, 1e8);
  }
  sf.q = eq.d.cwiseProduct(sf.q);
  sf.b = eq.e.cwiseProduct(sf.b);
  // cost scaling
  double pmean = 0.0;
  if (sf.n > 0) {
    Vec cn = Vec::Zero(sf.n);
    for (int j = 0; j < sf.n; ++j) {
      for (SpMat::InnerIterator p(sf.P, j); p; ++p) {
        cn[j] = std::max(cn[j], std::abs(p.value()));
        cn[p.row()] = std::max(cn[p.row()], std::abs(p.value()));
      }
    }
    pmean = cn.mean();
  }
  const double scale = std::max(pmean, sf.q.size() ? sf.q.lpNorm<Eigen::Infinity>() : 0.0);
  eq.c = scale > 1e-12 ? std::clamp(1.0 / scale, 1e-4, 1e4) : 1.0;
  sf.q *= eq.c;
  sf.P *= eq.c;
  return eq;
}

struct Unscaled {
  Vec x, s, z;
};

class InteriorPoint {
 public:
  InteriorPoint(const StandardForm& original, const Settings& settings)
      : orig_(original), sf_(original), set_(settings) {
    eq_ = equilibrate(sf_, settings.equilibrate_iterations);
    for (const Cone& c : sf_.cones) {
      if (c.kind == ConeKind::nonneg) nu_ += c.dim;
      if (c.kind == ConeKind::soc) nu_ += 1;
    }
  }

  SolveOutcome run() {
    const int n = sf_.n, m = sf_.m;
    SolveOutcome out;
    Scalings scal(sf_.cones, m);
    Vec x(n), s(m), z(m), lambda(m);
    s.setOnes();
    z.setOnes();
    // Initial KKT with H = I on cone rows.
    init_unit_scaling(s, z);
    scal.update(s, z, lambda);
    KktSystem kkt(sf_, scal);
    const double static_reg = 1e-8;
    kkt.factor(static_reg);
    {
      Vec zz;
      kkt.solve(-sf_.q, sf_.b, x, zz);
      // s = b - Ax on cone rows (= -z for H = I), zero rows stay 0
      s = sf_.b - sf_.A * x;
      z = -s;
      zero_rows(s);
      Vec zeros_z = zz;
      for (const Cone& c : sf_.cones) {
        if (c.kind == ConeKind::zero) {
          z.segment(c.start, c.dim) = zeros_z.segment(c.start, c.dim);
        }
      }
      shift_into_cone(s);
      shift_into_cone(z);
    }
    double tau = 1.0, kappa = 1.0;

    struct Iterate {
      Vec x, s, z;
      double tau = 1.0, pobj = 0.0;
    };
    double best_merit = kInf;
    Iterate best;
    int iter = 0, stalled = 0;
    for (; iter <= set_.max_iterations; ++iter) {
      const Vec Px = sym_mul(sf_.P, x);
      const Vec rx = Px + sf_.A.transpose() * z + sf_.q * tau;
      const Vec rz = sf_.A * x + s - sf_.b * tau;
      const double xPx = x.dot(Px);
      const double rtau = sf_.q.dot(x) + sf_.b.dot(z) + xPx / tau + kappa;
      const double mu = (cone_dot(sf_.cones, s, z) + tau * kappa) / (nu_ + 1);

      const Check chk = check(x, s, z, tau);
      if (set_.verbose) {
        std::fprintf(stderr, "%3d pobj %+.6e pres %.2e dres %.2e gap %.2e tau %.2e kappa %.2e mu %.2e\n",
                     iter, chk.pobj, chk.pr, chk.dr, chk.gr, tau, kappa, mu);
      }
      if (chk.merit < best_merit) {
        best_merit = chk.merit;
        best = {x, s, z, tau, chk.pobj};
      }
      if (chk.optimal) {
        accept(Iterate{x, s, z, tau, chk.pobj}, out);
        break;
      }
      if (chk.primal_infeasible) {
        out.status = Status::infeasible;
        break;
      }
      if (chk.dual_infeasible) {
        out.status = Status::unbounded;
        break;
      }
      if (iter == set_.max_iterations) break;

      scal.update(s, z, lambda);
      kkt.factor(static_reg);

      Vec x1, z1;
      kkt.solve(-sf_.q, sf_.b, x1, z1);
      const Vec xi = x / tau;
      const Vec Pxi = Px / tau;
      const Vec qp = sf_.q + 2.0 * Pxi;
      const double xiPxi = xi.dot(Pxi);
      const double denom = qp.dot(x1) + sf_.b.dot(z1) - xiPxi - kappa / tau;

      auto direction = [&](const Vec& dx, const Vec& dz, double dtau,
                           const Vec& ds_tilde, double dkappa, Vec& Dx, Vec& Dz,
                           Vec& Ds, double& Dtau, double& Dkappa) {
        // ds' = W (lambda \ ds_tilde)
        Vec tmp, dsp;
        jordan_div(sf_.cones, lambda, ds_tilde, tmp);
        scal.apply(tmp, dsp, false);
        Vec x2, z2;
        kkt.solve(-dx, -dz + dsp, x2, z2);
        Dtau = (-dtau + dkappa / tau - qp.dot(x2) - sf_.b.dot(z2)) / denom;
        Dx = x2 + Dtau * x1;
        Dz = z2 + Dtau * z1;
        // From the linearized primal equation; forming -H dz - ds' instead
        // loses accuracy when the scaling is badly conditioned.
        Ds = -dz - sf_.A * Dx + sf_.b * Dtau;
        zero_rows(Ds);
        Dkappa = -(dkappa + kappa * Dtau) / tau;
      };
      auto max_step = [&](const Vec& Ds, const Vec& Dz, double Dtau, double Dkappa) {
        double a = std::min(cone_max_step(sf_.cones, s, Ds), cone_max_step(sf_.cones, z, Dz));
        if (Dtau < 0) a = std::min(a, -tau / Dtau);
        if (Dkappa < 0) a = std::min(a, -kappa / Dkappa);
        return a;
      };

      // predictor
      Vec ll;
      jordan(sf_.cones, lambda, lambda, ll);
      Vec dxa, dza, dsa;
      double dtaua, dkappaa;
      direction(rx, rz, rtau, ll, tau * kappa, dxa, dza, dsa, dtaua, dkappaa);
      const double alpha_aff = std::min(1.0, max_step(dsa, dza, dtaua, dkappaa));
      const double sigma = std::pow(1.0 - alpha_aff, 3);

      // corrector
      Vec ws, wz, cross;
      scal.apply(dsa, ws, true);
      scal.apply(dza, wz, false);
      jordan(sf_.cones, ws, wz, cross);
      Vec ds_tilde = ll + cross;
      add_identity(sf_.cones, ds_tilde, -sigma * mu);
      const double dkappa = tau * kappa + dtaua * dkappaa - sigma * mu;
      Vec dx, dz, ds;
      double dtau, dk;
      direction((1 - sigma) * rx, (1 - sigma) * rz, (1 - sigma) * rtau, ds_tilde,
                dkappa, dx, dz, ds, dtau, dk);
      const double amax = max_step(ds, dz, dtau, dk);
      const double alpha = std::min(1.0, 0.99 * amax);
      if (set_.verbose) {
        std::fprintf(stderr, "    denom %.3e dtau %.3e alpha %.3e sigma %.2e kktres %.2e\n", denom,
                     dtau, alpha, sigma, kkt.last_residual());
      }
      if (!(alpha > 1e-10) || !std::isfinite(alpha) || !dx.allFinite()) break;
      stalled = alpha < 1e-3 ? stalled + 1 : 0;
      if (stalled >= 3) break;

      x += alpha * dx;
      s += alpha * ds;
      z += alpha * dz;
      tau += alpha * dtau;
      kappa += alpha * dk;
      // guard against drift out of the cone
      if (!(tau > 0) || !(kappa > 0)) break;
    }
    out.stats.iterations = iter;
    if (out.status == Status::numerical_limit && best.x.size() == n) {
      if (best_merit <= set_.tol_reduced) {
        accept(best, out);
        out.stats.reduced_accuracy = true;
      } else {
        const Vec bx = eq_.d.cwiseProduct(best.x) / best.tau;
        out.best_iterate = std::vector<double>(bx.data(), bx.data() + n);
      }
    }
    return out;
  }

 private:
  struct Check {
    bool optimal = false;
    bool primal_infeasible = false;
    bool dual_infeasible = false;
    double pobj = 0.0;
    double merit = kInf;
    double pr = 0.0, dr = 0.0, gr = 0.0;
  };

  template <class It>
  void accept(const It& it, SolveOutcome& out) const {
    out.status = Status::optimal;
    const Unscaled u = unscale(it.x, it.s, it.z, it.tau);
    out.point.assign(u.x.data(), u.x.data() + u.x.size());
    out.duals.assign(u.z.data(), u.z.data() + u.z.size());
    out.objective_value = it.pobj + orig_.obj_const;
  }

  void init_unit_scaling(Vec& s, Vec& z) const {
    s.setZero();
    z.setZero();
    add_identity(sf_.cones, s, 1.0);
    add_identity(sf_.cones, z, 1.0);
  }

  void zero_rows(Vec& v) const {
    for (const Cone& c : sf_.cones) {
      if (c.kind == ConeKind::zero) v.segment(c.start, c.dim).setZero();
    }
  }

  void shift_into_cone(Vec& v) const {
    const double a = cone_shift(sf_.cones, v);
    if (a >= -1e-8) add_identity(sf_.cones, v, 1.0 + a);
  }

  Unscaled unscale(const Vec& x, const Vec& s, const Vec& z, double tau) const {
    Unscaled u;
    u.x = eq_.d.cwiseProduct(x) / tau;
    u.s = s.cwiseQuotient(eq_.e) / tau;
    u.z = eq_.e.cwiseProduct(z) / (eq_.c * tau);
    return u;
  }

  Check check(const Vec& x, const Vec& s, const Vec& z, double tau) const {
    Check c;
    const Unscaled u = unscale(x, s, z, tau);
    const Vec Ax = orig_.A * u.x;
    const Vec Px = sym_mul(orig_.P, u.x);
    const Vec Atz = orig_.A.transpose() * u.z;
    auto inf = [](const Vec& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; };
    const double pres = inf(Ax + u.s - orig_.b);
    const double dres = inf(Px + Atz + orig_.q);
    const double xPx = u.x.dot(Px);
    c.pobj = 0.5 * xPx + orig_.q.dot(u.x);
    const double dobj = -0.5 * xPx - orig_.b.dot(u.z);
    const double gap = std::min(std::abs(c.pobj - dobj), std::abs(u.s.dot(u.z)));
    const double pscale = 1.0 + std::max({inf(orig_.b), inf(Ax), inf(u.s)});
    const double dscale = 1.0 + std::max({inf(orig_.q), inf(Px), inf(Atz)});
    const double gscale = std::max(1.0, std::min(std::abs(c.pobj), std::abs(dobj)));
    const double pr = pres / pscale, dr = dres / dscale, gr = gap / gscale;
    c.pr = pr;
    c.dr = dr;
    c.gr = gr;
    c.merit = std::max({pr, dr, gr});
    if (!std::isfinite(c.merit)) c.merit = kInf;
    c.optimal = pr <= set_.tol && dr <= set_.tol && gr <= set_.tol;

    // certificates on the homogeneous (tau-free) iterates
    const Vec zu = eq_.e.cwiseProduct(z) / eq_.c;
    const double zn = inf(zu);
    if (zn > 0) {
      const Vec zh = zu / zn;
      const double btz = orig_.b.dot(zh);
      if (btz < -set_.tol_infeasible &&
          inf(orig_.A.transpose() * zh) <= set_.tol_infeasible * -btz) {
        c.primal_infeasible = true;
      }
    }
    const Vec xu = eq_.d.cwiseProduct(x);
    const double xn = inf(xu);
    if (xn > 0) {
      const Vec xh = xu / xn;
      const Vec sh = s.cwiseQuotient(eq_.e) / xn;
      const double qtx = orig_.q.dot(xh);
      if (qtx < -set_.tol_infeasible &&
          inf(sym_mul(orig_.P, xh)) <= set_.tol_infeasible * -qtx &&
          inf(orig_.A * xh + sh) <= set_.tol_infeasible * -qtx) {
        c.dual_infeasible = true;
      }
    }
    return c;
  }

  const StandardForm& orig_;
  StandardForm sf_;
  Settings set_;
  Equilibration eq_;
  int nu_ = 0;
};

SolveOutcome solve_continuous(const Program& prog, const Settings& settings) {
  const StandardForm sf = to_standard_form(prog);
  InteriorPoint ipm(sf, settings);
  SolveOutcome out = ipm.run();
  out.stats.nodes = 1;
  return out;
}

// Depth-first branch-and-bound over binary variables. Relaxations add
// 0 <= x <= 1; branching fixes a variable with an equality row. The up branch
// is explored first and ties keep the incumbent.
struct BranchAndBound {
  const Program& base;
  const Settings& settings;
  double incumbent = kInf;
  std::vector<double> best;
  int nodes = 0;
  int iterations = 0;
  bool numerical_trouble = false;

  void explore(const std::vector<std::pair<int, double>>& fixed) {
    Program p = base;
    for (int v : base.binaries()) {
      p.add_nonneg(Affine::variable(v));
      p.add_nonneg(Affine(1.0) - Affine::variable(v));
    }
    for (const auto& [v, val] : fixed) p.add_equality(Affine::variable(v) - Affine(val));
    SolveOutcome r = solve_continuous(p, settings);
    ++nodes;
    iterations += r.stats.iterations;
    if (r.status == Status::infeasible) return;
    if (r.status != Status::optimal) {
      numerical_trouble = true;
      return;
    }
    const double prune_tol = 1e-7 * (1.0 + std::abs(incumbent));
    if (r.objective_value >= incumbent - prune_tol) return;
    int branch = -1;
    double most = 1e-6;
    for (int v : base.binaries()) {
      const double frac = std::min(r.point[v], 1.0 - r.point[v]);
      if (frac > most + 1e-12) {
        most = frac;
        branch = v;
      }
    }
    if (branch < 0) {
      incumbent = r.objective_value;
      best = r.point;
      for (int v : base.binaries()) best[v] = std::round(best[v]);
      return;
    }
    auto up = fixed;
    up.push_back({branch, 1.0});
    explore(up);
    auto down = fixed;
    down.push_back({branch, 0.0});
    explore(down);
  }
};

}  // namespace

SolveOutcome solve(const Program& program, const Settings& settings) {
  const auto t0 = std::chrono::steady_clock::now();
  SolveOutcome out;
  if (program.binaries().empty()) {
    out = solve_continuous(program, settings);
  } else {
    if (static_cast<int>(program.binaries().size()) > settings.max_binaries) {
      throw std::invalid_argument("solve: " + std::to_string(program.binaries().size()) +
                                  " binaries exceed the exact-search cap of " +
                                  std::to_string(settings.max_binaries));
    }
    BranchAndBound bb{program, settings, kInf, {}, 0, 0, false};
    bb.explore({});
    out.stats.nodes = bb.nodes;
    out.stats.iterations = bb.iterations;
    if (!bb.best.empty()) {
      // Polish the continuous part with every binary fixed at its value.
      Program fixed = program;
      for (int v : program.binaries()) {
        fixed.add_equality(Affine::variable(v) - Affine(bb.best[v]));
      }
      SolveOutcome r = solve_continuous(fixed, settings);
      if (r.ok()) {
        out.status = Status::optimal;
        out.point = r.point;
        for (int v : program.binaries()) out.point[v] = bb.best[v];
        out.objective_value = program.objective_value(out.point);
        out.duals = r.duals;
      } else {
        out.status = Status::numerical_limit;
        out.best_iterate = bb.best;
      }
    } else {
      out.status = bb.numerical_trouble ? Status::numerical_limit : Status::infeasible;
    }
  }
  out.stats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (out.ok()) {
    out.objective_value = program.objective_value(out.point);
  }
  return out;
}

}  // namespace mra::conic
