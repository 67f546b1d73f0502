#include "mra/price.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mra {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Vector PriceBox::project(const Vector& lambda) const {
  return lambda.cwiseMax(lower).cwiseMin(upper);
}

bool PriceBox::contains(const Vector& lambda, double tol) const {
  return ((lambda - lower).array() >= -tol).all() && ((upper - lambda).array() >= -tol).all();
}

PriceBox make_price_box(const Vector& p_min, const Vector& p_max) {
  if (p_min.size() != p_max.size()) throw std::invalid_argument("price box: size mismatch");
  if ((p_min.array() < 0.0).any() || ((p_max - p_min).array() < 0.0).any()) {
    throw std::invalid_argument("price box: estimates must satisfy 0 <= p_min <= p_max");
  }
  return {p_min / 3.0, 3.0 * p_max};
}

PriceBox make_price_box(double p_min, double p_max, int m) {
  return make_price_box(Vector::Constant(m, p_min), Vector::Constant(m, p_max));
}

Cut make_cut(Vector c, double d, int iteration) {
  Cut cut;
  cut.n = std::sqrt(c.squaredNorm() + d * d);
  if (!(cut.n > 0.0)) throw std::invalid_argument("cut: zero cut rejected");
  cut.c = std::move(c);
  cut.d = d;
  cut.iteration = iteration;
  return cut;
}

std::vector<Cut> box_cuts(const PriceBox& box) {
  const int m = box.size();
  std::vector<Cut> cuts;
  for (int j = 0; j < m; ++j) {
    Vector c = Vector::Zero(m);
    c[j] = -1.0;
    cuts.push_back(make_cut(std::move(c), -box.lower[j], 0));
  }
  for (int j = 0; j < m; ++j) {
    Vector c = Vector::Zero(m);
    c[j] = 1.0;
    cuts.push_back(make_cut(std::move(c), box.upper[j], 0));
  }
  return cuts;
}

std::optional<Cut> generate_cut(const Coupling& coupling, const BlockPoint& oracle_x,
                                const Vector& lambda, int iteration) {
  Vector c = coupling.b() - coupling.apply(oracle_x);
  if (c.lpNorm<Eigen::Infinity>() == 0.0) return std::nullopt;
  const double d = c.dot(lambda);
  return make_cut(std::move(c), d, iteration);
}

const char* to_string(StepRule rule) {
  switch (rule) {
    case StepRule::tenth_over_sqrt_k: return "0.1/sqrt(k)";
    case StepRule::one_over_sqrt_k: return "1/sqrt(k)";
    case StepRule::one_over_k: return "1/k";
    case StepRule::ten_over_k: return "10/k";
  }
  return "?";
}

StepRule step_rule_from_string(const std::string& s) {
  for (StepRule r : kAllStepRules) {
    if (s == to_string(r)) return r;
  }
  throw std::invalid_argument("unknown step rule '" + s +
                              "' (expected 0.1/sqrt(k), 1/sqrt(k), 1/k or 10/k)");
}

double step_size(StepRule rule, int k) {
  k = std::max(k, 1);
  switch (rule) {
    case StepRule::tenth_over_sqrt_k: return 0.1 / std::sqrt(k);
    case StepRule::one_over_sqrt_k: return 1.0 / std::sqrt(k);
    case StepRule::one_over_k: return 1.0 / k;
    case StepRule::ten_over_k: return 10.0 / k;
  }
  return 0.0;
}

Subgradient::Subgradient(PriceBox box, StepRule rule, Vector lambda0, double tol, int patience)
    : box_(std::move(box)), rule_(rule), lambda_(std::move(lambda0)), tol_(tol),
      patience_(patience) {
  if (lambda_.size() != box_.size()) throw std::invalid_argument("subgradient: size mismatch");
  lambda_ = box_.project(lambda_);
}

void Subgradient::step(double g, const Vector& q) {
  if (q.size() != lambda_.size()) throw std::invalid_argument("subgradient: size mismatch");
  if (k_ == 0) {
    g_best_ = g;
  } else {
    const double prev = g_best_;
    g_best_ = std::max(g, g_best_);
    flat_ = g_best_ - prev < tol_ ? flat_ + 1 : 0;
    if (flat_ >= patience_) stalled_ = true;
  }
  ++k_;
  if (q.lpNorm<Eigen::Infinity>() == 0.0) {
    stalled_ = true;
    return;
  }
  lambda_ = box_.project(lambda_ - step_size(rule_, k_) * q);
}

DualAverage averaged_dual(std::span<const QueryRecord> history, const Vector& z) {
  DualAverage out;
  if (history.empty()) return out;
  const int m = static_cast<int>(z.size()) - 1;
  out.lambda = Vector::Zero(m);
  for (std::size_t i = 0; i < history.size(); ++i) {
    const Cut& cut = history[i].cut;
    const double slack = (z[0] * cut.d - cut.c.dot(z.tail(m))) / cut.n;
    if (!(slack > 0.0)) {
      out.dropped.push_back(static_cast<int>(i));
      continue;
    }
    const double beta = 1.0 / slack;
    out.kept.push_back(static_cast<int>(i));
    out.beta.push_back(beta);
    out.pi.push_back(beta / cut.n);
    out.P += beta / cut.n;
  }
  for (std::size_t k = 0; k < out.kept.size(); ++k) {
    const double theta = out.pi[k] / out.P;
    out.theta.push_back(theta);
    const Vector& zi = history[out.kept[k]].z;
    out.lambda += theta * zi.tail(m) / zi[0];
  }
  return out;
}

Accpm::Accpm(const PriceBox& box, AccpmOptions options) : m_(box.size()), options_(options) {
  if (((box.upper - box.lower).array() <= 0.0).any()) {
    throw std::invalid_argument("accpm: the price box needs upper > lower in every coordinate");
  }
  rows_.resize(std::max(4 * m_, 16), m_ + 1);
  for (const Cut& c : box_cuts(box)) {
    const int j = static_cast<int>(cuts_.size());
    rows_(j, 0) = c.d / c.n;
    rows_.row(j).tail(m_) = -c.c.transpose() / c.n;
    cuts_.push_back(c);
  }
  box_cut_count_ = static_cast<int>(cuts_.size());
  // The box midpoint at t = 1 is strictly inside every box cut.
  z_.resize(m_ + 1);
  z_[0] = 1.0;
  z_.tail(m_) = 0.5 * (box.lower + box.upper);
  recenter();
}

double Accpm::barrier(const Vector& z) const {
  if (!(z[0] > 0.0)) return kInf;
  const int l = static_cast<int>(cuts_.size());
  const Vector s = rows_.topRows(l) * z;
  if ((s.array() <= 0.0).any()) return kInf;
  return -s.array().log().sum() - std::log(z[0]) + 0.5 * z.squaredNorm();
}

Vector Accpm::gradient(const Vector& z) const {
  const int l = static_cast<int>(cuts_.size());
  const Vector s = rows_.topRows(l) * z;
  Vector g = z - rows_.topRows(l).transpose() * s.cwiseInverse();
  g[0] -= 1.0 / z[0];
  return g;
}

double Accpm::min_slack(const Vector& z) const {
  const int l = static_cast<int>(cuts_.size());
  return (rows_.topRows(l) * z).minCoeff();
}

void Accpm::recenter() {
  const int l = static_cast<int>(cuts_.size());
  const auto a = rows_.topRows(l);
  info_ = {};
  double f = barrier(z_);
  if (!std::isfinite(f)) throw std::logic_error("accpm: centering started outside the domain");
  for (int it = 0; it < options_.max_newton; ++it) {
    const Vector s = a * z_;
    const Vector inv = s.cwiseInverse();
    Vector g = z_ - a.transpose() * inv;
    g[0] -= 1.0 / z_[0];
    info_.grad_norm = g.norm();
    if (info_.grad_norm <= options_.newton_tol) {
      info_.converged = true;
      return;
    }
    Matrix h = a.transpose() * inv.asDiagonal() * inv.asDiagonal() * a;
    h.diagonal().array() += 1.0;
    h(0, 0) += 1.0 / (z_[0] * z_[0]);
    const Vector dz = -h.llt().solve(g);
    const double slope = g.dot(dz);
    double step = 1.0;
    Vector trial = z_ + dz;
    double ft = barrier(trial);
    while (!(ft <= f + options_.armijo * step * slope)) {
      step *= options_.backtrack;
      if (step < 1e-20) break;
      trial = z_ + step * dz;
      ft = barrier(trial);
    }
    if (!std::isfinite(ft) || ft > f) break;  // no further progress possible
    z_ = trial;
    f = ft;
    ++info_.newton_steps;
  }
  info_.grad_norm = gradient(z_).norm();
  info_.converged = info_.grad_norm <= options_.newton_tol;
}

bool Accpm::push_inside(const Cut& cut) {
  // Normal of the new slack in z-space; the current center sits on it.
  Vector a(m_ + 1);
  a[0] = cut.d / cut.n;
  a.tail(m_) = -cut.c / cut.n;
  const Vector dir = a / a.norm();
  const double old_slack = min_slack(z_);
  double step = 0.5 * std::min(old_slack, z_[0]);
  for (int tries = 0; tries < 60; ++tries, step *= 0.5) {
    const Vector trial = z_ + step * dir;
    if (trial[0] > 0.0 && min_slack(trial) > 0.0 && a.dot(trial) > 0.0) {
      z_ = trial;
      return true;
    }
  }
  return false;
}

bool Accpm::add_cut(const Cut& cut) {
  if (cut.c.size() != m_) throw std::invalid_argument("accpm: cut dimension mismatch");
  const Vector before = query_price();
  history_.push_back({z_, cut});
  const int j = static_cast<int>(cuts_.size());
  if (j >= rows_.rows()) rows_.conservativeResize(2 * rows_.rows(), Eigen::NoChange);
  rows_(j, 0) = cut.d / cut.n;
  rows_.row(j).tail(m_) = -cut.c.transpose() / cut.n;
  // push_inside measures old slacks on the rows added so far.
  if (!push_inside(cut)) {
    // The localization set has no interior left at machine precision.
    history_.pop_back();
    exhausted_ = true;
    return true;
  }
  cuts_.push_back(cut);
  recenter();
  return (query_price() - before).norm() <= options_.stop_tol;
}

}  // namespace mra
