#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mra/conic.hpp"

namespace mra::conic {

Affine& Affine::operator+=(const Affine& o) {
  terms.insert(terms.end(), o.terms.begin(), o.terms.end());
  constant += o.constant;
  return *this;
}

Affine& Affine::operator-=(const Affine& o) {
  for (const Term& t : o.terms) terms.push_back({t.var, -t.coef});
  constant -= o.constant;
  return *this;
}

Affine& Affine::operator*=(double k) {
  for (Term& t : terms) t.coef *= k;
  constant *= k;
  return *this;
}

Affine Affine::shifted(int offset) const {
  Affine a = *this;
  for (Term& t : a.terms) t.var += offset;
  return a;
}

double Affine::evaluate(std::span<const double> x) const {
  double v = constant;
  for (const Term& t : terms) v += t.coef * x[t.var];
  return v;
}

int Program::add_variable(std::string name) {
  names_.push_back(std::move(name));
  return static_cast<int>(names_.size()) - 1;
}

int Program::add_variables(int count, const std::string& prefix) {
  if (count < 0) throw std::invalid_argument("add_variables: negative count");
  const int first = num_variables();
  for (int k = 0; k < count; ++k) {
    names_.push_back(prefix.empty() ? std::string{}
                                    : prefix + "[" + std::to_string(k) + "]");
  }
  return first;
}

void Program::check_vars(const Affine& a) const {
  for (const Term& t : a.terms) {
    if (t.var < 0 || t.var >= num_variables()) {
      throw std::invalid_argument("constraint references undeclared variable " +
                                  std::to_string(t.var));
    }
  }
}

void Program::add_quadratic(int i, int j, double value) {
  if (i < 0 || j < 0 || i >= num_variables() || j >= num_variables()) {
    throw std::invalid_argument("add_quadratic: undeclared variable");
  }
  quad_.push_back({std::min(i, j), std::max(i, j), value});
}

void Program::add_equality(Affine expr) {
  check_vars(expr);
  blocks_.push_back({ConeKind::zero, {std::move(expr)}});
  ++num_rows_;
}

void Program::add_nonneg(Affine expr) {
  check_vars(expr);
  blocks_.push_back({ConeKind::nonneg, {std::move(expr)}});
  ++num_rows_;
}

void Program::add_soc(std::vector<Affine> rows) {
  if (rows.empty()) throw std::invalid_argument("add_soc: empty cone");
  for (const Affine& r : rows) check_vars(r);
  num_rows_ += static_cast<int>(rows.size());
  blocks_.push_back({ConeKind::soc, std::move(rows)});
}

void Program::add_rotated_soc(const Affine& u, const Affine& v,
                              const Affine& w) {
  // w^2 <= u v  <=>  ||(u - v, 2 w)|| <= u + v
  add_soc({u + v, u - v, 2.0 * w});
}

void Program::set_binary(int var) {
  if (var < 0 || var >= num_variables()) {
    throw std::invalid_argument("set_binary: undeclared variable");
  }
  if (std::find(binaries_.begin(), binaries_.end(), var) == binaries_.end()) {
    binaries_.push_back(var);
  }
}

int Program::append(const Program& other) {
  const int offset = num_variables();
  names_.insert(names_.end(), other.names_.begin(), other.names_.end());
  for (const ConeBlock& b : other.blocks_) {
    ConeBlock copy{b.kind, {}};
    copy.rows.reserve(b.rows.size());
    for (const Affine& r : b.rows) copy.rows.push_back(r.shifted(offset));
    blocks_.push_back(std::move(copy));
  }
  num_rows_ += other.num_rows_;
  for (const QuadEntry& e : other.quad_) quad_.push_back({e.i + offset, e.j + offset, e.value});
  for (int v : other.binaries_) binaries_.push_back(v + offset);
  return offset;
}

double Program::objective_value(std::span<const double> x) const {
  double v = objective_.evaluate(x);
  for (const QuadEntry& e : quad_) {
    v += (e.i == e.j ? 0.5 : 1.0) * e.value * x[e.i] * x[e.j];
  }
  return v;
}

double Program::max_violation(std::span<const double> x) const {
  double worst = 0.0;
  for (const ConeBlock& b : blocks_) {
    switch (b.kind) {
      case ConeKind::zero:
        for (const Affine& r : b.rows) worst = std::max(worst, std::abs(r.evaluate(x)));
        break;
      case ConeKind::nonneg:
        for (const Affine& r : b.rows) worst = std::max(worst, -r.evaluate(x));
        break;
      case ConeKind::soc: {
        double tail = 0.0;
        for (std::size_t k = 1; k < b.rows.size(); ++k) {
          const double v = b.rows[k].evaluate(x);
          tail += v * v;
        }
        worst = std::max(worst, std::sqrt(tail) - b.rows[0].evaluate(x));
        break;
      }
    }
  }
  for (int v : binaries_) {
    worst = std::max(worst, std::min(std::abs(x[v]), std::abs(x[v] - 1.0)));
  }
  return worst;
}

const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::numerical_limit: return "numerical-limit";
  }
  return "?";
}

void add_geomean_hypograph(Program& program, std::span<const Affine> terms,
                           int hypograph_var) {
  if (terms.empty()) throw std::invalid_argument("geomean of zero terms");
  const Affine s = Affine::variable(hypograph_var);
  if (terms.size() == 1) {
    program.add_nonneg(terms[0]);
    program.add_nonneg(terms[0] - s);
    return;
  }
  std::size_t width = 1;
  while (width < terms.size()) width *= 2;
  std::vector<Affine> level(terms.begin(), terms.end());
  while (level.size() < width) level.push_back(s);
  while (level.size() > 2) {
    std::vector<Affine> next;
    next.reserve(level.size() / 2);
    for (std::size_t k = 0; k < level.size(); k += 2) {
      const int node = program.add_variable();
      program.add_rotated_soc(level[k], level[k + 1], Affine::variable(node));
      next.push_back(Affine::variable(node));
    }
    level = std::move(next);
  }
  const int root = program.add_variable();
  program.add_rotated_soc(level[0], level[1], Affine::variable(root));
  program.add_nonneg(Affine::variable(root) - s);
}

}  // namespace mra::conic
