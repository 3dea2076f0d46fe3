#include "adn/conic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace adn::conic {

std::string_view to_string(ConeKind kind) {
  switch (kind) {
    case ConeKind::Nonnegative:
      return "nonneg";
    case ConeKind::SecondOrder:
      return "soc";
    case ConeKind::RotatedSecondOrder:
      return "rsoc";
  }
  return "?";
}

std::string_view to_string(Status status) {
  switch (status) {
    case Status::Optimal:
      return "optimal";
    case Status::NearOptimal:
      return "near_optimal";
    case Status::Infeasible:
      return "infeasible";
    case Status::Unbounded:
      return "unbounded";
    case Status::IterLimit:
      return "iter_limit";
  }
  return "?";
}

AffineExpr& AffineExpr::add(const AffineExpr& other, double scale) {
  for (const auto& t : other.terms) add(t.var, scale * t.coef);
  constant += scale * other.constant;
  return *this;
}

double AffineExpr::evaluate(const std::vector<double>& x) const {
  double v = constant;
  for (const auto& t : terms) v += t.coef * x[static_cast<std::size_t>(t.var)];
  return v;
}

int ConicProgram::add_variable(double linear_cost) {
  linear_.push_back(linear_cost);
  hess_diag_.push_back(0.0);
  cone_of_.push_back(-1);
  return static_cast<int>(linear_.size()) - 1;
}

int ConicProgram::add_variables(int count) {
  const int first = num_variables();
  for (int i = 0; i < count; ++i) add_variable();
  return first;
}

void ConicProgram::add_linear_cost(int var, double c) { linear_.at(static_cast<std::size_t>(var)) += c; }

void ConicProgram::add_square_cost(int var, double weight) {
  if (weight < 0.0) throw std::invalid_argument("negative quadratic weight");
  hess_diag_.at(static_cast<std::size_t>(var)) += 2.0 * weight;
}

void ConicProgram::add_low_rank_column(std::vector<Term> column) { low_rank_.push_back(std::move(column)); }

int ConicProgram::add_equality(std::vector<Term> terms, double rhs) {
  rows_.push_back({std::move(terms), rhs});
  return static_cast<int>(rows_.size()) - 1;
}

int ConicProgram::add_cone(ConeKind kind, std::vector<int> vars) {
  if (vars.empty()) throw std::invalid_argument("empty cone");
  if (kind == ConeKind::RotatedSecondOrder && vars.size() < 2)
    throw std::invalid_argument("rotated cone needs at least two entries");
  const int index = static_cast<int>(cones_.size());
  for (int v : vars) {
    if (v < 0 || v >= num_variables()) throw std::out_of_range("cone variable out of range");
    auto& owner = cone_of_[static_cast<std::size_t>(v)];
    if (owner >= 0) throw std::invalid_argument("variable " + std::to_string(v) + " already in a cone");
    owner = index;
  }
  cones_.push_back({kind, std::move(vars)});
  return index;
}

int ConicProgram::define(const AffineExpr& expr) {
  const int v = add_variable();
  std::vector<Term> terms;
  terms.reserve(expr.terms.size() + 1);
  terms.push_back({v, 1.0});
  for (const auto& t : expr.terms) terms.push_back({t.var, -t.coef});
  add_equality(std::move(terms), expr.constant);
  return v;
}

int ConicProgram::add_cone_exprs(ConeKind kind, const std::vector<AffineExpr>& exprs) {
  std::vector<int> vars;
  vars.reserve(exprs.size());
  for (const auto& e : exprs) {
    const bool bare = e.constant == 0.0 && e.terms.size() == 1 && e.terms[0].coef == 1.0 &&
                      cone_of(e.terms[0].var) < 0 &&
                      std::find(vars.begin(), vars.end(), e.terms[0].var) == vars.end();
    vars.push_back(bare ? e.terms[0].var : define(e));
  }
  return add_cone(kind, std::move(vars));
}

double ConicProgram::objective(const std::vector<double>& x) const {
  double f = constant_;
  for (std::size_t i = 0; i < linear_.size(); ++i) f += linear_[i] * x[i] + 0.5 * hess_diag_[i] * x[i] * x[i];
  for (const auto& col : low_rank_) {
    double w = 0.0;
    for (const auto& t : col) w += t.coef * x[static_cast<std::size_t>(t.var)];
    f += 0.5 * w * w;
  }
  return f;
}

ProblemSize ConicProgram::size() const {
  ProblemSize s;
  s.variables = linear_.size();
  s.equality_rows = rows_.size();
  s.cones = cones_.size();
  for (const auto& c : cones_) s.cone_entries += c.vars.size();
  return s;
}

void ConicProgram::validate() const {
  const int n = num_variables();
  auto check = [n](int v) {
    if (v < 0 || v >= n) throw std::invalid_argument("variable index out of range: " + std::to_string(v));
  };
  for (std::size_t i = 0; i < hess_diag_.size(); ++i) {
    if (!(hess_diag_[i] >= 0.0) || !std::isfinite(hess_diag_[i]))
      throw std::invalid_argument("quadratic term not PSD at variable " + std::to_string(i));
    if (!std::isfinite(linear_[i])) throw std::invalid_argument("non-finite linear cost");
  }
  for (const auto& col : low_rank_)
    for (const auto& t : col) check(t.var);
  for (const auto& r : rows_) {
    if (!std::isfinite(r.rhs)) throw std::invalid_argument("non-finite equality rhs");
    for (const auto& t : r.terms) {
      check(t.var);
      if (!std::isfinite(t.coef)) throw std::invalid_argument("non-finite equality coefficient");
    }
  }
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < cones_.size(); ++k) {
    for (int v : cones_[k].vars) {
      check(v);
      if (owner[static_cast<std::size_t>(v)] >= 0) throw std::invalid_argument("variable in two cones");
      owner[static_cast<std::size_t>(v)] = static_cast<int>(k);
    }
  }
}

double KktResiduals::max() const { return std::max({primal, dual, complementarity}); }

namespace {

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double a : v) s += a * a;
  return std::sqrt(s);
}

// Distance-like violation of membership in a cone (0 inside).
double cone_violation(ConeKind kind, const std::vector<double>& v) {
  switch (kind) {
    case ConeKind::Nonnegative: {
      double worst = 0.0;
      for (double a : v) worst = std::max(worst, -a);
      return worst;
    }
    case ConeKind::SecondOrder: {
      double tail = 0.0;
      for (std::size_t i = 1; i < v.size(); ++i) tail += v[i] * v[i];
      return std::max(0.0, std::sqrt(tail) - v[0]);
    }
    case ConeKind::RotatedSecondOrder: {
      const double head = (v[0] + v[1]) / std::sqrt(2.0);
      double tail = (v[0] - v[1]) * (v[0] - v[1]) / 2.0;
      for (std::size_t i = 2; i < v.size(); ++i) tail += v[i] * v[i];
      return std::max(0.0, std::sqrt(tail) - head);
    }
  }
  return 0.0;
}

}  // namespace

KktResiduals kkt_residuals(const ConicProgram& prog, const Solution& sol) {
  const auto n = static_cast<std::size_t>(prog.num_variables());
  if (sol.x.size() != n) throw std::invalid_argument("solution size mismatch");
  const auto& rows = prog.equalities();
  std::vector<double> z = sol.z;
  z.resize(n, 0.0);
  std::vector<double> y = sol.y;
  y.resize(rows.size(), 0.0);

  std::vector<double> r_eq(rows.size());
  std::vector<double> b(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double acc = -rows[i].rhs;
    for (const auto& t : rows[i].terms) acc += t.coef * sol.x[static_cast<std::size_t>(t.var)];
    r_eq[i] = acc;
    b[i] = rows[i].rhs;
  }
  double cone_viol = 0.0;
  double dual_cone_viol = 0.0;
  double gap = 0.0;
  for (const auto& cone : prog.cones()) {
    std::vector<double> xv, zv;
    for (int v : cone.vars) {
      xv.push_back(sol.x[static_cast<std::size_t>(v)]);
      zv.push_back(z[static_cast<std::size_t>(v)]);
    }
    cone_viol = std::max(cone_viol, cone_violation(cone.kind, xv));
    dual_cone_viol = std::max(dual_cone_viol, cone_violation(cone.kind, zv));
    for (std::size_t i = 0; i < xv.size(); ++i) gap += xv[i] * zv[i];
  }

  // Stationarity: Qx + c - A'y - z.
  std::vector<double> grad(n);
  const auto& c = prog.linear_cost();
  const auto& d = prog.hessian_diagonal();
  for (std::size_t i = 0; i < n; ++i) grad[i] = c[i] + d[i] * sol.x[i] - z[i];
  for (const auto& col : prog.low_rank()) {
    double w = 0.0;
    for (const auto& t : col) w += t.coef * sol.x[static_cast<std::size_t>(t.var)];
    for (const auto& t : col) grad[static_cast<std::size_t>(t.var)] += t.coef * w;
  }
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (const auto& t : rows[i].terms) grad[static_cast<std::size_t>(t.var)] -= t.coef * y[i];

  KktResiduals r;
  r.primal = std::max(norm2(r_eq) / std::max(1.0, norm2(b)), cone_viol);
  r.dual = std::max(norm2(grad) / std::max(1.0, norm2(c)), dual_cone_viol);
  r.complementarity = std::abs(gap) / std::max(1.0, std::abs(prog.objective(sol.x)));
  return r;
}

}  // namespace adn::conic
