// Homogeneous self-dual interior-point method for
//
//   minimize c'x  s.t.  A x = b,  G x + s = h,  s in K
//
// with K a product of one nonnegative orthant and second-order cones.
// Each iteration factors the quasi-definite KKT matrix
//
//   [ dI   A'   G'       ]
//   [ A   -dI   0        ]
//   [ G    0   -W'W - dI ]
//
// once and uses it for the tau-direction, the affine (predictor) and the
// combined (Mehrotra corrector) directions. W is the Nesterov-Todd scaling.

#include "adn/conic.hpp"

#include "ldl.hpp"

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/Sparse>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace adn::conic {

namespace {

[[gnu::format(printf, 2, 3)]] void trace(const SolverOptions& opt, const char* fmt, ...) {
  if (!opt.verbose && !opt.log) return;
  char buf[256];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  if (opt.verbose) std::fputs(buf, stderr);
  if (opt.log) opt.log(buf);
}

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Vec = Eigen::VectorXd;
using Triplet = Eigen::Triplet<double, int>;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ConeLayout {
  int nonneg = 0;
  std::vector<int> soc_start;
  std::vector<int> soc_dim;
  int rows = 0;

  [[nodiscard]] int degree() const { return nonneg + static_cast<int>(soc_dim.size()); }
};

// Internal standard form together with the map back to the user program.
struct Lifted {
  int n = 0;
  int p = 0;
  SpMat A, G;
  Vec P;  // diagonal quadratic term
  Vec c, b, h;
  ConeLayout layout;

  // User variable -> internal column (-1 when eliminated).
  std::vector<int> kept;
  // Eliminated user variable -> defining row and its coefficient.
  std::vector<int> def_row;
  std::vector<double> def_coef;
  // User row -> internal equality row (-1 when used for elimination).
  std::vector<int> row_map;
  // User cone -> first internal cone row.
  std::vector<int> cone_row;
};

struct Expr {
  std::vector<std::pair<int, double>> terms;  // internal column, coefficient
  double constant = 0.0;
};

Lifted lift(const ConicProgram& prog) {
  const int nu = prog.num_variables();
  const auto& rows = prog.equalities();
  const auto& lin = prog.linear_cost();
  const auto& hess = prog.hessian_diagonal();

  std::vector<int> occurrences(static_cast<std::size_t>(nu), 0);
  std::vector<int> last_row(static_cast<std::size_t>(nu), -1);
  std::vector<double> coef_sum(static_cast<std::size_t>(nu), 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const auto& t : rows[r].terms) {
      const auto v = static_cast<std::size_t>(t.var);
      if (last_row[v] != static_cast<int>(r)) {
        ++occurrences[v];
        last_row[v] = static_cast<int>(r);
        coef_sum[v] = 0.0;
      }
      coef_sum[v] += t.coef;
    }
  }
  std::vector<char> in_low_rank(static_cast<std::size_t>(nu), 0);
  for (const auto& col : prog.low_rank())
    for (const auto& t : col) in_low_rank[static_cast<std::size_t>(t.var)] = 1;

  Lifted L;
  L.kept.assign(static_cast<std::size_t>(nu), -1);
  L.def_row.assign(static_cast<std::size_t>(nu), -1);
  L.def_coef.assign(static_cast<std::size_t>(nu), 0.0);
  L.row_map.assign(rows.size(), -1);
  std::vector<char> row_used(rows.size(), 0);

  for (int v = 0; v < nu; ++v) {
    const auto vi = static_cast<std::size_t>(v);
    const bool eligible = prog.cone_of(v) >= 0 && lin[vi] == 0.0 && hess[vi] == 0.0 && !in_low_rank[vi] &&
                          occurrences[vi] == 1 && coef_sum[vi] != 0.0 &&
                          !row_used[static_cast<std::size_t>(last_row[vi])];
    if (eligible) {
      L.def_row[vi] = last_row[vi];
      L.def_coef[vi] = coef_sum[vi];
      row_used[static_cast<std::size_t>(last_row[vi])] = 1;
    }
  }
  int n = 0;
  for (int v = 0; v < nu; ++v)
    if (L.def_row[static_cast<std::size_t>(v)] < 0) L.kept[static_cast<std::size_t>(v)] = n++;

  // Each low-rank column f becomes a variable w = f'x with cost w^2/2.
  const int first_aux = n;
  n += static_cast<int>(prog.low_rank().size());
  L.n = n;

  L.c = Vec::Zero(n);
  L.P = Vec::Zero(n);
  for (int v = 0; v < nu; ++v) {
    const int k = L.kept[static_cast<std::size_t>(v)];
    if (k < 0) continue;
    L.c[k] = lin[static_cast<std::size_t>(v)];
    L.P[k] = hess[static_cast<std::size_t>(v)];
  }
  for (int k = first_aux; k < n; ++k) L.P[k] = 1.0;

  // Equalities not consumed by elimination.
  std::vector<Triplet> at;
  std::vector<double> bv;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (row_used[r]) continue;
    const int ir = static_cast<int>(bv.size());
    L.row_map[r] = ir;
    bv.push_back(rows[r].rhs);
    for (const auto& t : rows[r].terms) at.emplace_back(ir, L.kept[static_cast<std::size_t>(t.var)], t.coef);
  }
  for (std::size_t k = 0; k < prog.low_rank().size(); ++k) {
    const int ir = static_cast<int>(bv.size());
    bv.push_back(0.0);
    at.emplace_back(ir, first_aux + static_cast<int>(k), 1.0);
    for (const auto& t : prog.low_rank()[k]) at.emplace_back(ir, L.kept[static_cast<std::size_t>(t.var)], -t.coef);
  }
  L.p = static_cast<int>(bv.size());
  L.A.resize(L.p, n);
  L.A.setFromTriplets(at.begin(), at.end());
  L.b = Eigen::Map<Vec>(bv.data(), static_cast<Eigen::Index>(bv.size()));

  auto user_expr = [&](int v) {
    Expr e;
    const auto vi = static_cast<std::size_t>(v);
    if (L.kept[vi] >= 0) {
      e.terms.emplace_back(L.kept[vi], 1.0);
      return e;
    }
    const auto& row = rows[static_cast<std::size_t>(L.def_row[vi])];
    const double a = L.def_coef[vi];
    for (const auto& t : row.terms)
      if (t.var != v) e.terms.emplace_back(L.kept[static_cast<std::size_t>(t.var)], -t.coef / a);
    e.constant = row.rhs / a;
    return e;
  };

  // Cone rows: s = expr  ->  G row = -coefficients, h = constant.
  std::vector<Triplet> gt;
  std::vector<double> hv;
  auto emit = [&](const Expr& e) {
    const int r = static_cast<int>(hv.size());
    for (const auto& [col, coef] : e.terms) gt.emplace_back(r, col, -coef);
    hv.push_back(e.constant);
  };
  auto combine = [](const Expr& a, double sa, const Expr& b, double sb) {
    Expr e;
    for (const auto& [c, v] : a.terms) e.terms.emplace_back(c, sa * v);
    for (const auto& [c, v] : b.terms) e.terms.emplace_back(c, sb * v);
    e.constant = sa * a.constant + sb * b.constant;
    return e;
  };

  const auto& cones = prog.cones();
  L.cone_row.assign(cones.size(), -1);
  for (std::size_t k = 0; k < cones.size(); ++k) {
    if (cones[k].kind != ConeKind::Nonnegative) continue;
    L.cone_row[k] = static_cast<int>(hv.size());
    for (int v : cones[k].vars) emit(user_expr(v));
  }
  L.layout.nonneg = static_cast<int>(hv.size());
  const double r2 = 1.0 / std::sqrt(2.0);
  auto open_soc = [&](int dim) {
    L.layout.soc_start.push_back(static_cast<int>(hv.size()));
    L.layout.soc_dim.push_back(dim);
  };
  for (std::size_t k = 0; k < cones.size(); ++k) {
    const auto& cone = cones[k];
    if (cone.kind == ConeKind::Nonnegative) continue;
    L.cone_row[k] = static_cast<int>(hv.size());
    open_soc(static_cast<int>(cone.vars.size()));
    if (cone.kind == ConeKind::SecondOrder) {
      for (int v : cone.vars) emit(user_expr(v));
    } else {
      const Expr a = user_expr(cone.vars[0]);
      const Expr b = user_expr(cone.vars[1]);
      emit(combine(a, r2, b, r2));
      emit(combine(a, r2, b, -r2));
      for (std::size_t i = 2; i < cone.vars.size(); ++i) emit(user_expr(cone.vars[i]));
    }
  }
  L.layout.rows = static_cast<int>(hv.size());
  L.G.resize(L.layout.rows, n);
  L.G.setFromTriplets(gt.begin(), gt.end());
  L.h = Eigen::Map<Vec>(hv.data(), static_cast<Eigen::Index>(hv.size()));
  return L;
}

// ---- cone arithmetic -------------------------------------------------------

double soc_residual(const double* v, int dim) {
  double tail = 0.0;
  for (int i = 1; i < dim; ++i) tail += v[i] * v[i];
  tail = std::sqrt(tail);
  return (v[0] - tail) * (v[0] + tail);
}

// Smallest alpha >= 0 at which u + alpha*d leaves the cone.
double soc_step(const double* u, const double* d, int dim) {
  double a = d[0] * d[0];
  double b = u[0] * d[0];
  double c = u[0] * u[0];
  for (int i = 1; i < dim; ++i) {
    a -= d[i] * d[i];
    b -= u[i] * d[i];
    c -= u[i] * u[i];
  }
  double alpha = kInf;
  if (d[0] < 0.0) alpha = -u[0] / d[0];
  // f(alpha) = a alpha^2 + 2 b alpha + c, c > 0.
  if (a == 0.0) {
    if (b < 0.0) alpha = std::min(alpha, -c / (2.0 * b));
    return alpha;
  }
  const double disc = b * b - a * c;
  if (disc < 0.0) return alpha;
  const double sq = std::sqrt(disc);
  const double q = -(b + (b >= 0.0 ? sq : -sq));
  double roots[2] = {q / a, q != 0.0 ? c / q : kInf};
  for (double r : roots)
    if (r > 0.0) alpha = std::min(alpha, r);
  return alpha;
}

double max_step(const ConeLayout& K, const Vec& u, const Vec& du) {
  double alpha = kInf;
  for (int i = 0; i < K.nonneg; ++i)
    if (du[i] < 0.0) alpha = std::min(alpha, -u[i] / du[i]);
  for (std::size_t k = 0; k < K.soc_dim.size(); ++k)
    alpha = std::min(alpha, soc_step(u.data() + K.soc_start[k], du.data() + K.soc_start[k], K.soc_dim[k]));
  return alpha;
}

void shift_interior(const ConeLayout& K, Vec& v) {
  double alpha = -kInf;
  for (int i = 0; i < K.nonneg; ++i) alpha = std::max(alpha, -v[i]);
  for (std::size_t k = 0; k < K.soc_dim.size(); ++k) {
    const int s = K.soc_start[k];
    double tail = 0.0;
    for (int i = 1; i < K.soc_dim[k]; ++i) tail += v[s + i] * v[s + i];
    alpha = std::max(alpha, std::sqrt(tail) - v[s]);
  }
  if (alpha < 0.0) return;
  const double shift = 1.0 + alpha;
  for (int i = 0; i < K.nonneg; ++i) v[i] += shift;
  for (int s : K.soc_start) v[s] += shift;
}

Vec identity_element(const ConeLayout& K) {
  Vec e = Vec::Zero(K.rows);
  for (int i = 0; i < K.nonneg; ++i) e[i] = 1.0;
  for (int s : K.soc_start) e[s] = 1.0;
  return e;
}

Vec jordan_product(const ConeLayout& K, const Vec& u, const Vec& v) {
  Vec w(K.rows);
  for (int i = 0; i < K.nonneg; ++i) w[i] = u[i] * v[i];
  for (std::size_t k = 0; k < K.soc_dim.size(); ++k) {
    const int s = K.soc_start[k];
    const int dim = K.soc_dim[k];
    w[s] = u.segment(s, dim).dot(v.segment(s, dim));
    w.segment(s + 1, dim - 1) = u[s] * v.segment(s + 1, dim - 1) + v[s] * u.segment(s + 1, dim - 1);
  }
  return w;
}

// Solves lambda o x = v.
Vec jordan_divide(const ConeLayout& K, const Vec& lambda, const Vec& v) {
  Vec x(K.rows);
  for (int i = 0; i < K.nonneg; ++i) x[i] = v[i] / lambda[i];
  for (std::size_t k = 0; k < K.soc_dim.size(); ++k) {
    const int s = K.soc_start[k];
    const int dim = K.soc_dim[k];
    const double l0 = lambda[s];
    const auto l1 = lambda.segment(s + 1, dim - 1);
    const double det = l0 * l0 - l1.squaredNorm();
    const double x0 = (l0 * v[s] - l1.dot(v.segment(s + 1, dim - 1))) / det;
    x[s] = x0;
    x.segment(s + 1, dim - 1) = (v.segment(s + 1, dim - 1) - x0 * l1) / l0;
  }
  return x;
}

// Nesterov-Todd scaling: W z = W^{-1} s = lambda.
struct Scaling {
  Vec nonneg;                 // sqrt(s/z)
  std::vector<double> eta;    // per SOC
  std::vector<Vec> wbar;      // per SOC, hyperbolic unit vector

  // False when s or z has left the cone interior numerically.
  bool compute(const ConeLayout& K, const Vec& s, const Vec& z) {
    nonneg = (s.head(K.nonneg).array() / z.head(K.nonneg).array()).sqrt();
    const auto nsoc = K.soc_dim.size();
    eta.resize(nsoc);
    wbar.resize(nsoc);
    for (std::size_t k = 0; k < nsoc; ++k) {
      const int st = K.soc_start[k];
      const int dim = K.soc_dim[k];
      const double sres = soc_residual(s.data() + st, dim);
      const double zres = soc_residual(z.data() + st, dim);
      if (!(sres > 0.0 && zres > 0.0)) return false;
      const Vec sb = s.segment(st, dim) / std::sqrt(sres);
      const Vec zb = z.segment(st, dim) / std::sqrt(zres);
      const double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
      Vec w(dim);
      w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
      w.tail(dim - 1) = (sb.tail(dim - 1) - zb.tail(dim - 1)) / (2.0 * gamma);
      wbar[k] = w;
      eta[k] = std::pow(sres / zres, 0.25);
    }
    return nonneg.allFinite();
  }

  // out = W v (inverse = false) or W^{-1} v.
  void apply(const ConeLayout& K, const Vec& v, Vec& out, bool inverse) const {
    out.resize(K.rows);
    for (int i = 0; i < K.nonneg; ++i) out[i] = inverse ? v[i] / nonneg[i] : v[i] * nonneg[i];
    for (std::size_t k = 0; k < K.soc_dim.size(); ++k) {
      const int st = K.soc_start[k];
      const int dim = K.soc_dim[k];
      const Vec& w = wbar[k];
      const double sign = inverse ? -1.0 : 1.0;
      const double scale = inverse ? 1.0 / eta[k] : eta[k];
      const auto v1 = v.segment(st + 1, dim - 1);
      const auto w1 = w.tail(dim - 1);
      const double dot = w1.dot(v1);
      const double v0 = v[st];
      out[st] = scale * (w[0] * v0 + sign * dot);
      out.segment(st + 1, dim - 1) = scale * (v1 + (dot / (1.0 + w[0]) + sign * v0) * w1);
    }
  }

  [[nodiscard]] Vec W(const ConeLayout& K, const Vec& v) const {
    Vec out;
    apply(K, v, out, false);
    return out;
  }
  [[nodiscard]] Vec Winv(const ConeLayout& K, const Vec& v) const {
    Vec out;
    apply(K, v, out, true);
    return out;
  }

  // Dense W^2 block of SOC k.
  [[nodiscard]] Eigen::MatrixXd soc_block(std::size_t k) const {
    const Vec& w = wbar[k];
    const auto dim = w.size();
    Eigen::MatrixXd Wm(dim, dim);
    Wm(0, 0) = w[0];
    Wm.block(0, 1, 1, dim - 1) = w.tail(dim - 1).transpose();
    Wm.block(1, 0, dim - 1, 1) = w.tail(dim - 1);
    Wm.block(1, 1, dim - 1, dim - 1) = Eigen::MatrixXd::Identity(dim - 1, dim - 1) +
                                       w.tail(dim - 1) * w.tail(dim - 1).transpose() / (1.0 + w[0]);
    return eta[k] * eta[k] * (Wm * Wm);
  }
};

// ---- KKT system ------------------------------------------------------------

class Kkt {
 public:
  Kkt(const Lifted& L, double reg) : L_(L), reg_(reg) {
    const int n = L.n, p = L.p, m = L.layout.rows;
    dim_ = n + p + m;
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(n + p + m) + static_cast<std::size_t>(L.A.nonZeros() + L.G.nonZeros()));
    for (int i = 0; i < n; ++i) t.emplace_back(i, i, L.P[i] + reg);
    for (int i = 0; i < p; ++i) t.emplace_back(n + i, n + i, -reg);
    for (int j = 0; j < L.A.outerSize(); ++j)
      for (SpMat::InnerIterator it(L.A, j); it; ++it) t.emplace_back(n + it.row(), j, it.value());
    for (int j = 0; j < L.G.outerSize(); ++j)
      for (SpMat::InnerIterator it(L.G, j); it; ++it) t.emplace_back(n + p + it.row(), j, it.value());
    const int z0 = n + p;
    for (int i = 0; i < L.layout.nonneg; ++i) t.emplace_back(z0 + i, z0 + i, -1.0);
    for (std::size_t k = 0; k < L.layout.soc_dim.size(); ++k) {
      const int st = z0 + L.layout.soc_start[k];
      const int d = L.layout.soc_dim[k];
      for (int c = 0; c < d; ++c)
        for (int r = c; r < d; ++r) t.emplace_back(st + r, st + c, r == c ? -1.0 : 0.0);
    }
    K_.resize(dim_, dim_);
    K_.setFromTriplets(t.begin(), t.end());
    K_.makeCompressed();
    nonneg_slots_.resize(static_cast<std::size_t>(L.layout.nonneg));
    for (int i = 0; i < L.layout.nonneg; ++i) nonneg_slots_[static_cast<std::size_t>(i)] = &K_.coeffRef(z0 + i, z0 + i);
    for (int i = 0; i < n + p; ++i) diag_slots_.push_back(&K_.coeffRef(i, i));
    soc_slots_.resize(L.layout.soc_dim.size());
    for (std::size_t k = 0; k < L.layout.soc_dim.size(); ++k) {
      const int st = z0 + L.layout.soc_start[k];
      const int d = L.layout.soc_dim[k];
      for (int c = 0; c < d; ++c)
        for (int r = c; r < d; ++r) soc_slots_[k].push_back(&K_.coeffRef(st + r, st + c));
    }
    // Fill-reducing ordering, then a map from K_ storage to the permuted
    // upper triangle so refactorization only copies values.
    Eigen::AMDOrdering<int> amd;
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    amd(K_, pinv);
    perm_ = pinv.inverse();
    SpMat tagged = K_;
    for (Eigen::Index e = 0; e < tagged.nonZeros(); ++e) tagged.valuePtr()[e] = static_cast<double>(e) + 1.0;
    Kp_.resize(dim_, dim_);
    Kp_.selfadjointView<Eigen::Upper>() = tagged.selfadjointView<Eigen::Lower>().twistedBy(perm_);
    Kp_.makeCompressed();
    slot_map_.assign(static_cast<std::size_t>(K_.nonZeros()), 0);
    for (Eigen::Index e = 0; e < Kp_.nonZeros(); ++e)
      slot_map_[static_cast<std::size_t>(Kp_.valuePtr()[e] - 1.0)] = static_cast<int>(e);
    signs_.assign(static_cast<std::size_t>(dim_), -1);
    for (int i = 0; i < n; ++i) signs_[static_cast<std::size_t>(perm_.indices()[i])] = 1;
    ldl_.analyze(Kp_);
  }

  /// Scales the static regularization; false once it reaches `limit`.
  bool raise_regularization(double factor, double limit) {
    if (reg_ * factor > limit) return false;
    reg_ *= factor;
    for (int i = 0; i < L_.n; ++i) *diag_slots_[static_cast<std::size_t>(i)] = L_.P[i] + reg_;
    for (int i = 0; i < L_.p; ++i) *diag_slots_[static_cast<std::size_t>(L_.n + i)] = -reg_;
    return true;
  }

  bool factor(const Scaling* S) {
    scaling_ = S;
    for (std::size_t i = 0; i < nonneg_slots_.size(); ++i) {
      const double w = S ? S->nonneg[static_cast<Eigen::Index>(i)] : 1.0;
      *nonneg_slots_[i] = -w * w - reg_;
    }
    for (std::size_t k = 0; k < soc_slots_.size(); ++k) {
      const int d = L_.layout.soc_dim[k];
      Eigen::MatrixXd B = S ? S->soc_block(k) : Eigen::MatrixXd::Identity(d, d);
      std::size_t idx = 0;
      for (int c = 0; c < d; ++c)
        for (int r = c; r < d; ++r) *soc_slots_[k][idx++] = -B(r, c) - (r == c ? reg_ : 0.0);
    }
    for (std::size_t e = 0; e < slot_map_.size(); ++e) Kp_.valuePtr()[slot_map_[e]] = K_.valuePtr()[e];
    return ldl_.factor(Kp_, signs_, 1e-13, 1e-7) >= 0;
  }

  // Solves the unregularised system with iterative refinement.
  Vec solve(const Vec& rhs, int refinement) const {
    Vec x = ldl_solve(rhs);
    const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
    for (int it = 0; it < refinement; ++it) {
      const Vec r = rhs - apply(x);
      if (r.lpNorm<Eigen::Infinity>() < 1e-14 * scale) break;
      x += ldl_solve(r);
    }
    return x;
  }

 private:
  Vec ldl_solve(const Vec& rhs) const {
    Vec b = perm_ * rhs;
    ldl_.solve_in_place(b);
    return perm_.inverse() * b;
  }

  Vec apply(const Vec& v) const {
    const int n = L_.n, p = L_.p, m = L_.layout.rows;
    Vec out(dim_);
    const auto vx = v.head(n);
    const auto vy = v.segment(n, p);
    const Vec vz = v.tail(m);
    out.head(n) = L_.P.cwiseProduct(vx) + L_.A.transpose() * vy + L_.G.transpose() * vz;
    out.segment(n, p) = L_.A * vx;
    Vec w2;
    if (scaling_) {
      w2 = scaling_->W(L_.layout, scaling_->W(L_.layout, vz));
    } else {
      w2 = vz;
    }
    out.tail(m) = L_.G * vx - w2;
    return out;
  }

  const Lifted& L_;
  double reg_;
  int dim_ = 0;
  SpMat K_;
  std::vector<double*> diag_slots_, nonneg_slots_;
  std::vector<std::vector<double*>> soc_slots_;
  SpMat Kp_;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm_;
  std::vector<int> slot_map_;
  std::vector<int> signs_;
  detail::QuasiDefiniteLdl ldl_;
  const Scaling* scaling_ = nullptr;
};

// Ruiz equilibration of [A; G]; SOC rows share one scale.
struct Equilibration {
  Vec col;  // D
  Vec row_a;
  Vec row_g;
};

Equilibration equilibrate(Lifted& L, int passes) {
  Equilibration E;
  E.col = Vec::Ones(L.n);
  E.row_a = Vec::Ones(L.p);
  E.row_g = Vec::Ones(L.layout.rows);
  auto clamp = [](double v) { return v <= 1e-8 ? 1.0 : std::clamp(v, 1e-4, 1e4); };
  for (int pass = 0; pass < passes; ++pass) {
    Vec cn = Vec::Zero(L.n), ra = Vec::Zero(L.p), rg = Vec::Zero(L.layout.rows);
    for (int j = 0; j < L.n; ++j) {
      for (SpMat::InnerIterator it(L.A, j); it; ++it) {
        cn[j] = std::max(cn[j], std::abs(it.value()));
        ra[it.row()] = std::max(ra[it.row()], std::abs(it.value()));
      }
      for (SpMat::InnerIterator it(L.G, j); it; ++it) {
        cn[j] = std::max(cn[j], std::abs(it.value()));
        rg[it.row()] = std::max(rg[it.row()], std::abs(it.value()));
      }
    }
    for (std::size_t k = 0; k < L.layout.soc_dim.size(); ++k) {
      const int st = L.layout.soc_start[k];
      const double mx = rg.segment(st, L.layout.soc_dim[k]).maxCoeff();
      rg.segment(st, L.layout.soc_dim[k]).setConstant(mx);
    }
    Vec dc(L.n), da(L.p), dg(L.layout.rows);
    for (int j = 0; j < L.n; ++j) dc[j] = 1.0 / std::sqrt(clamp(cn[j]));
    for (int i = 0; i < L.p; ++i) da[i] = 1.0 / std::sqrt(clamp(ra[i]));
    for (int i = 0; i < L.layout.rows; ++i) dg[i] = 1.0 / std::sqrt(clamp(rg[i]));
    L.A = da.asDiagonal() * L.A * dc.asDiagonal();
    L.G = dg.asDiagonal() * L.G * dc.asDiagonal();
    E.col.array() *= dc.array();
    E.row_a.array() *= da.array();
    E.row_g.array() *= dg.array();
  }
  L.c = E.col.asDiagonal() * L.c;
  L.P = L.P.cwiseProduct(E.col).cwiseProduct(E.col);
  L.b = E.row_a.asDiagonal() * L.b;
  L.h = E.row_g.asDiagonal() * L.h;
  return E;
}

struct Iterate {
  Vec x, y, z, s;
  double tau = 1.0, kappa = 1.0;
};

}  // namespace

Solution solve(const ConicProgram& prog, const SolverOptions& opt) {
  const auto t_start = std::chrono::steady_clock::now();
  prog.validate();
  Lifted L = lift(prog);
  // Norms of the unscaled data for the stopping criteria.
  const double nb = std::max(1.0, L.b.norm());
  const double nh = std::max(1.0, L.h.norm());
  const double nc = std::max(1.0, L.c.norm());
  const Equilibration E = equilibrate(L, opt.equilibration_passes);
  const ConeLayout& K = L.layout;
  const int n = L.n, p = L.p, m = K.rows;

  Kkt kkt(L, opt.static_regularization);
  Solution sol;

  Iterate it;
  it.x = Vec::Zero(n);
  it.y = Vec::Zero(p);
  it.z = Vec::Zero(m);
  it.s = Vec::Zero(m);
  if (!kkt.factor(nullptr)) throw std::runtime_error("KKT factorization failed at initialization");
  {
    Vec rhs(n + p + m);
    rhs << Vec::Zero(n), L.b, L.h;
    const Vec v = kkt.solve(rhs, opt.refinement_steps);
    it.x = v.head(n);
    it.s = -v.tail(m);
    shift_interior(K, it.s);
    rhs << -L.c, Vec::Zero(p), Vec::Zero(m);
    const Vec w = kkt.solve(rhs, opt.refinement_steps);
    it.y = w.segment(n, p);
    it.z = w.tail(m);
    shift_interior(K, it.z);
  }

  const Vec e = identity_element(K);
  const int degree = K.degree();
  Scaling S;
  Iterate best = it;
  double best_merit = kInf;
  Status status = Status::IterLimit;
  KktResiduals reported{kInf, kInf, kInf};
  int iter = 0;
  int stall = 0;

  auto unscaled_norms = [&](const Vec& rx, const Vec& ry, const Vec& rz) {
    const double dx = (rx.array() / E.col.array()).matrix().norm();
    const double dy = (ry.array() / E.row_a.array()).matrix().norm();
    const double dz = (rz.array() / E.row_g.array()).matrix().norm();
    return std::array<double, 3>{dx, dy, dz};
  };

  for (;; ++iter) {
    const Vec px = L.P.cwiseProduct(it.x);
    const double xpx = it.x.dot(px);
    const Vec rx = px + L.A.transpose() * it.y + L.G.transpose() * it.z + L.c * it.tau;
    const Vec ry = L.A * it.x - L.b * it.tau;
    const Vec rz = it.s + L.G * it.x - L.h * it.tau;
    const double cx = L.c.dot(it.x);
    const double by_hz = L.b.dot(it.y) + L.h.dot(it.z);
    const double rtau = it.kappa + cx + by_hz + xpx / it.tau;

    const auto [nrx, nry, nrz] = unscaled_norms(rx, ry, rz);
    const double pres = std::max(nry / nb, nrz / nh) / it.tau;
    const double dres = nrx / nc / it.tau;
    const double gap = it.s.dot(it.z) / (it.tau * it.tau);
    const double pcost = (cx + 0.5 * xpx / it.tau) / it.tau;
    const double dcost = -(by_hz + 0.5 * xpx / it.tau) / it.tau;
    const double relgap = gap / std::max(1.0, std::min(std::abs(pcost), std::abs(dcost)));
    const double merit = std::max({pres, dres, std::min(gap, relgap)});
    if (merit < best_merit) {
      if (merit < 0.9 * best_merit) stall = 0;
      best_merit = merit;
      best = it;
      reported = {pres, dres, std::min(gap, relgap)};
    }
    trace(opt, "%3d pcost %+.8e dcost %+.8e gap %.2e pres %.2e dres %.2e tau %.2e kap %.2e\n", iter,
          pcost, dcost, gap, pres, dres, it.tau, it.kappa);

    if (pres < opt.tol && dres < opt.tol && (gap < opt.tol || relgap < opt.tol)) {
      status = Status::Optimal;
      best = it;
      reported = {pres, dres, std::min(gap, relgap)};
      break;
    }
    // Infeasibility certificates (homogeneous directions).
    const Vec aty_gtz = L.A.transpose() * it.y + L.G.transpose() * it.z;
    if (by_hz < 0.0) {
      const double dinf = (aty_gtz.array() / E.col.array()).matrix().norm() / nc / -by_hz;
      if (dinf < opt.tol) {
        status = Status::Infeasible;
        best = it;
        break;
      }
    }
    if (cx < 0.0) {
      const Vec ax = L.A * it.x;
      const Vec gxs = L.G * it.x + it.s;
      const auto [u0, uy, uz] = unscaled_norms(Vec::Zero(n), ax, gxs);
      (void)u0;
      const double upx = (px.array() / E.col.array()).matrix().norm();
      const double pinf = std::max({uy / nb, uz / nh, upx / nc}) / -cx;
      if (pinf < opt.tol) {
        status = Status::Unbounded;
        best = it;
        break;
      }
    }
    if (iter >= opt.max_iterations) break;

    if (!S.compute(K, it.s, it.z)) {
      trace(opt, "stop: scaling failed\n");
      break;
    }
    const Vec lambda = S.W(K, it.z);

    Vec rhs1(n + p + m);
    rhs1 << -L.c, L.b, L.h;
    Vec sol1;
    bool factored = false;
    for (;;) {
      if (kkt.factor(&S)) {
        sol1 = kkt.solve(rhs1, opt.refinement_steps);
        if (sol1.allFinite()) {
          factored = true;
          break;
        }
      }
      if (!kkt.raise_regularization(100.0, 1e-5)) break;
      trace(opt, "regularization raised\n");
    }
    if (!factored) {
      trace(opt, "stop: non-finite direction\n");
      break;
    }
    // Linearization of x'Px/tau in the tau equation.
    const Vec cq = L.c + 2.0 * px / it.tau;
    const double xi_p_xi = xpx / (it.tau * it.tau);
    const double denom_base =
        cq.dot(sol1.head(n)) + L.b.dot(sol1.segment(n, p)) + L.h.dot(sol1.tail(m)) - xi_p_xi;

    struct Direction {
      Vec dx, dy, dz, ds;
      double dtau = 0.0, dkappa = 0.0;
    };
    auto direction = [&](double sigma, const Vec& ds_target, double dk_target) {
      const Vec wl = S.W(K, jordan_divide(K, lambda, ds_target));
      Vec rhs2(n + p + m);
      rhs2 << -(1.0 - sigma) * rx, -(1.0 - sigma) * ry, -(1.0 - sigma) * rz - wl;
      const Vec sol2 = kkt.solve(rhs2, opt.refinement_steps);
      Direction d;
      const double num = -(1.0 - sigma) * rtau - dk_target / it.tau -
                         (cq.dot(sol2.head(n)) + L.b.dot(sol2.segment(n, p)) + L.h.dot(sol2.tail(m)));
      d.dtau = num / (denom_base - it.kappa / it.tau);
      d.dx = sol2.head(n) + d.dtau * sol1.head(n);
      d.dy = sol2.segment(n, p) + d.dtau * sol1.segment(n, p);
      d.dz = sol2.tail(m) + d.dtau * sol1.tail(m);
      // ds = W (lambda \ ds_target - W dz)
      d.ds = S.W(K, jordan_divide(K, lambda, ds_target) - S.W(K, d.dz));
      d.dkappa = (dk_target - it.kappa * d.dtau) / it.tau;
      return d;
    };
    auto step_length = [&](const Direction& d) {
      double a = std::min(max_step(K, it.s, d.ds), max_step(K, it.z, d.dz));
      if (d.dtau < 0.0) a = std::min(a, -it.tau / d.dtau);
      if (d.dkappa < 0.0) a = std::min(a, -it.kappa / d.dkappa);
      return a;
    };

    // Predictor.
    const Vec ll = jordan_product(K, lambda, lambda);
    const Direction aff = direction(0.0, -ll, -it.tau * it.kappa);
    const double alpha_aff = std::min(1.0, step_length(aff));
    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), 1e-4, 1.0);
    const double mu = (it.s.dot(it.z) + it.tau * it.kappa) / (degree + 1);

    // Corrector.
    const Vec corr = jordan_product(K, S.Winv(K, aff.ds), S.W(K, aff.dz));
    const Vec ds_target = -ll - corr + sigma * mu * e;
    const double dk_target = -it.tau * it.kappa - aff.dtau * aff.dkappa + sigma * mu;
    const Direction d = direction(sigma, ds_target, dk_target);
    const double alpha = std::min(1.0, 0.99 * step_length(d));
    if (!(alpha > 1e-12)) {
      trace(opt, "stop: step length %.2e\n", alpha);
      break;
    }

    Iterate next = it;
    next.x += alpha * d.dx;
    next.y += alpha * d.dy;
    next.z += alpha * d.dz;
    next.s += alpha * d.ds;
    next.tau += alpha * d.dtau;
    next.kappa += alpha * d.dkappa;
    if (!next.x.allFinite() || !next.y.allFinite() || !next.z.allFinite() || !next.s.allFinite() ||
        !std::isfinite(next.tau) || !std::isfinite(next.kappa) || !(next.tau > 0.0)) {
      trace(opt, "stop: non-finite iterate\n");
      break;
    }
    it = std::move(next);
    if (++stall > 20) {
      trace(opt, "stop: no progress\n");
      break;
    }
  }

  if (status == Status::IterLimit && iter < opt.max_iterations && reported.max() < opt.near_tol)
    status = Status::NearOptimal;

  // Map back to the user program.
  const Iterate& f = best;
  const bool has_point = status == Status::Optimal || status == Status::NearOptimal || status == Status::IterLimit;
  const double scale = has_point ? 1.0 / f.tau : 1.0;
  const Vec x = (E.col.array() * f.x.array()).matrix() * scale;
  const Vec y = (E.row_a.array() * f.y.array()).matrix() * scale;
  const Vec z = (E.row_g.array() * f.z.array()).matrix() * scale;

  const int nu = prog.num_variables();
  const auto& rows = prog.equalities();
  sol.x.assign(static_cast<std::size_t>(nu), 0.0);
  sol.y.assign(rows.size(), 0.0);
  sol.z.assign(static_cast<std::size_t>(nu), 0.0);
  for (int v = 0; v < nu; ++v)
    if (L.kept[static_cast<std::size_t>(v)] >= 0) sol.x[static_cast<std::size_t>(v)] = x[L.kept[static_cast<std::size_t>(v)]];
  for (int v = 0; v < nu; ++v) {
    const auto vi = static_cast<std::size_t>(v);
    if (L.kept[vi] >= 0) continue;
    const auto& row = rows[static_cast<std::size_t>(L.def_row[vi])];
    double acc = row.rhs;
    for (const auto& t : row.terms)
      if (t.var != v) acc -= t.coef * sol.x[static_cast<std::size_t>(t.var)];
    sol.x[vi] = acc / L.def_coef[vi];
  }
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (L.row_map[r] >= 0) sol.y[r] = -y[L.row_map[r]];
  const double r2 = 1.0 / std::sqrt(2.0);
  const auto& cones = prog.cones();
  for (std::size_t k = 0; k < cones.size(); ++k) {
    const int st = L.cone_row[k];
    const auto& vars = cones[k].vars;
    for (std::size_t i = 0; i < vars.size(); ++i) sol.z[static_cast<std::size_t>(vars[i])] = z[st + static_cast<int>(i)];
    if (cones[k].kind == ConeKind::RotatedSecondOrder) {
      const double z0 = z[st], z1 = z[st + 1];
      sol.z[static_cast<std::size_t>(vars[0])] = r2 * (z0 + z1);
      sol.z[static_cast<std::size_t>(vars[1])] = r2 * (z0 - z1);
    }
  }
  for (int v = 0; v < nu; ++v) {
    const auto vi = static_cast<std::size_t>(v);
    if (L.kept[vi] < 0) sol.y[static_cast<std::size_t>(L.def_row[vi])] = -sol.z[vi] / L.def_coef[vi];
  }

  sol.status = status;
  sol.objective = has_point ? prog.objective(sol.x) : status == Status::Infeasible ? kInf : -kInf;
  sol.residuals = reported;
  sol.iterations = iter;
  sol.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return sol;
}

}  // namespace adn::conic
