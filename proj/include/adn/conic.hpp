#pragma once

// Conic program representation and solvers.
//
// Programs are stated in variable-slice standard form:
//
//   minimize    1/2 x' (D + F F') x + c' x + c0
//   subject to  A x = b
//               x[slice_k] in K_k   for every cone k
//
// where D is diagonal and nonnegative, F is a sparse low-rank factor and
// every K_k is the nonnegative orthant, the second-order cone
// {(t, w) : t >= |w|} or the rotated cone {(a, b, w) : 2ab >= |w|^2, a, b >= 0}.
// A variable belongs to at most one cone; variables outside every cone are
// free.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace adn::conic {

enum class ConeKind { Nonnegative, SecondOrder, RotatedSecondOrder };

std::string_view to_string(ConeKind kind);

struct Term {
  int var = 0;
  double coef = 0.0;

  friend bool operator==(const Term&, const Term&) = default;
};

/// Affine expression sum(coef * x[var]) + constant.
struct AffineExpr {
  std::vector<Term> terms;
  double constant = 0.0;

  AffineExpr() = default;
  explicit AffineExpr(double c) : constant(c) {}
  static AffineExpr variable(int var, double coef = 1.0) {
    AffineExpr e;
    e.terms.push_back({var, coef});
    return e;
  }
  AffineExpr& add(int var, double coef) {
    if (coef != 0.0) terms.push_back({var, coef});
    return *this;
  }
  AffineExpr& add(const AffineExpr& other, double scale = 1.0);
  AffineExpr& operator+=(double c) {
    constant += c;
    return *this;
  }
  [[nodiscard]] double evaluate(const std::vector<double>& x) const;
};

struct Cone {
  ConeKind kind = ConeKind::Nonnegative;
  std::vector<int> vars;

  friend bool operator==(const Cone&, const Cone&) = default;
};

struct LinearRow {
  std::vector<Term> terms;
  double rhs = 0.0;

  friend bool operator==(const LinearRow&, const LinearRow&) = default;
};

/// Counts used when comparing formulations.
struct ProblemSize {
  std::size_t variables = 0;
  std::size_t equality_rows = 0;
  std::size_t cones = 0;
  std::size_t cone_entries = 0;

  [[nodiscard]] std::size_t constraints() const { return equality_rows + cones; }
};

class ConicProgram {
 public:
  int add_variable(double linear_cost = 0.0);
  /// Adds `count` free variables and returns the index of the first one.
  int add_variables(int count);

  void add_linear_cost(int var, double c);
  /// Adds weight * x^2 to the objective (weight >= 0).
  void add_square_cost(int var, double weight);
  /// Adds 1/2 * (f' x)^2 as one low-rank column.
  void add_low_rank_column(std::vector<Term> column);
  void add_constant_cost(double c) { constant_ += c; }

  /// Adds sum(terms) == rhs and returns the row index.
  int add_equality(std::vector<Term> terms, double rhs);
  int add_cone(ConeKind kind, std::vector<int> vars);

  /// Introduces a variable v constrained by v == expr.
  int define(const AffineExpr& expr);
  /// Places each expression in one cone, creating defining variables for
  /// entries that are not a bare, cone-free variable.
  int add_cone_exprs(ConeKind kind, const std::vector<AffineExpr>& exprs);
  /// expr >= 0.
  int add_nonneg(const AffineExpr& expr) { return add_cone_exprs(ConeKind::Nonnegative, {expr}); }

  [[nodiscard]] int num_variables() const { return static_cast<int>(linear_.size()); }
  [[nodiscard]] const std::vector<double>& linear_cost() const { return linear_; }
  [[nodiscard]] const std::vector<double>& hessian_diagonal() const { return hess_diag_; }
  [[nodiscard]] const std::vector<std::vector<Term>>& low_rank() const { return low_rank_; }
  [[nodiscard]] double constant_cost() const { return constant_; }
  [[nodiscard]] const std::vector<LinearRow>& equalities() const { return rows_; }
  [[nodiscard]] const std::vector<Cone>& cones() const { return cones_; }
  /// Cone index owning `var`, or -1 when free.
  [[nodiscard]] int cone_of(int var) const { return cone_of_[static_cast<std::size_t>(var)]; }

  [[nodiscard]] double objective(const std::vector<double>& x) const;
  [[nodiscard]] ProblemSize size() const;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  friend bool operator==(const ConicProgram&, const ConicProgram&) = default;

 private:
  std::vector<double> linear_;
  std::vector<double> hess_diag_;
  std::vector<int> cone_of_;
  std::vector<std::vector<Term>> low_rank_;
  double constant_ = 0.0;
  std::vector<LinearRow> rows_;
  std::vector<Cone> cones_;
};

/// NearOptimal: the iteration stalled before `tol` with every residual below
/// `near_tol`.
enum class Status { Optimal, NearOptimal, Infeasible, Unbounded, IterLimit };

std::string_view to_string(Status status);

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;

  [[nodiscard]] double max() const;
};

struct Solution {
  Status status = Status::IterLimit;
  std::vector<double> x;  ///< primal values, one per variable
  std::vector<double> y;  ///< equality multipliers, one per row
  std::vector<double> z;  ///< cone multipliers, indexed by variable (0 for free)
  double objective = std::numeric_limits<double>::quiet_NaN();
  KktResiduals residuals;
  int iterations = 0;
  double wall_seconds = 0.0;

  /// Optimal or NearOptimal.
  [[nodiscard]] bool optimal() const { return status == Status::Optimal || status == Status::NearOptimal; }
};

struct SolverOptions {
  double tol = 1e-8;
  double near_tol = 1e-6;
  int max_iterations = 200;
  int equilibration_passes = 10;
  double static_regularization = 1e-9;
  int refinement_steps = 4;
  bool verbose = false;  ///< iteration log on stderr
  /// Receives the iteration log lines when set.
  std::function<void(const std::string&)> log;
};

/// Embedded homogeneous self-dual primal-dual interior-point solver with
/// Nesterov-Todd scaling and Mehrotra correction.
Solution solve(const ConicProgram& prog, const SolverOptions& options = {});

/// Residual norms of the optimality conditions
///   A x = b, x_K in K, Qx + c - A'y - z = 0, z_K in K*, x_K' z_K = 0,
/// scaled by max(1, |b|), max(1, |c|) and max(1, |objective|).
KktResiduals kkt_residuals(const ConicProgram& prog, const Solution& sol);

// Sparse text exchange format (see docs/conic_format.md).
void write_program(std::ostream& out, const ConicProgram& prog);
ConicProgram read_program(std::istream& in);
void write_solution(std::ostream& out, const Solution& sol);
Solution read_solution(std::istream& in);

/// Solves through an external process: the program is written to a
/// temporary file, `command <program> <solution>` is run and the solution
/// file read back. Throws std::runtime_error when the command fails.
Solution solve_external(const ConicProgram& prog, const std::string& command);

}  // namespace adn::conic
