#pragma once

// Moment optimization: the stochastic control problem restated over the
// means (tilde) and standard deviations (hat) of controls, network states and
// EU energy under the affine policy u_k = u0_k + K_w xi_k.
//
// Time grid: step k covers [k dt, (k + 1) dt); x_k and u_k use xi at k dt,
// energy is defined at the step boundaries k = 0..N and follows the exact
// zero-order hold e_{k+1} = a e_k + b u_k.

#include "adn/case.hpp"
#include "adn/conic.hpp"
#include "adn/grid.hpp"
#include "adn/sde.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace adn::mo {

/// Standard normal quantile (Acklam's rational approximation plus one
/// Halley step). Requires 0 < p < 1.
double normal_quantile(double p);

/// Safety multiplier: sqrt(gamma / (1 - gamma)) for the distributionally
/// robust rule, the normal quantile for the Gaussian rule. Requires
/// 0.5 <= gamma < 1.
double kappa(double gamma, KappaRule rule);

/// Zero-order-hold coefficients of de/dt = -alpha e + beta p over dt.
struct Hold {
  double a = 1.0;
  double b = 0.0;
};
Hold exact_hold(double alpha, double beta, double dt);

struct AffinePolicy {
  double dt_hours = 0.0;
  int window_steps = 0;            ///< 0: one gain for the horizon
  Eigen::MatrixXd u0;              ///< steps x n_u
  std::vector<Eigen::MatrixXd> K;  ///< per window, n_u x n_xi

  [[nodiscard]] int steps() const { return static_cast<int>(u0.rows()); }
  [[nodiscard]] int n_u() const { return static_cast<int>(u0.cols()); }
  [[nodiscard]] int n_xi() const { return K.empty() ? 0 : static_cast<int>(K.front().cols()); }
  [[nodiscard]] int window_of(int k) const { return window_steps > 0 ? k / window_steps : 0; }
  [[nodiscard]] const Eigen::MatrixXd& gain(int k) const { return K[static_cast<std::size_t>(window_of(k))]; }
  /// u0_k + K_w xi.
  [[nodiscard]] Eigen::VectorXd control(int k, const Eigen::VectorXd& xi) const;
  /// Throws std::invalid_argument on inconsistent or non-finite entries.
  void validate() const;
};

void write_policy(std::ostream& out, const AffinePolicy& policy);
/// Throws std::runtime_error on malformed input.
AffinePolicy read_policy(std::istream& in);

struct MoOptions {
  /// false builds the deterministic problem: no gains, no hat variables and
  /// moments other than the mean ignored.
  bool feedback = true;
  /// Gains held at zero while keeping the hat variables.
  bool fix_gain_zero = false;
  /// Gains held at the given values (one n_u x n_xi matrix per window).
  std::vector<Eigen::MatrixXd> fixed_gains;
  /// When set, the mean terminal energy is fixed to these values in place of
  /// the terminal energy cost.
  Eigen::VectorXd terminal_energy;
};

/// Counts in the sense of the control model: decision and moment variables
/// (u0, K, tildes, hats) and model rows (each equality, bound and cone counts
/// once). Defining variables introduced by the standard form are excluded.
struct ModelSize {
  std::size_t variables = 0;
  std::size_t gain_entries = 0;
  std::size_t constraints = 0;
};

enum class RelaxedKind {
  ControlHat,  ///< u hat >= |K_w row N|
  EnergyHat,   ///< e hat >= |K row over the lifted eta block|
  StateHat,    ///< x hat >= |L row N|
  BranchFlow,  ///< l v >= P^2 + Q^2 + P hat^2 + Q hat^2
};

std::string to_string(RelaxedKind kind);

struct RelaxedRow {
  RelaxedKind kind = RelaxedKind::ControlHat;
  int step = 0;
  int index = 0;  ///< control, unit, x row or branch
  /// Hat rows: the hat variable and the norm entries. Branch rows: hat is
  /// l, entries are (v, P, Q, P hat, Q hat) as bare variables.
  int hat = -1;
  std::vector<conic::AffineExpr> entries;
};

/// Variable indices; -1 where a quantity is constant or absent.
struct MoLayout {
  int steps = 0;
  int n_u = 0;
  int n_xi = 0;
  int n_src = 0;
  int n_units = 0;
  int dim_x = 0;
  int n_branches = 0;
  int n_windows = 1;
  int window_steps = 0;
  std::vector<int> u0, u_mean, u_hat;  ///< [k * n_u + c]
  std::vector<int> K;                  ///< [(w * n_u + c) * n_xi + j]
  std::vector<int> x_mean, x_hat;      ///< [k * dim_x + r]
  std::vector<int> y_mean;             ///< [k * n_branches + b]
  std::vector<int> e_mean, e_hat;      ///< [k * n_units + i], k = 0..N
  Eigen::MatrixXd xi_mean;             ///< steps x n_xi
  Eigen::VectorXd e0;
  std::vector<Eigen::MatrixXd> fixed;  ///< gains held constant, when any

  [[nodiscard]] double fixed_gain(int w, int c, int j) const {
    return fixed.empty() ? 0.0 : fixed[static_cast<std::size_t>(w)](c, j);
  }
  [[nodiscard]] int gain_var(int w, int c, int j) const {
    return K.empty() ? -1 : K[static_cast<std::size_t>((w * n_u + c) * n_xi + j)];
  }
};

struct MoProgram {
  conic::ConicProgram program;
  MoLayout layout;
  ModelSize size;
  std::vector<RelaxedRow> relaxed;
  std::vector<conic::AffineExpr> bounds;  ///< inequality rows, each >= 0
  double kappa = 0.0;
};

/// Assembles the moment program. Throws std::invalid_argument when the
/// moments are shorter than the horizon, dimensions disagree or a moment
/// matrix is not positive semidefinite.
MoProgram build_mo(const grid::GridModel& grid, const grid::InjectionProfile& profile,
                   const sde::MomentTrajectory& moments, const sde::EUParams& eu, const CaseConfig& cfg,
                   const MoOptions& options = {});

/// Moments of `c.disturbance` over the case horizon with the case windows.
sde::MomentTrajectory case_moments(const Case& c);

/// Reads (u0, K) from an optimal solution and checks u~ = u0 + K xi~ to 1e-8.
/// Throws std::runtime_error when the solution is not optimal or the replay
/// fails.
AffinePolicy extract_policy(const MoProgram& mo, const conic::Solution& sol, double dt_hours);

struct RelaxationGroup {
  RelaxedKind kind = RelaxedKind::ControlHat;
  std::size_t rows = 0;
  double max = 0.0;
  double mean = 0.0;
};

struct RelaxationReport {
  std::vector<RelaxationGroup> groups;
  [[nodiscard]] double max() const;
  [[nodiscard]] const RelaxationGroup* group(RelaxedKind kind) const;
};

/// lhs - rhs of each relaxed equality at `sol`: hat - norm for hat rows and
/// l v - (P^2 + Q^2 + P hat^2 + Q hat^2) for branch rows.
RelaxationReport relaxation_residuals(const MoProgram& mo, const conic::Solution& sol);

struct TightenReport {
  std::size_t lowered = 0;        ///< hats moved down to their norm
  double objective_change = 0.0;  ///< new minus old objective
  double min_bound = 0.0;         ///< smallest inequality row after the move
  double min_branch = 0.0;        ///< smallest branch-flow residual after the move
};

/// Moves every hat variable down to its norm. Hats enter the bounds only
/// through kappa * hat on the restrictive side and the branch cones only on
/// the right-hand side, so the point stays feasible and the objective does
/// not increase; the report lets callers confirm both. Only the model
/// variables are updated, standard-form copies keep their solver values.
TightenReport tighten_hats(const MoProgram& mo, conic::Solution& sol);

struct MoResult {
  MoProgram mo;
  conic::Solution solution;
  AffinePolicy policy;  ///< empty when the solve did not reach optimality
  double build_seconds = 0.0;
};

/// Builds and solves the program for a case; `moments` must cover the case
/// horizon.
MoResult solve_case(const Case& c, const sde::MomentTrajectory& moments, const MoOptions& options = {},
                    const conic::SolverOptions& solver = {});

}  // namespace adn::mo
