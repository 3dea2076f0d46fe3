#pragma once

// Monte Carlo evaluation of control policies on the exact distFlow model.

#include "adn/case.hpp"
#include "adn/mo.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace adn::eval {

/// Control decision for step k of one scenario from the realized
/// disturbance xi_k and unit energy e_k. Must be thread-safe. An empty result
/// holds the previous control (zero at k = 0) and counts as a control failure.
using ControlLaw =
    std::function<std::optional<Eigen::VectorXd>(int k, const Eigen::VectorXd& xi, const Eigen::VectorXd& e)>;

/// u_k = u0_k + K_w xi_k.
ControlLaw affine_law(const mo::AffinePolicy& policy);

enum class Family { Voltage, Current, Energy, UnitPower, SourceCapacity };
std::string to_string(Family f);

/// Scenario with its network states; objective and violations as in the
/// report. Throws grid::PowerFlowError when a step does not converge.
struct Scenario {
  double objective = 0.0;
  Eigen::MatrixXd u;                      ///< steps x n_u
  Eigen::MatrixXd e;                      ///< (steps + 1) x n_units
  std::vector<grid::NetworkState> states;  ///< per step
  int control_failures = 0;
};

Scenario run_scenario(const ControlLaw& law, const Case& c, const Eigen::MatrixXd& xi_path);

/// Objective of `policy` along the mean disturbance path of the case model.
double deterministic_objective(const mo::AffinePolicy& policy, const Case& c);

struct EvalOptions {
  int scenarios = 1000;
  std::uint64_t seed = 1;
  int substeps = 10;
  int threads = 0;  ///< 0: hardware concurrency
  bool keep_states = false;
  double max_excluded_fraction = 0.01;
  double bound_tol = 1e-6;  ///< slack allowed before a bound counts as violated (solver accuracy)
};

struct StepStats {
  Eigen::MatrixXd mean;  ///< rows: steps
  Eigen::MatrixXd var;
};

/// Empirical violation rates per (step, element) of one constraint family.
struct ViolationTable {
  Family family = Family::Voltage;
  int first_step = 0;     ///< step of row 0 (1 for energy)
  Eigen::MatrixXd rate;   ///< rows: steps, columns: buses/branches/units/sources
  [[nodiscard]] double max() const { return rate.size() ? rate.maxCoeff() : 0.0; }
};

struct EvalReport {
  int requested = 0;
  int evaluated = 0;
  int excluded = 0;
  bool valid = true;  ///< false when exclusions exceed the cap
  std::uint64_t seed = 0;
  double objective_mean = 0.0;
  double objective_stderr = 0.0;
  double ci_low = 0.0, ci_high = 0.0;  ///< 95%
  std::vector<double> objectives;      ///< per scenario, NaN when excluded
  std::vector<ViolationTable> violations;
  StepStats voltage;  ///< steps x buses
  StepStats energy;   ///< (steps + 1) x units
  StepStats control;  ///< steps x n_u
  int control_failures = 0;
  std::vector<std::string> failures;  ///< one line per excluded scenario
  std::vector<std::vector<grid::NetworkState>> states;  ///< per evaluated scenario, with keep_states

  [[nodiscard]] const ViolationTable& table(Family f) const;
  [[nodiscard]] double ci_half_width() const { return 0.5 * (ci_high - ci_low); }
};

/// Simulates `options.scenarios` disturbance paths of `c.disturbance` and
/// applies `law`. Paths depend only on (seed, scenario index), so different
/// laws evaluated with the same seed see common random numbers.
EvalReport evaluate(const ControlLaw& law, const Case& c, const EvalOptions& options = {});
/// As above on a given ensemble (first `options.scenarios` paths, or all
/// when scenarios <= 0).
EvalReport evaluate(const ControlLaw& law, const Case& c, const sde::ScenarioEnsemble& paths,
                    const EvalOptions& options = {});

/// Throws std::invalid_argument when the policy does not match the case.
EvalReport evaluate_policy(const mo::AffinePolicy& policy, const Case& c, const EvalOptions& options = {});

/// Mean and 95% half width of paired differences a - b over scenarios
/// evaluated in both reports.
struct PairedDifference {
  double mean = 0.0;
  double half_width = 0.0;
  int pairs = 0;
};
PairedDifference paired_difference(const EvalReport& a, const EvalReport& b);
/// Per-scenario objectives, NaN entries skipped.
PairedDifference paired_difference(const std::vector<double>& a, const std::vector<double>& b);

/// |cov(l_ij, v_i)| / (var P_ij + var Q_ij) per step and branch.
struct CovLvReport {
  Eigen::MatrixXd ratio;  ///< steps x branches, NaN where skipped
  double max_ratio = 0.0;
  int worst_step = -1, worst_branch = -1;
  int skipped = 0;  ///< (step, branch) pairs without flow fluctuation
  std::string note;
};

/// `states[s][k]` is the state of scenario s at step k. Requires at least 100
/// scenarios. Pairs whose flow standard deviation sqrt(var P + var Q) is
/// below `min_flow_std` (branches that carry only load) are skipped.
CovLvReport cov_lv_check(const grid::GridModel& grid, const std::vector<std::vector<grid::NetworkState>>& states,
                         double min_flow_std = 1e-6);

struct SigmaVariant {
  std::string name;
  Eigen::MatrixXd sigma;
};

/// Diagonal sigma with the same marginal variances as `sigma`.
Eigen::MatrixXd independent_sigma(const Eigen::MatrixXd& sigma);

struct SweepCell {
  double tau = 0.0;
  std::string variant;
  bool ok = false;
  std::string error;
  double mo_objective = 0.0;
  double objective_mean = 0.0;
  double ci_half_width = 0.0;
  std::vector<double> objectives;  ///< per scenario
  Eigen::MatrixXd u0;
};

/// One MO solve and evaluation per (tau, variant). Failures are recorded in
/// the cell and the sweep continues.
std::vector<SweepCell> correlation_sweep(const Case& c, const std::vector<double>& taus,
                                         const std::vector<SigmaVariant>& variants, const EvalOptions& options = {},
                                         const conic::SolverOptions& solver = {});

void write_summary_json(std::ostream& out, const EvalReport& report, const Case& c);
/// Rows k = 0..N (time k dt): mean and standard deviation of bus voltages,
/// controls and unit energy. Controls and voltages are blank in row N.
void write_traces_csv(std::ostream& out, const EvalReport& report, const Case& c);
void write_violations_csv(std::ostream& out, const EvalReport& report);
void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells);

}  // namespace adn::eval
