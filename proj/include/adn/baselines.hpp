#pragma once

// Reference methods: deterministic control (DC), scenario-based stochastic
// programming (SPBC) and receding-horizon MPC, plus a common-random-numbers
// comparison harness.

#include "adn/eval.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace adn::baselines {

struct SolveStats {
  conic::Status status = conic::Status::IterLimit;
  double objective = 0.0;
  mo::ModelSize size;
  std::size_t cones = 0;
  int iterations = 0;
  double seconds = 0.0;  ///< build plus solve
};

struct MethodPolicy {
  mo::AffinePolicy policy;
  SolveStats stats;
};

/// Throws std::runtime_error when the solver does not reach optimality.
MethodPolicy solve_mo(const Case& c, const conic::SolverOptions& solver = {});

/// Feedforward-only policy of the mean-path problem (gains exactly zero).
MethodPolicy solve_dc(const Case& c, const conic::SolverOptions& solver = {});

struct SpbcOptions {
  int scenarios = 100;
  std::uint64_t seed = 1;
  bool feedforward_only = false;
  int substeps = 10;
  conic::SolverOptions solver;
};

class SpbcInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sample-average program over i.i.d. disturbance paths with one shared
/// (u0, K) and every constraint enforced in every sampled path. Throws
/// SpbcInfeasible when the sampled program is infeasible.
MethodPolicy solve_spbc(const Case& c, const SpbcOptions& options = {});
/// As above on explicit paths (each (steps + 1) x n_xi).
MethodPolicy solve_spbc(const Case& c, const std::vector<Eigen::MatrixXd>& paths, const SpbcOptions& options = {});

struct MpcOptions {
  int window_steps = 0;  ///< 0: from the case mpc_window_hours
  conic::SolverOptions solver;
};

/// Window length in steps for the case.
int mpc_window(const Case& c, const MpcOptions& options);

/// At step k: solve DC over [k, min(k + window, N)) from the realized energy
/// with the realized xi_k held over the window, apply the first control.
/// Windows that end before the horizon fix their terminal energy to the
/// full-horizon DC schedule (falling back to the terminal energy weight when
/// that is infeasible); the last windows keep the terminal weight. Optional
/// `solve_seconds` collects per-solve wall times.
eval::ControlLaw mpc_law(const Case& c, const MpcOptions& options, std::vector<double>* solve_seconds = nullptr);

struct MpcRun {
  eval::Scenario trajectory;
  double objective = 0.0;
  int failures = 0;
};

/// One closed-loop run on the path simulated from `seed` (path index 0).
MpcRun run_mpc(const Case& c, int window_steps, std::uint64_t seed, const MpcOptions& options = {});

struct BenchmarkRow {
  std::string method;
  bool ok = false;
  std::string error;
  double solve_seconds = 0.0;     ///< median over timing runs
  double seconds_per_step = 0.0;  ///< solve_seconds / N, or the median window solve for MPC
  double objective = 0.0;         ///< optimizer objective (NaN for MPC)
  double objective_mean = 0.0;    ///< Monte Carlo
  double ci_half_width = 0.0;
  int evaluated = 0;
  std::size_t variables = 0, constraints = 0, cones = 0, gain_entries = 0;
  std::vector<double> objectives;  ///< per scenario
  mo::AffinePolicy policy;         ///< empty for MPC
};

struct CompareOptions {
  int n_eval = 1000;
  std::uint64_t seed = 1;
  int timing_runs = 3;
  int mpc_scenarios = 0;  ///< 0: n_eval; MPC uses the first paths of the same ensemble
  std::uint64_t spbc_seed = 7;
  conic::SolverOptions solver;
};

/// Methods: "dc", "mo", "mpc", "spbc<n>" (e.g. "spbc20"; "spbc" means 100),
/// "spbc<n>-ff" for the feedforward-only variant. All methods are evaluated
/// on one scenario ensemble. Per-method failures are recorded in the row.
std::vector<BenchmarkRow> compare(const Case& c, const std::vector<std::string>& methods,
                                  const CompareOptions& options = {});

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows);

}  // namespace adn::baselines
