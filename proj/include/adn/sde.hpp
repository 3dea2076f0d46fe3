#pragma once

// Ito-process disturbance models and moment propagation of the augmented
// (xi, eta) system. The auxiliary eta is lifted per window w, energy unit i
// and source j:
//
//   d eta(w,i)_j = (-alpha_i eta(w,i)_j + beta_i [k in w] (xi_j - E xi_j)) dt
//
// so that the energy deviation of unit i under a gain K_w active in window w
// is sum_w sum_j K_w(i, j) eta(w,i)_j.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace adn::grid {
class GridModel;
}

namespace adn::sde {

enum class Family { AffineOU, Beta, GeneralAffine };

std::string to_string(Family f);
Family family_from_string(const std::string& name);

struct ItoModel {
  Family family = Family::AffineOU;
  Eigen::MatrixXd drift;   ///< A in mu(xi) = A xi + b
  Eigen::VectorXd offset;  ///< b
  Eigen::MatrixXd sigma;   ///< n_xi x n_w
  double tau = 1.0;
  Eigen::VectorXd mean0;
  Eigen::MatrixXd cov0;

  [[nodiscard]] int dim() const { return static_cast<int>(sigma.rows()); }
  /// Constant diffusion factor: sigma / sqrt(tau) for AffineOU and Beta
  /// (the Beta family further scales row i by sqrt(xi_i (1 - xi_i))), sigma
  /// itself for GeneralAffine.
  [[nodiscard]] Eigen::MatrixXd diffusion() const;
  /// Throws std::invalid_argument on inconsistent dimensions or parameters.
  void validate() const;
};

/// d xi = -xi / tau dt + sigma / sqrt(tau) dW, xi_0 = mean0.
ItoModel make_ou_model(double tau, const Eigen::MatrixXd& sigma, const Eigen::VectorXd& mean0 = {});
/// d xi = -(xi - 0.5) / tau dt + sqrt(xi (1 - xi)) sigma / sqrt(tau) dW.
ItoModel make_beta_model(double tau, const Eigen::MatrixXd& sigma, const Eigen::VectorXd& mean0 = {});

/// E[xi_t xi_s'] of the zero-started OU model; requires 0 <= s <= t.
Eigen::MatrixXd ou_covariance(double tau, const Eigen::MatrixXd& sigma, double t, double s);

struct EUParams {
  Eigen::VectorXd alpha;  ///< dissipation, 1/h
  Eigen::VectorXd beta;   ///< charging efficiency

  [[nodiscard]] int size() const { return static_cast<int>(alpha.size()); }
  static EUParams from_grid(const grid::GridModel& grid);
};

struct MomentOptions {
  int substeps = 10;      ///< RK4 substeps per step
  int window_steps = 0;   ///< steps per gain window; 0 means one window
};

struct MomentTrajectory {
  double dt = 0.0;
  int n_xi = 0;
  int n_units = 0;
  int n_windows = 1;
  int window_steps = 0;
  Eigen::MatrixXd mean;           ///< (N + 1) x n_xi
  std::vector<Eigen::MatrixXd> M;  ///< augmented covariance per step
  Eigen::MatrixXd aux_mean;       ///< (N + 1) x n_aux sample mean of eta; empty when propagated
  int repairs = 0;                ///< PSD projections applied
  double min_eigenvalue = 0.0;    ///< smallest eigenvalue seen before repair

  [[nodiscard]] int steps() const { return static_cast<int>(M.size()) - 1; }
  [[nodiscard]] int n_aux() const { return n_windows * n_units * n_xi; }
  [[nodiscard]] int aux_index(int window, int unit, int source) const {
    return (window * n_units + unit) * n_xi + source;
  }
  /// Window of the step interval [k, k + 1).
  [[nodiscard]] int window_of(int k) const { return window_steps > 0 ? k / window_steps : 0; }
  [[nodiscard]] Eigen::MatrixXd xixi(int k) const { return M[static_cast<std::size_t>(k)].topLeftCorner(n_xi, n_xi); }
  [[nodiscard]] Eigen::MatrixXd xieta(int k) const {
    return M[static_cast<std::size_t>(k)].topRightCorner(n_xi, n_aux());
  }
  [[nodiscard]] Eigen::MatrixXd etaeta(int k) const {
    return M[static_cast<std::size_t>(k)].bottomRightCorner(n_aux(), n_aux());
  }
};

/// Mean and augmented covariance at t = k dt, k = 0..steps, by RK4.
MomentTrajectory propagate_moments(const ItoModel& model, const EUParams& eu, int steps, double dt,
                                   const MomentOptions& options = {});

struct ScenarioEnsemble {
  int n_paths = 0;
  int steps = 0;
  int n_xi = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> values;  ///< [path][step][component]

  [[nodiscard]] double at(int path, int step, int comp) const {
    return values[(static_cast<std::size_t>(path) * static_cast<std::size_t>(steps + 1) + static_cast<std::size_t>(step)) *
                      static_cast<std::size_t>(n_xi) +
                  static_cast<std::size_t>(comp)];
  }
  /// (steps + 1) x n_xi trajectory of one path.
  [[nodiscard]] Eigen::MatrixXd path(int p) const;
};

/// Euler-Maruyama with `substeps` per step. Path p draws from its own stream
/// seeded by (seed, p), so results do not depend on the thread count.
ScenarioEnsemble simulate_paths(const ItoModel& model, int n_paths, int steps, double dt, std::uint64_t seed,
                                int substeps = 10, int threads = 0);

/// Sample mean and covariance of (xi, eta), with eta integrated per path from
/// centered xi (linear interpolation between steps, RK4 substeps). xi is
/// centered by `center` ((N + 1) x n_xi) when given, else by the sample mean.
MomentTrajectory empirical_moments(const ScenarioEnsemble& ens, const EUParams& eu, const MomentOptions& options = {},
                                   const Eigen::MatrixXd* center = nullptr);

/// N with N N' = M for symmetric PSD M (pivoted LDL'; tiny negative pivots
/// are clipped to zero).
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& M);

void write_ensemble_csv(std::ostream& out, const ScenarioEnsemble& ens);
void write_moments_csv(std::ostream& out, const MomentTrajectory& traj);

}  // namespace adn::sde
