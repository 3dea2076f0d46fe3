#include "adn/grid.hpp"
#include "adn/sde.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace adn::sde {

std::string to_string(Family f) {
  switch (f) {
    case Family::AffineOU: return "ou";
    case Family::Beta: return "beta";
    case Family::GeneralAffine: return "affine";
  }
  return "?";
}

Family family_from_string(const std::string& name) {
  if (name == "ou") return Family::AffineOU;
  if (name == "beta") return Family::Beta;
  if (name == "affine") return Family::GeneralAffine;
  throw std::invalid_argument("unsupported disturbance family '" + name + "' (expected ou, beta or affine)");
}

Eigen::MatrixXd ItoModel::diffusion() const {
  if (family == Family::GeneralAffine) return sigma;
  return sigma / std::sqrt(tau);
}

void ItoModel::validate() const {
  const Eigen::Index n = sigma.rows();
  if (n == 0) throw std::invalid_argument("disturbance model has dimension zero");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (drift.rows() != n || drift.cols() != n || offset.size() != n)
    throw std::invalid_argument("drift dimensions do not match sigma");
  if (mean0.size() != n || cov0.rows() != n || cov0.cols() != n)
    throw std::invalid_argument("initial moments do not match sigma");
  if (!sigma.allFinite() || !drift.allFinite() || !mean0.allFinite()) throw std::invalid_argument("non-finite parameters");
  if (family == Family::Beta && ((mean0.array() <= 0.0).any() || (mean0.array() >= 1.0).any()))
    throw std::invalid_argument("beta family initial mean must lie in (0, 1)");
}

namespace {

ItoModel make_model(Family family, double tau, const Eigen::MatrixXd& sigma, const Eigen::VectorXd& mean0,
                    double center) {
  const Eigen::Index n = sigma.rows();
  ItoModel m;
  m.family = family;
  m.tau = tau;
  m.sigma = sigma;
  m.drift = -Eigen::MatrixXd::Identity(n, n) / tau;
  m.offset = Eigen::VectorXd::Constant(n, center / tau);
  m.mean0 = mean0.size() == 0 ? Eigen::VectorXd::Constant(n, center) : mean0;
  m.cov0 = Eigen::MatrixXd::Zero(n, n);
  m.validate();
  return m;
}

}  // namespace

ItoModel make_ou_model(double tau, const Eigen::MatrixXd& sigma, const Eigen::VectorXd& mean0) {
  return make_model(Family::AffineOU, tau, sigma, mean0, 0.0);
}

ItoModel make_beta_model(double tau, const Eigen::MatrixXd& sigma, const Eigen::VectorXd& mean0) {
  return make_model(Family::Beta, tau, sigma, mean0, 0.5);
}

Eigen::MatrixXd ou_covariance(double tau, const Eigen::MatrixXd& sigma, double t, double s) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (s < 0.0 || s > t) throw std::invalid_argument("ou_covariance requires 0 <= s <= t");
  return 0.5 * (std::exp(-(t - s) / tau) - std::exp(-(t + s) / tau)) * sigma * sigma.transpose();
}

EUParams EUParams::from_grid(const grid::GridModel& grid) {
  EUParams eu;
  eu.alpha.resize(grid.num_units());
  eu.beta.resize(grid.num_units());
  for (int i = 0; i < grid.num_units(); ++i) {
    eu.alpha[i] = grid.units()[static_cast<std::size_t>(i)].alpha;
    eu.beta[i] = grid.units()[static_cast<std::size_t>(i)].beta;
  }
  return eu;
}

namespace {

struct Augmented {
  int n = 0;
  int total = 0;
  Eigen::MatrixXd F0;                 ///< drift Jacobian without the eta input
  std::vector<Eigen::MatrixXd> B;     ///< eta input block per window
};

Augmented augmented_drift(const ItoModel& model, const EUParams& eu, const MomentTrajectory& shape) {
  Augmented a;
  a.n = shape.n_xi;
  a.total = a.n + shape.n_aux();
  a.F0 = Eigen::MatrixXd::Zero(a.total, a.total);
  a.F0.topLeftCorner(a.n, a.n) = model.drift;
  for (int w = 0; w < shape.n_windows; ++w) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(shape.n_aux(), a.n);
    for (int i = 0; i < shape.n_units; ++i)
      for (int j = 0; j < a.n; ++j) {
        a.F0(a.n + shape.aux_index(w, i, j), a.n + shape.aux_index(w, i, j)) = -eu.alpha[i];
        b(shape.aux_index(w, i, j), j) = eu.beta[i];
      }
    a.B.push_back(b);
  }
  return a;
}

/// E[sigma(xi) sigma(xi)'] given the first two moments.
Eigen::MatrixXd diffusion_covariance(const ItoModel& model, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd g = model.diffusion();
  Eigen::MatrixXd q = g * g.transpose();
  if (model.family != Family::Beta) return q;
  // E[xi(1 - xi)] = m - m^2 - var per component; cross terms use the
  // geometric mean of the two diagonal factors.
  Eigen::VectorXd c(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) c[i] = std::sqrt(std::max(0.0, mean[i] - mean[i] * mean[i] - cov(i, i)));
  return c.asDiagonal() * q * c.asDiagonal();
}

}  // namespace

MomentTrajectory propagate_moments(const ItoModel& model, const EUParams& eu, int steps, double dt,
                                   const MomentOptions& options) {
  model.validate();
  if (steps < 0 || !(dt > 0.0) || options.substeps < 1) throw std::invalid_argument("invalid horizon or step");
  if (eu.alpha.size() != eu.beta.size()) throw std::invalid_argument("EU parameter sizes differ");
  MomentTrajectory traj;
  traj.dt = dt;
  traj.n_xi = model.dim();
  traj.n_units = eu.size();
  traj.window_steps = options.window_steps > 0 && options.window_steps < steps ? options.window_steps : 0;
  traj.n_windows = traj.window_steps > 0 ? (steps + traj.window_steps - 1) / traj.window_steps : 1;
  const Augmented aug = augmented_drift(model, eu, traj);
  const int n = aug.n;

  Eigen::VectorXd m = model.mean0;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(aug.total, aug.total);
  M.topLeftCorner(n, n) = model.cov0;
  traj.mean.resize(steps + 1, n);
  traj.mean.row(0) = m.transpose();
  traj.M.push_back(M);
  traj.min_eigenvalue = 0.0;

  const double h = dt / options.substeps;
  for (int k = 0; k < steps; ++k) {
    Eigen::MatrixXd F = aug.F0;
    F.bottomLeftCorner(traj.n_aux(), n) = aug.B[static_cast<std::size_t>(traj.window_of(k))];
    auto rhs = [&](const Eigen::VectorXd& mm, const Eigen::MatrixXd& MM, Eigen::VectorXd& dm, Eigen::MatrixXd& dM) {
      dm = model.drift * mm + model.offset;
      dM = F * MM + MM * F.transpose();
      dM.topLeftCorner(n, n) += diffusion_covariance(model, mm, MM.topLeftCorner(n, n));
    };
    for (int s = 0; s < options.substeps; ++s) {
      Eigen::VectorXd k1m, k2m, k3m, k4m;
      Eigen::MatrixXd k1M, k2M, k3M, k4M;
      rhs(m, M, k1m, k1M);
      rhs(m + 0.5 * h * k1m, M + 0.5 * h * k1M, k2m, k2M);
      rhs(m + 0.5 * h * k2m, M + 0.5 * h * k2M, k3m, k3M);
      rhs(m + h * k3m, M + h * k3M, k4m, k4M);
      m += h / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
      M += h / 6.0 * (k1M + 2.0 * k2M + 2.0 * k3M + k4M);
    }
    M = 0.5 * (M + M.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
    const double lo = eig.eigenvalues().minCoeff();
    traj.min_eigenvalue = std::min(traj.min_eigenvalue, lo);
    if (lo < -1e-10) {
      std::clog << "warning: moment covariance at step " << k + 1 << " has eigenvalue " << lo
                << "; projecting onto the PSD cone\n";
      M = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();
      ++traj.repairs;
    }
    traj.mean.row(k + 1) = m.transpose();
    traj.M.push_back(M);
  }
  return traj;
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& M) {
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  const Eigen::VectorXd d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd L = ldlt.matrixL();
  Eigen::MatrixXd N = L * d.asDiagonal();
  return ldlt.transpositionsP().transpose() * N;
}

}  // namespace adn::sde
