#include "adn/sde.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

namespace adn::sde {

Eigen::MatrixXd ScenarioEnsemble::path(int p) const {
  Eigen::MatrixXd out(steps + 1, n_xi);
  for (int k = 0; k <= steps; ++k)
    for (int j = 0; j < n_xi; ++j) out(k, j) = at(p, k, j);
  return out;
}

namespace {

constexpr double kBetaClamp = 1e-6;

void simulate_range(const ItoModel& model, ScenarioEnsemble& ens, int substeps, int begin, int end) {
  const int n = model.dim();
  const Eigen::Index nw = model.sigma.cols();
  const Eigen::MatrixXd g = model.diffusion();
  const Eigen::MatrixXd init = psd_factor(model.cov0);
  const bool init_random = model.cov0.cwiseAbs().maxCoeff() > 0.0;
  const double h = ens.dt / substeps;
  const double sqh = std::sqrt(h);
  Eigen::VectorXd xi(n), z(nw), z0(n), diff(n);
  for (int p = begin; p < end; ++p) {
    std::seed_seq seq{static_cast<std::uint32_t>(ens.seed), static_cast<std::uint32_t>(ens.seed >> 32),
                      static_cast<std::uint32_t>(p), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    xi = model.mean0;
    if (init_random) {
      for (int j = 0; j < n; ++j) z0[j] = normal(rng);
      xi += init * z0;
    }
    double* out = ens.values.data() + static_cast<std::size_t>(p) * static_cast<std::size_t>(ens.steps + 1) *
                                          static_cast<std::size_t>(n);
    std::copy(xi.data(), xi.data() + n, out);
    for (int k = 0; k < ens.steps; ++k) {
      for (int s = 0; s < substeps; ++s) {
        for (Eigen::Index j = 0; j < nw; ++j) z[j] = normal(rng);
        diff = g * z;
        if (model.family == Family::Beta)
          for (int j = 0; j < n; ++j) diff[j] *= std::sqrt(xi[j] * (1.0 - xi[j]));
        xi += (model.drift * xi + model.offset) * h + diff * sqh;
        if (model.family == Family::Beta) xi = xi.cwiseMax(kBetaClamp).cwiseMin(1.0 - kBetaClamp);
      }
      std::copy(xi.data(), xi.data() + n, out + static_cast<std::size_t>(k + 1) * static_cast<std::size_t>(n));
    }
  }
}

}  // namespace

ScenarioEnsemble simulate_paths(const ItoModel& model, int n_paths, int steps, double dt, std::uint64_t seed,
                                int substeps, int threads) {
  model.validate();
  if (n_paths < 1) throw std::invalid_argument("n_paths must be at least 1");
  if (steps < 0 || !(dt > 0.0) || substeps < 1) throw std::invalid_argument("invalid horizon or step");
  ScenarioEnsemble ens;
  ens.n_paths = n_paths;
  ens.steps = steps;
  ens.n_xi = model.dim();
  ens.dt = dt;
  ens.seed = seed;
  ens.values.resize(static_cast<std::size_t>(n_paths) * static_cast<std::size_t>(steps + 1) *
                    static_cast<std::size_t>(ens.n_xi));
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, n_paths);
  if (threads == 1) {
    simulate_range(model, ens, substeps, 0, n_paths);
    return ens;
  }
  std::vector<std::thread> pool;
  const int chunk = (n_paths + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int begin = t * chunk, end = std::min(n_paths, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] { simulate_range(model, ens, substeps, begin, end); });
  }
  for (auto& th : pool) th.join();
  return ens;
}

MomentTrajectory empirical_moments(const ScenarioEnsemble& ens, const EUParams& eu, const MomentOptions& options,
                                   const Eigen::MatrixXd* center) {
  if (ens.n_paths < 1) throw std::invalid_argument("empty ensemble");
  const int n = ens.n_xi, N = ens.steps;
  MomentTrajectory traj;
  traj.dt = ens.dt;
  traj.n_xi = n;
  traj.n_units = eu.size();
  traj.window_steps = options.window_steps > 0 && options.window_steps < N ? options.window_steps : 0;
  traj.n_windows = traj.window_steps > 0 ? (N + traj.window_steps - 1) / traj.window_steps : 1;
  const int total = n + traj.n_aux();

  traj.mean = Eigen::MatrixXd::Zero(N + 1, n);
  for (int p = 0; p < ens.n_paths; ++p) traj.mean += ens.path(p);
  traj.mean /= ens.n_paths;
  const Eigen::MatrixXd& c = center != nullptr ? *center : traj.mean;
  if (c.rows() != N + 1 || c.cols() != n) throw std::invalid_argument("centering trajectory has the wrong shape");

  std::vector<Eigen::VectorXd> s1(static_cast<std::size_t>(N + 1), Eigen::VectorXd::Zero(total));
  std::vector<Eigen::MatrixXd> s2(static_cast<std::size_t>(N + 1), Eigen::MatrixXd::Zero(total, total));
  const double h = ens.dt / options.substeps;
  Eigen::VectorXd eta(traj.n_aux()), z(total);
  for (int p = 0; p < ens.n_paths; ++p) {
    const Eigen::MatrixXd xp = ens.path(p);
    const Eigen::MatrixXd dx = xp - c;
    eta.setZero();
    for (int k = 0; k <= N; ++k) {
      if (k > 0) {
        const int w = traj.window_of(k - 1);
        for (int i = 0; i < traj.n_units; ++i)
          for (int j = 0; j < n; ++j) {
            const double a = eu.alpha[i], b = eu.beta[i];
            const double u0 = dx(k - 1, j), slope = (dx(k, j) - u0) / ens.dt;
            for (int ww = 0; ww < traj.n_windows; ++ww) {
              double& e = eta[traj.aux_index(ww, i, j)];
              const double gain = ww == w ? b : 0.0;
              for (int s = 0; s < options.substeps; ++s) {
                const double t = s * h;
                auto f = [&](double tt, double ee) { return -a * ee + gain * (u0 + slope * tt); };
                const double k1 = f(t, e), k2 = f(t + 0.5 * h, e + 0.5 * h * k1);
                const double k3 = f(t + 0.5 * h, e + 0.5 * h * k2), k4 = f(t + h, e + h * k3);
                e += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
              }
            }
          }
      }
      z << xp.row(k).transpose(), eta;
      s1[static_cast<std::size_t>(k)] += z;
      s2[static_cast<std::size_t>(k)].selfadjointView<Eigen::Lower>().rankUpdate(z);
    }
  }
  const double np = ens.n_paths;
  traj.aux_mean.resize(N + 1, traj.n_aux());
  for (int k = 0; k <= N; ++k) {
    const Eigen::VectorXd m = s1[static_cast<std::size_t>(k)] / np;
    Eigen::MatrixXd S = s2[static_cast<std::size_t>(k)].selfadjointView<Eigen::Lower>();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(total, total);
    if (ens.n_paths > 1) cov = (S - np * m * m.transpose()) / (np - 1.0);
    traj.M.push_back(cov);
    traj.aux_mean.row(k) = m.tail(traj.n_aux()).transpose();
  }
  return traj;
}

void write_ensemble_csv(std::ostream& out, const ScenarioEnsemble& ens) {
  out.precision(17);
  out << "step,path,component,value\n";
  for (int k = 0; k <= ens.steps; ++k)
    for (int p = 0; p < ens.n_paths; ++p)
      for (int j = 0; j < ens.n_xi; ++j) out << k << ',' << p << ',' << j << ',' << ens.at(p, k, j) << '\n';
}

void write_moments_csv(std::ostream& out, const MomentTrajectory& traj) {
  out.precision(17);
  out << "step,block,row,col,value\n";
  auto block = [&](int k, const char* name, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) out << k << ',' << name << ',' << r << ',' << c << ',' << m(r, c) << '\n';
  };
  for (int k = 0; k <= traj.steps(); ++k) {
    block(k, "mean", traj.mean.row(k).transpose());
    block(k, "xixi", traj.xixi(k));
    block(k, "xieta", traj.xieta(k));
    block(k, "etaeta", traj.etaeta(k));
  }
}

}  // namespace adn::sde
