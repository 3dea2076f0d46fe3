#include <doctest.h>

#include "adn/sde.hpp"

#include <cmath>
#include <sstream>

using namespace adn::sde;

namespace {

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

EUParams one_unit(double alpha, double beta) { return {Eigen::VectorXd::Constant(1, alpha), Eigen::VectorXd::Constant(1, beta)}; }

/// Composite Simpson rule on [a, b] with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n = 400) {
  if (b <= a) return 0.0;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

double lag_autocorrelation(const ScenarioEnsemble& ens, int from, int lag) {
  double sxy = 0, sxx = 0, syy = 0, mx = 0, my = 0;
  int count = 0;
  for (int p = 0; p < ens.n_paths; ++p)
    for (int k = from; k + lag <= ens.steps; ++k) {
      mx += ens.at(p, k, 0);
      my += ens.at(p, k + lag, 0);
      ++count;
    }
  mx /= count;
  my /= count;
  for (int p = 0; p < ens.n_paths; ++p)
    for (int k = from; k + lag <= ens.steps; ++k) {
      const double a = ens.at(p, k, 0) - mx, b = ens.at(p, k + lag, 0) - my;
      sxy += a * b;
      sxx += a * a;
      syy += b * b;
    }
  return sxy / std::sqrt(sxx * syy);
}

double block_deviation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = b.cwiseAbs().maxCoeff();
  return scale == 0.0 ? a.cwiseAbs().maxCoeff() : (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

TEST_CASE("OU covariance closed form") {
  const Eigen::MatrixXd s2 = scalar(std::sqrt(2.0));
  CHECK(ou_covariance(1.0, s2, 0.0, 0.0).norm() == 0.0);
  CHECK(ou_covariance(1.0, s2, 2.0, 1.0)(0, 0) == doctest::Approx(std::exp(-1.0) - std::exp(-3.0)).epsilon(1e-15));
  CHECK(ou_covariance(1.0, s2, 2.0, 1.0)(0, 0) == doctest::Approx(0.31818).epsilon(1e-3));
  CHECK(ou_covariance(1.0, s2, 10.0, 10.0)(0, 0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK_THROWS_AS(ou_covariance(1.0, s2, 1.0, 2.0), std::invalid_argument);
}

TEST_CASE("moment propagation without noise or coupling") {
  ItoModel m = make_ou_model(1.0, scalar(0.0));
  m.family = Family::GeneralAffine;
  m.drift = scalar(-0.5);
  m.offset = Eigen::VectorXd::Constant(1, 0.2);
  m.mean0 = Eigen::VectorXd::Constant(1, 1.0);
  const auto traj = propagate_moments(m, one_unit(0.1, 0.9), 20, 0.5);
  for (int k = 0; k <= 20; ++k) {
    CHECK(traj.M[static_cast<std::size_t>(k)].norm() == 0.0);
    CHECK(traj.mean(k, 0) == doctest::Approx(0.4 + 0.6 * std::exp(-0.25 * k)).epsilon(1e-8));
  }

  const auto decoupled = propagate_moments(make_ou_model(1.0, scalar(1.0)), one_unit(0.2, 0.0), 20, 0.25);
  for (int k = 0; k <= 20; ++k) {
    CHECK(decoupled.xieta(k).norm() == 0.0);
    CHECK(decoupled.etaeta(k).norm() == 0.0);
  }
  CHECK(decoupled.xixi(20)(0, 0) > 0.0);
}

TEST_CASE("Lyapunov propagation matches analytic OU moments") {
  const double tau = 1.0, sig = std::sqrt(2.0);
  const auto traj = propagate_moments(make_ou_model(tau, scalar(sig)), one_unit(0.0, 1.0), 40, 0.25);
  double worst = 0.0, worst_cross = 0.0, worst_aux = 0.0;
  for (int k = 0; k <= 40; ++k) {
    const double t = 0.25 * k;
    worst = std::max(worst, std::abs(traj.xixi(k)(0, 0) - ou_covariance(tau, scalar(sig), t, t)(0, 0)));
    // With alpha = 0 and beta = 1, eta is the running integral of xi.
    auto c = [&](double a, double b) {
      return a >= b ? ou_covariance(tau, scalar(sig), a, b)(0, 0) : ou_covariance(tau, scalar(sig), b, a)(0, 0);
    };
    const double cross = simpson([&](double s) { return c(t, s); }, 0.0, t);
    const double aux = 2.0 * simpson([&](double s) { return simpson([&](double r) { return c(s, r); }, 0.0, s, 100); },
                                     0.0, t, 100);
    worst_cross = std::max(worst_cross, std::abs(traj.xieta(k)(0, 0) - cross));
    worst_aux = std::max(worst_aux, std::abs(traj.etaeta(k)(0, 0) - aux));
  }
  CHECK(worst < 1e-6);
  CHECK(worst_cross < 1e-6);
  CHECK(worst_aux < 1e-5);
  CHECK(traj.repairs == 0);
  CHECK(traj.min_eigenvalue > -1e-10);

  // Two-dimensional correlated case against the matrix formula.
  Eigen::MatrixXd sigma(2, 2);
  sigma << 1.0, 0.0, 0.6, 0.8;
  const auto t2 = propagate_moments(make_ou_model(2.0, sigma), EUParams{}, 30, 0.5);
  double worst2 = 0.0;
  for (int k = 0; k <= 30; ++k)
    worst2 = std::max(worst2, (t2.xixi(k) - ou_covariance(2.0, sigma, 0.5 * k, 0.5 * k)).cwiseAbs().maxCoeff());
  CHECK(worst2 < 1e-6);
}

TEST_CASE("windowed lifting sums to the single-window auxiliary") {
  Eigen::MatrixXd sigma(2, 1);
  sigma << 1.0, 0.5;
  const auto model = make_ou_model(1.5, sigma);
  const EUParams eu = one_unit(0.05, 0.9);
  const auto one = propagate_moments(model, eu, 24, 0.25);
  MomentOptions opt;
  opt.window_steps = 8;
  const auto three = propagate_moments(model, eu, 24, 0.25, opt);
  CHECK(three.n_windows == 3);
  CHECK(three.n_aux() == 6);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(2, 6);
  for (int w = 0; w < 3; ++w)
    for (int j = 0; j < 2; ++j) S(j, three.aux_index(w, 0, j)) = 1.0;
  for (int k = 0; k <= 24; ++k) {
    CHECK((S * three.etaeta(k) * S.transpose() - one.etaeta(k)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((three.xieta(k) * S.transpose() - one.xieta(k)).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Windows that have not started carry no variance.
  CHECK(three.etaeta(8).bottomRightCorner(4, 4).norm() == 0.0);
}

TEST_CASE("path simulation") {
  ItoModel det = make_ou_model(2.0, scalar(0.0), Eigen::VectorXd::Constant(1, 1.0));
  const auto flat = simulate_paths(det, 3, 10, 0.5, 1);
  for (int p = 0; p < 3; ++p)
    for (int k = 0; k <= 10; ++k) {
      CHECK(flat.at(p, k, 0) == doctest::Approx(std::pow(1.0 - 0.05 / 2.0, 10 * k)).epsilon(1e-12));
      CHECK(std::abs(flat.at(p, k, 0) - std::exp(-0.25 * k)) < 6e-3);
    }

  const auto model = make_ou_model(1.0, scalar(std::sqrt(2.0)));
  const auto a = simulate_paths(model, 200, 10, 0.1, 99, 10, 1);
  const auto b = simulate_paths(model, 200, 10, 0.1, 99, 10, 7);
  const auto c = simulate_paths(model, 200, 10, 0.1, 100);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);

  const auto big = simulate_paths(model, 100000, 50, 0.1, 5);
  double s = 0.0, s2 = 0.0;
  for (int p = 0; p < big.n_paths; ++p) {
    s += big.at(p, 50, 0);
    s2 += big.at(p, 50, 0) * big.at(p, 50, 0);
  }
  const double var = (s2 - s * s / big.n_paths) / (big.n_paths - 1);
  CHECK(var == doctest::Approx(ou_covariance(1.0, scalar(std::sqrt(2.0)), 5.0, 5.0)(0, 0)).epsilon(0.02));
}

TEST_CASE("beta family") {
  const auto beta = make_beta_model(1.0, scalar(0.8));
  const auto ens = simulate_paths(beta, 10000, 40, 0.25, 3);
  double lo = 1.0, hi = 0.0, mean = 0.0;
  for (int p = 0; p < ens.n_paths; ++p) {
    for (int k = 0; k <= ens.steps; ++k) {
      lo = std::min(lo, ens.at(p, k, 0));
      hi = std::max(hi, ens.at(p, k, 0));
    }
    mean += ens.at(p, 40, 0);
  }
  mean /= ens.n_paths;
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
  CHECK(mean == doctest::Approx(0.5).epsilon(0.04));

  // Closed moment equations track the simulated variance.
  const auto traj = propagate_moments(make_beta_model(1.0, scalar(0.8), Eigen::VectorXd::Constant(1, 0.3)), EUParams{},
                                      40, 0.25);
  const auto ens2 = simulate_paths(make_beta_model(1.0, scalar(0.8), Eigen::VectorXd::Constant(1, 0.3)), 20000, 40,
                                   0.25, 4);
  const auto emp = empirical_moments(ens2, EUParams{});
  CHECK(emp.mean(40, 0) == doctest::Approx(traj.mean(40, 0)).epsilon(0.02));
  CHECK(emp.xixi(40)(0, 0) == doctest::Approx(traj.xixi(40)(0, 0)).epsilon(0.05));

  const auto slow = simulate_paths(make_beta_model(2.0, scalar(0.8)), 10000, 40, 0.25, 3);
  CHECK(lag_autocorrelation(slow, 20, 1) > lag_autocorrelation(ens, 20, 1));
}

TEST_CASE("empirical moments agree with propagation") {
  const auto model = make_ou_model(1.0, scalar(std::sqrt(2.0)), Eigen::VectorXd::Constant(1, 0.3));
  const EUParams eu = one_unit(0.1, 0.9);
  // Paths are recorded five times per moment step so the path-wise eta
  // integral resolves the within-step variation.
  const int fine = 5;
  const auto ens = simulate_paths(model, 100000, 20 * fine, 0.1 / fine, 17, 2);
  const auto prop = propagate_moments(model, eu, 20, 0.1);
  const auto emp = empirical_moments(ens, eu);
  double worst = 0.0;
  for (int k = 1; k <= 20; ++k) {
    worst = std::max(worst, block_deviation(emp.xixi(fine * k), prop.xixi(k)));
    worst = std::max(worst, block_deviation(emp.xieta(fine * k), prop.xieta(k)));
    worst = std::max(worst, block_deviation(emp.etaeta(fine * k), prop.etaeta(k)));
  }
  CHECK(worst < 0.03);

  // Centering by the analytic mean leaves eta zero-mean within sampling error.
  const auto prop_fine = propagate_moments(model, eu, 20 * fine, 0.1 / fine);
  const auto centered = empirical_moments(ens, eu, {}, &prop_fine.mean);
  bool inside = true;
  for (int k = 1; k <= 20 * fine; ++k) {
    const double stderr_k = std::sqrt(centered.etaeta(k)(0, 0) / ens.n_paths);
    inside = inside && std::abs(centered.aux_mean(k, 0)) < 3.0 * stderr_k;
  }
  CHECK(inside);

  ScenarioEnsemble constant{1, 5, 1, 0.1, 0, std::vector<double>(6, 0.7)};
  const auto one = empirical_moments(constant, eu);
  for (int k = 0; k <= 5; ++k) CHECK(one.M[static_cast<std::size_t>(k)].norm() == 0.0);
  const auto nobeta = empirical_moments(ens, one_unit(0.1, 0.0));
  CHECK(nobeta.etaeta(20 * fine).norm() == 0.0);
}

TEST_CASE("temporal correlation scales with tau") {
  const Eigen::MatrixXd sig = scalar(1.0);
  const auto fast = propagate_moments(make_ou_model(1.0, sig), EUParams{}, 80, 0.25);
  const auto slow = propagate_moments(make_ou_model(2.0, sig), EUParams{}, 80, 0.25);
  CHECK(fast.xixi(80)(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(slow.xixi(80)(0, 0) == doctest::Approx(0.5).epsilon(1e-6));

  const auto e1 = simulate_paths(make_ou_model(1.0, sig), 4000, 60, 0.25, 8);
  const auto e2 = simulate_paths(make_ou_model(2.0, sig), 4000, 120, 0.25, 8);
  const double r1 = lag_autocorrelation(e1, 30, 1), r2 = lag_autocorrelation(e2, 60, 2);
  CHECK(r1 == doctest::Approx(std::exp(-0.25)).epsilon(0.02));
  CHECK(r2 == doctest::Approx(r1).epsilon(0.02));
  CHECK(lag_autocorrelation(e2, 60, 1) > r1);
}

TEST_CASE("PSD factor and CSV export") {
  Eigen::MatrixXd v(3, 2);
  v << 1, 2, 0, 1, 3, -1;
  const Eigen::MatrixXd M = v * v.transpose();
  const Eigen::MatrixXd N = psd_factor(M);
  CHECK((N * N.transpose() - M).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(psd_factor(Eigen::MatrixXd::Zero(2, 2)).norm() == 0.0);

  const auto ens = simulate_paths(make_ou_model(1.0, scalar(1.0)), 2, 3, 0.5, 1);
  std::ostringstream out;
  write_ensemble_csv(out, ens);
  const std::string text = out.str();
  CHECK(text.rfind("step,path,component,value\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 2 * 4);
  std::ostringstream mom;
  write_moments_csv(mom, propagate_moments(make_ou_model(1.0, scalar(1.0)), one_unit(0.0, 1.0), 2, 0.5));
  const std::string mtext = mom.str();
  CHECK(std::count(mtext.begin(), mtext.end(), '\n') == 1 + 3 * 4);
}
