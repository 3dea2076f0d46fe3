#include <doctest.h>

#include "adn/mo.hpp"
#include "fixtures.hpp"

#include <cmath>
#include <sstream>

using namespace adn;
using adn::testing::plain_bus;

namespace {

std::string case_path(const std::string& name) { return std::string(ADN_SOURCE_DIR) + "/cases/" + name; }

double cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double bisect_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Two buses, one source at bus 1, no energy units.
grid::GridModel source_pair(double r, double x) {
  return {{plain_bus(0), plain_bus(1)}, {{0, 1, r, x, 10.0}}, 0, {{1, "wind", 5.0}}, {}};
}

CaseConfig toy_config(int steps, int n_u) {
  CaseConfig c;
  c.steps = steps;
  c.dt_hours = 0.25;
  c.price.assign(static_cast<std::size_t>(steps), 1.0);
  c.r_u = Eigen::VectorXd::Ones(n_u);
  c.window_hours = 0.0;
  return c;
}

grid::InjectionProfile toy_profile(const grid::GridModel& g, int steps, double load) {
  grid::InjectionProfile p;
  p.p_pred = Eigen::MatrixXd::Constant(steps, g.num_sources(), 0.2);
  p.p_load = Eigen::MatrixXd::Zero(steps, g.num_buses());
  p.q_load = Eigen::MatrixXd::Zero(steps, g.num_buses());
  p.p_load.rightCols(g.num_buses() - 1).setConstant(load);
  p.q_load.rightCols(g.num_buses() - 1).setConstant(0.3 * load);
  return p;
}

/// Constant xi covariance `var * I`, no auxiliary states.
sde::MomentTrajectory constant_moments(int steps, int n_xi, double var, double dt) {
  sde::MomentTrajectory m;
  m.dt = dt;
  m.n_xi = n_xi;
  m.n_units = 0;
  m.mean = Eigen::MatrixXd::Zero(steps + 1, n_xi);
  m.M.assign(static_cast<std::size_t>(steps + 1), var * Eigen::MatrixXd::Identity(n_xi, n_xi));
  return m;
}

Case zero_noise(Case c) {
  c.disturbance.sigma.setZero();
  return c;
}

}  // namespace

TEST_CASE("kappa rules") {
  CHECK(mo::kappa(0.5, KappaRule::Gaussian) == 0.0);
  CHECK(mo::kappa(0.95, KappaRule::DistributionallyRobust) == doctest::Approx(std::sqrt(19.0)).epsilon(1e-15));
  CHECK(mo::kappa(0.95, KappaRule::Gaussian) == doctest::Approx(1.6449).epsilon(1e-4));
  for (double p = 1e-6; p < 1.0; p += 0.0137)
    CHECK_MESSAGE(std::abs(mo::normal_quantile(p) - bisect_quantile(p)) < 1e-9, "p = ", p);
  for (double p : {1e-12, 1e-8, 0.02, 0.0243, 0.0244, 0.9757, 0.98, 1 - 1e-8})
    CHECK_MESSAGE(std::abs(mo::normal_quantile(p) - bisect_quantile(p)) < 1e-9, "p = ", p);
  CHECK_THROWS_AS(mo::kappa(0.4, KappaRule::Gaussian), std::invalid_argument);
  CHECK_THROWS_AS(mo::kappa(1.0, KappaRule::DistributionallyRobust), std::invalid_argument);
  CHECK(mo::kappa(0.9, KappaRule::Gaussian) < mo::kappa(0.95, KappaRule::Gaussian));
}

TEST_CASE("exact hold") {
  const auto h0 = mo::exact_hold(0.0, 0.9, 0.25);
  CHECK(h0.a == 1.0);
  CHECK(h0.b == doctest::Approx(0.225));
  // Fine Euler integration of de/dt = -alpha e + beta with e(0) = 0 and 1.
  const double alpha = 0.3, beta = 0.95, dt = 0.5;
  const auto h = mo::exact_hold(alpha, beta, dt);
  double e0 = 0.0, e1 = 1.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    e0 += dt / n * (-alpha * e0 + beta);
    e1 += dt / n * (-alpha * e1);
  }
  CHECK(h.b == doctest::Approx(e0).epsilon(1e-5));
  CHECK(h.a == doctest::Approx(e1).epsilon(1e-5));
}

TEST_CASE("deterministic collapse") {
  for (const char* name : {"case3.json", "case33.json"}) {
    const Case c = zero_noise(load_case(case_path(name)));
    const auto m = mo::case_moments(c);
    const auto mo_run = mo::solve_case(c, m);
    mo::MoOptions dc_opt;
    dc_opt.feedback = false;
    const auto dc_run = mo::solve_case(c, m, dc_opt);
    REQUIRE(mo_run.solution.optimal());
    REQUIRE(dc_run.solution.optimal());
    const double rel = std::abs(mo_run.solution.objective - dc_run.solution.objective) / std::abs(dc_run.solution.objective);
    MESSAGE(std::string(name), ": MO ", mo_run.solution.objective, " DC ", dc_run.solution.objective, " rel ", rel);
    CHECK(rel < 1e-6);
    for (const auto& k : dc_run.policy.K) CHECK(k.isZero(0.0));
  }
}

TEST_CASE("fixed identity gain binds the control hat") {
  const auto g = source_pair(0.01, 0.02);
  const int N = 4;
  const auto cfg = toy_config(N, 1);
  const auto m = constant_moments(N, 1, 4.0, cfg.dt_hours);
  mo::MoOptions opt;
  opt.fixed_gains = {Eigen::MatrixXd::Identity(1, 1)};
  auto cfg_loose = cfg;
  cfg_loose.gamma = 0.5;
  cfg_loose.kappa_rule = KappaRule::Gaussian;
  const auto prog = mo::build_mo(g, toy_profile(g, N, 0.1), m, sde::EUParams{}, cfg_loose, opt);
  const auto sol = conic::solve(prog.program);
  REQUIRE(sol.optimal());
  for (int k = 0; k < N; ++k) CHECK(sol.x[static_cast<std::size_t>(prog.layout.u_hat[static_cast<std::size_t>(k)])] == doctest::Approx(2.0).epsilon(1e-7));
  const auto policy = mo::extract_policy(prog, sol, cfg.dt_hours);
  CHECK(policy.K[0](0, 0) == 1.0);
}

TEST_CASE("problem size relative to the deterministic problem") {
  for (const char* name : {"case3.json", "case33.json", "case123.json"}) {
    const Case c = load_case(case_path(name));
    const auto m = mo::case_moments(c);
    const auto eu = sde::EUParams::from_grid(c.grid);
    const auto mo_prog = mo::build_mo(c.grid, c.profile, m, eu, c.config);
    mo::MoOptions dc_opt;
    dc_opt.feedback = false;
    const auto dc_prog = mo::build_mo(c.grid, c.profile, m, eu, c.config, dc_opt);
    MESSAGE(std::string(name), ": MO vars ", mo_prog.size.variables, " cons ", mo_prog.size.constraints, " |K| ",
            mo_prog.size.gain_entries, "; DC vars ", dc_prog.size.variables, " cons ", dc_prog.size.constraints);
    CHECK(mo_prog.size.constraints < 2 * dc_prog.size.constraints);
    CHECK(mo_prog.size.variables <= 2 * dc_prog.size.variables + mo_prog.size.gain_entries);
    CHECK(dc_prog.size.gain_entries == 0);
  }
}

TEST_CASE("relaxation residuals") {
  const Case c = load_case(case_path("case3.json"));
  const auto m = mo::case_moments(c);
  auto run = mo::solve_case(c, m);
  REQUIRE(run.solution.optimal());
  const auto raw = mo::relaxation_residuals(run.mo, run.solution);
  for (const auto& g : raw.groups) MESSAGE(mo::to_string(g.kind), " rows ", g.rows, " max ", g.max, " mean ", g.mean);
  // Branch rows are tight under positive prices; penalized hats are tight up
  // to the interior-point accuracy.
  CHECK(raw.group(mo::RelaxedKind::BranchFlow)->max < 1e-6);
  CHECK(raw.group(mo::RelaxedKind::ControlHat)->max < 1e-4);
  for (const auto& g : raw.groups) CHECK(g.max > -1e-7);

  // Inflating one control hat shows up as exactly that residual.
  auto probe = run.solution;
  const int uh = run.mo.layout.u_hat[5];
  const double before = raw.group(mo::RelaxedKind::ControlHat)->max;
  probe.x[static_cast<std::size_t>(uh)] += 0.125;
  const auto inflated = mo::relaxation_residuals(run.mo, probe);
  CHECK(inflated.group(mo::RelaxedKind::ControlHat)->max >= 0.125);
  CHECK(inflated.group(mo::RelaxedKind::ControlHat)->max <= 0.125 + before + 1e-12);

  auto tight = run.solution;
  const auto rep = mo::tighten_hats(run.mo, tight);
  CHECK(rep.objective_change <= 1e-12);
  CHECK(rep.min_bound >= -1e-7);
  CHECK(rep.min_branch >= -1e-7);
  const auto after = mo::relaxation_residuals(run.mo, tight);
  CHECK(after.max() < 1e-6);
}

TEST_CASE("mean path satisfies the tightened constraints") {
  const Case c = load_case(case_path("case3.json"));
  const auto m = mo::case_moments(c);
  const auto run = mo::solve_case(c, m);
  REQUIRE(run.solution.optimal());
  const auto& x = run.solution.x;
  const auto& L = run.mo.layout;
  const double kap = run.mo.kappa;
  auto val = [&](int v) { return v >= 0 ? x[static_cast<std::size_t>(v)] : 0.0; };
  const auto& g = c.grid;
  double worst = 0.0;
  for (int k = 0; k < L.steps; ++k) {
    for (int i = 1; i < g.num_buses(); ++i) {
      const auto& b = g.buses()[static_cast<std::size_t>(i)];
      const double v = val(L.x_mean[static_cast<std::size_t>(k * L.dim_x + g.v_row(i))]);
      const double vh = val(L.x_hat[static_cast<std::size_t>(k * L.dim_x + g.v_row(i))]);
      worst = std::min({worst, v - kap * vh - b.v_min, b.v_max - v - kap * vh});
    }
    for (int i = 0; i < g.num_units(); ++i) {
      const auto& u = g.units()[static_cast<std::size_t>(i)];
      const double e = val(L.e_mean[static_cast<std::size_t>((k + 1) * L.n_units + i)]);
      const double eh = val(L.e_hat[static_cast<std::size_t>((k + 1) * L.n_units + i)]);
      worst = std::min({worst, e - kap * eh - u.e_min, u.e_max - e - kap * eh});
      const int c_idx = L.n_src + i;
      const double p = val(L.u_mean[static_cast<std::size_t>(k * L.n_u + c_idx)]);
      const double ph = val(L.u_hat[static_cast<std::size_t>(k * L.n_u + c_idx)]);
      worst = std::min({worst, p - kap * ph - u.p_min, u.p_max - p - kap * ph});
    }
    // Mean network state solves the original equations with the mean inputs.
    const auto eqs = grid::build_network_equations(g, c.config.root_voltage);
    Eigen::VectorXd xv(L.dim_x), yv(L.n_branches), uv(L.n_u);
    for (int r = 0; r < L.dim_x; ++r) xv[r] = val(L.x_mean[static_cast<std::size_t>(k * L.dim_x + r)]);
    for (int b = 0; b < L.n_branches; ++b) yv[b] = val(L.y_mean[static_cast<std::size_t>(k * L.n_branches + b)]);
    for (int u = 0; u < L.n_u; ++u) uv[u] = val(L.u_mean[static_cast<std::size_t>(k * L.n_u + u)]);
    const Eigen::VectorXd res = eqs.Ax * xv + eqs.Ay * yv + eqs.Axi * L.xi_mean.row(k).transpose() +
                                eqs.Ad * c.profile.d(k) + eqs.Au * uv + eqs.c0;
    CHECK(res.lpNorm<Eigen::Infinity>() < 1e-7);
  }
  CHECK(worst > -1e-7);
}

TEST_CASE("uncertainty and confidence monotonicity") {
  const Case base = load_case(case_path("case3.json"));
  double last = -1e300;
  for (double s : {1.0, 1.5, 2.0}) {
    Case c = base;
    c.disturbance.sigma *= s;
    const auto run = mo::solve_case(c, mo::case_moments(c));
    REQUIRE(run.solution.optimal());
    CHECK(run.solution.objective >= last - 1e-7);
    last = run.solution.objective;
  }
  last = -1e300;
  for (double gamma : {0.8, 0.9, 0.95}) {
    Case c = base;
    c.config.gamma = gamma;
    const auto run = mo::solve_case(c, mo::case_moments(c));
    REQUIRE(run.solution.optimal());
    CHECK(run.solution.objective >= last - 1e-7);
    last = run.solution.objective;
  }
}

TEST_CASE("scaled disturbance leaves the feedforward and doubles the spread") {
  // Negligible losses decouple the means from the variances.
  const auto g = source_pair(1e-7, 2e-7);
  const int N = 6;
  auto cfg = toy_config(N, 1);
  cfg.gamma = 0.5;
  cfg.kappa_rule = KappaRule::Gaussian;
  const auto profile = toy_profile(g, N, 0.1);
  const Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(1, 1, 0.05);
  mo::AffinePolicy p1, p2;
  conic::Solution s1, s2;
  mo::MoProgram m1, m2;
  for (int pass = 0; pass < 2; ++pass) {
    const auto model = sde::make_ou_model(1.0, (pass + 1.0) * sigma);
    const auto m = sde::propagate_moments(model, sde::EUParams{}, N, cfg.dt_hours);
    auto prog = mo::build_mo(g, profile, m, sde::EUParams{}, cfg);
    auto sol = conic::solve(prog.program);
    REQUIRE(sol.optimal());
    (pass == 0 ? p1 : p2) = mo::extract_policy(prog, sol, cfg.dt_hours);
    (pass == 0 ? s1 : s2) = sol;
    (pass == 0 ? m1 : m2) = std::move(prog);
  }
  CHECK((p1.u0 - p2.u0).cwiseAbs().maxCoeff() < 1e-6);
  for (int k = 2; k < N; ++k) {
    const double h1 = s1.x[static_cast<std::size_t>(m1.layout.u_hat[static_cast<std::size_t>(k)])];
    const double h2 = s2.x[static_cast<std::size_t>(m2.layout.u_hat[static_cast<std::size_t>(k)])];
    CHECK(h2 == doctest::Approx(2.0 * h1).epsilon(1e-4));
  }
}

TEST_CASE("build errors") {
  const Case c = load_case(case_path("case3.json"));
  const auto eu = sde::EUParams::from_grid(c.grid);
  auto m = mo::case_moments(c);

  auto short_m = m;
  short_m.M.resize(10);
  CHECK_THROWS_AS(mo::build_mo(c.grid, c.profile, short_m, eu, c.config), std::invalid_argument);

  auto bad = m;
  bad.M[7](0, 0) = -1.0;
  CHECK_THROWS_WITH_AS(mo::build_mo(c.grid, c.profile, bad, eu, c.config), doctest::Contains("positive semidefinite"),
                       std::invalid_argument);

  auto wrong = c.config;
  wrong.r_u = Eigen::VectorXd::Ones(5);
  CHECK_THROWS_AS(mo::build_mo(c.grid, c.profile, m, eu, wrong), std::invalid_argument);

  mo::MoOptions opt;
  opt.fixed_gains = {Eigen::MatrixXd::Zero(2, 2)};
  CHECK_THROWS_AS(mo::build_mo(c.grid, c.profile, m, eu, c.config, opt), std::invalid_argument);

  conic::Solution fail;
  fail.status = conic::Status::Infeasible;
  CHECK_THROWS_AS(mo::extract_policy(mo::build_mo(c.grid, c.profile, m, eu, c.config), fail, 0.25), std::runtime_error);
}

TEST_CASE("policy file round trip") {
  const Case c = load_case(case_path("case3.json"));
  const auto run = mo::solve_case(c, mo::case_moments(c));
  REQUIRE(run.solution.optimal());
  std::stringstream ss;
  mo::write_policy(ss, run.policy);
  const auto back = mo::read_policy(ss);
  CHECK(back.u0 == run.policy.u0);
  REQUIRE(back.K.size() == run.policy.K.size());
  for (std::size_t w = 0; w < back.K.size(); ++w) CHECK(back.K[w] == run.policy.K[w]);
  CHECK(back.window_steps == run.policy.window_steps);

  std::stringstream broken("{\"format\": \"adn-affine-policy\", \"dt_hours\": 0.25}");
  CHECK_THROWS_AS(mo::read_policy(broken), std::runtime_error);
}
