// Acceptance run: one PASS/FAIL line per criterion. Arguments select
// criteria by number (all when none are given).

#include "adn/baselines.hpp"
#include "conic_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>

using namespace adn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string case_path(const std::string& name) { return std::string(ADN_SOURCE_DIR) + "/cases/" + name; }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Case quiet(Case c) {
  c.disturbance.sigma.setZero();
  return c;
}

double block_deviation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = b.cwiseAbs().maxCoeff();
  return scale == 0.0 ? a.cwiseAbs().maxCoeff() : (a - b).cwiseAbs().maxCoeff() / scale;
}

sde::EUParams one_unit(double alpha, double beta) {
  return {Eigen::VectorXd::Constant(1, alpha), Eigen::VectorXd::Constant(1, beta)};
}

Outcome moment_exactness() {
  Eigen::MatrixXd sigma(2, 2);
  sigma << 1.0, 0.0, 0.6, 0.8;
  const double tau = 2.0, dt = 0.25;
  const int steps = static_cast<int>(std::lround(10.0 * tau / dt));
  const auto t0 = Clock::now();
  const auto traj = sde::propagate_moments(sde::make_ou_model(tau, sigma), one_unit(0.05, 0.9), steps, dt);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (int k = 0; k <= steps; ++k)
    worst = std::max(worst, (traj.xixi(k) - sde::ou_covariance(tau, sigma, k * dt, k * dt)).cwiseAbs().maxCoeff());
  return {worst < 1e-6 && secs < 1.0, fmt("max abs error %.3g over %d steps (10 tau), %.3f s", worst, steps, secs)};
}

Outcome monte_carlo_oracle() {
  // Paths are recorded five times per moment step so the path-wise eta
  // integral resolves the within-step variation.
  const int fine = 5, steps = 20, paths = 100000;
  const double dt = 0.1;
  const auto eu = one_unit(0.1, 0.9);
  const Eigen::MatrixXd sig = Eigen::MatrixXd::Constant(1, 1, std::sqrt(2.0));
  const auto t0 = Clock::now();
  std::string detail;
  bool pass = true;
  for (const auto& [label, model] :
       {std::pair{"AffineOU", sde::make_ou_model(1.0, sig, Eigen::VectorXd::Constant(1, 0.3))},
        std::pair{"Beta", sde::make_beta_model(1.0, Eigen::MatrixXd::Constant(1, 1, 0.8), Eigen::VectorXd::Constant(1, 0.3))}}) {
    const auto ens = sde::simulate_paths(model, paths, steps * fine, dt / fine, 17, 2);
    const auto prop = sde::propagate_moments(model, eu, steps, dt);
    const auto emp = sde::empirical_moments(ens, eu);
    double worst = 0.0;
    for (int k = 1; k <= steps; ++k) {
      worst = std::max(worst, block_deviation(emp.xixi(fine * k), prop.xixi(k)));
      worst = std::max(worst, block_deviation(emp.xieta(fine * k), prop.xieta(k)));
      worst = std::max(worst, block_deviation(emp.etaeta(fine * k), prop.etaeta(k)));
    }
    pass = pass && worst < 0.03;
    detail += fmt("%s worst block deviation %.4f; ", label, worst);
  }
  const double secs = seconds_since(t0);
  return {pass && secs < 60.0, detail + fmt("%d paths, %.1f s", paths, secs)};
}

Outcome deterministic_collapse() {
  std::string detail;
  bool pass = true;
  for (const char* name : {"case3.json", "case33.json"}) {
    const Case c = quiet(load_case(case_path(name)));
    const auto m = mo::case_moments(c);
    const auto mo_run = mo::solve_case(c, m);
    mo::MoOptions dc;
    dc.feedback = false;
    const auto dc_run = mo::solve_case(c, m, dc);
    const bool ok = mo_run.solution.optimal() && dc_run.solution.optimal();
    const double rel = std::abs(mo_run.solution.objective - dc_run.solution.objective) / std::abs(dc_run.solution.objective);
    pass = pass && ok && rel < 1e-6;
    detail += fmt("%s MO %.10g DC %.10g rel %.2g; ", c.name.c_str(), mo_run.solution.objective,
                  dc_run.solution.objective, rel);
  }
  return {pass, detail};
}

Outcome relaxation_tightness() {
  const Case c = load_case(case_path("case3.json"));
  auto run = mo::solve_case(c, mo::case_moments(c));
  if (!run.solution.optimal()) return {false, "MO solve not optimal"};
  bool weights = c.config.r_u.minCoeff() > 0.0 && c.config.r_v > 0.0 && c.config.r_e > 0.0;
  for (double p : c.config.price) weights = weights && p > 0.0;
  const auto raw = mo::relaxation_residuals(run.mo, run.solution);
  const auto rep = mo::tighten_hats(run.mo, run.solution);
  const auto after = mo::relaxation_residuals(run.mo, run.solution);
  std::string detail = fmt("raw max %.3g, after hat tightening max %.3g (", raw.max(), after.max());
  for (const auto& g : after.groups) detail += fmt("%s %.2g ", mo::to_string(g.kind).c_str(), g.max);
  detail += fmt("); objective change %.2g, min bound row %.2g", rep.objective_change, rep.min_bound);
  const bool pass = weights && after.max() < 1e-6 && rep.objective_change <= 1e-9 && rep.min_bound >= -1e-7 &&
                    rep.min_branch >= -1e-7;
  return {pass, detail};
}



double max_rate(const eval::EvalReport& rep, eval::Family f) { return rep.table(f).max(); }

Outcome chance_validity() {
  const double gamma = 0.95;
  const int n = 1000;
  const double gauss_cap = (1.0 - gamma) + 3.0 * std::sqrt(gamma * (1.0 - gamma) / n);
  const auto t0 = Clock::now();
  std::string detail;
  bool pass = true;
  for (const char* name : {"case3.json", "case123.json"}) {
    for (const auto rule : {KappaRule::Gaussian, KappaRule::DistributionallyRobust}) {
      Case c = load_case(case_path(name));
      c.config.gamma = gamma;
      c.config.kappa_rule = rule;
      const auto pol = baselines::solve_mo(c).policy;
      eval::EvalOptions opt;
      opt.scenarios = n;
      const auto rep = eval::evaluate_policy(pol, c, opt);
      const double v = max_rate(rep, eval::Family::Voltage), e = max_rate(rep, eval::Family::Energy);
      const double cap = rule == KappaRule::Gaussian ? gauss_cap : 1.0 - gamma;
      pass = pass && rep.valid && v <= cap && e <= cap;
      detail += fmt("%s %s voltage %.3f energy %.3f cap %.4f; ", c.name.c_str(), to_string(rule).c_str(), v, e, cap);
    }
  }
  const double secs = seconds_since(t0);
  return {pass && secs < 300.0, detail + fmt("%.0f s", secs)};
}

Outcome feedback_value() {
  const Case c = load_case(case_path("case123.json"));
  const auto m = mo::case_moments(c);
  const auto mo_run = mo::solve_case(c, m);
  mo::MoOptions zero;
  zero.fix_gain_zero = true;
  const auto k0_run = mo::solve_case(c, m, zero);
  if (!mo_run.solution.optimal() || !k0_run.solution.optimal()) return {false, "solve not optimal"};
  eval::EvalOptions opt;
  opt.scenarios = 300;
  const auto a = eval::evaluate_policy(mo_run.policy, c, opt);
  const auto b = eval::evaluate_policy(k0_run.policy, c, opt);
  const auto d = eval::paired_difference(b, a);
  const double combined = std::hypot(a.ci_half_width(), b.ci_half_width());
  return {a.valid && b.valid && d.mean > 2.0 * d.half_width,
          fmt("MO %.5f, K=0 %.5f; paired gap %.5f +- %.5f over %d common paths (independent CI %.4f)",
              a.objective_mean, b.objective_mean, d.mean, d.half_width, d.pairs, combined)};
}

Outcome problem_size() {
  std::string detail;
  bool pass = true;
  for (const char* name : {"case3.json", "case33.json", "case123.json"}) {
    const Case c = load_case(case_path(name));
    const auto m = mo::case_moments(c);
    const auto eu = sde::EUParams::from_grid(c.grid);
    const auto mo_prog = mo::build_mo(c.grid, c.profile, m, eu, c.config);
    mo::MoOptions dc;
    dc.feedback = false;
    const auto dc_prog = mo::build_mo(c.grid, c.profile, m, eu, c.config, dc);
    const auto& a = mo_prog.size;
    const auto& b = dc_prog.size;
    pass = pass && a.constraints < 2 * b.constraints && a.variables <= 2 * b.variables + a.gain_entries;
    detail += fmt("%s cons %zu/%zu vars %zu/%zu |K| %zu; ", c.name.c_str(), a.constraints, b.constraints, a.variables,
                  b.variables, a.gain_entries);
  }
  return {pass, detail};
}

Outcome correlation_trends() {
  const Case c = load_case(case_path("case3.json"));
  eval::EvalOptions opt;
  opt.scenarios = 1000;
  const std::vector<double> taus{0.5, 1.0, 2.0};
  const auto cells = eval::correlation_sweep(
      c, taus, {{"corr", c.disturbance.sigma}, {"indep", eval::independent_sigma(c.disturbance.sigma)}}, opt);
  auto cell = [&](std::size_t t, int v) -> const eval::SweepCell& { return cells[t * 2 + static_cast<std::size_t>(v)]; };
  bool pass = true;
  for (const auto& x : cells) pass = pass && x.ok;
  if (!pass) return {false, "sweep cell failed"};
  std::string detail = "MO optimum";
  for (const auto& x : cells) detail += fmt(" %s/%.1f %.5f", x.variant.c_str(), x.tau, x.mo_objective);
  detail += "; realized ";
  for (std::size_t t = 0; t + 1 < taus.size(); ++t) {
    const auto d = eval::paired_difference(cell(t + 1, 0).objectives, cell(t, 0).objectives);
    pass = pass && d.mean > d.half_width;
    detail += fmt("tau %.1f->%.1f gap %.5f +- %.5f; ", taus[t], taus[t + 1], d.mean, d.half_width);
  }
  for (std::size_t t = 0; t < taus.size(); ++t) {
    const auto d = eval::paired_difference(cell(t, 0).objectives, cell(t, 1).objectives);
    pass = pass && d.mean > d.half_width;
    detail += fmt("tau %.1f corr-indep %.5f +- %.5f; ", taus[t], d.mean, d.half_width);
  }
  return {pass, detail};
}

const baselines::BenchmarkRow* row(const std::vector<baselines::BenchmarkRow>& rows, const std::string& m) {
  for (const auto& r : rows)
    if (r.method == m) return &r;
  return nullptr;
}

// a >= b within the paired CI.
bool not_below(const baselines::BenchmarkRow& a, const baselines::BenchmarkRow& b, std::string& detail) {
  const auto d = eval::paired_difference(a.objectives, b.objectives);
  detail += fmt("%s-%s %.5f +- %.5f (%d); ", a.method.c_str(), b.method.c_str(), d.mean, d.half_width, d.pairs);
  return d.mean >= -d.half_width;
}

Outcome baseline_ordering() {
  const Case c = load_case(case_path("case123.json"));
  baselines::CompareOptions opt;
  opt.n_eval = 300;
  opt.mpc_scenarios = 50;
  opt.timing_runs = 1;
  const auto rows = baselines::compare(c, {"dc", "mpc", "mo", "spbc20", "spbc100"}, opt);
  std::string detail;
  for (const auto& r : rows) {
    if (!r.ok) return {false, r.method + " failed: " + r.error};
    detail += fmt("%s %.5f (%.3f s/step); ", r.method.c_str(), r.objective_mean, r.seconds_per_step);
  }
  bool pass = not_below(*row(rows, "dc"), *row(rows, "mpc"), detail);
  pass = not_below(*row(rows, "mpc"), *row(rows, "mo"), detail) && pass;
  pass = not_below(*row(rows, "spbc20"), *row(rows, "spbc100"), detail) && pass;
  const double ratio = row(rows, "spbc100")->seconds_per_step / row(rows, "mo")->seconds_per_step;
  pass = pass && ratio >= 10.0;
  return {pass, detail + fmt("SPBC100/MO time per step %.1fx", ratio)};
}

Outcome cov_lv_diagnostic() {
  std::string detail;
  bool pass = true;
  for (const char* name : {"case3.json", "case33.json", "case123.json"}) {
    const Case c = load_case(case_path(name));
    // Stationary standard deviation of xi relative to the forecast level.
    const double sd = std::sqrt((c.disturbance.sigma * c.disturbance.sigma.transpose()).diagonal().maxCoeff() / 2.0);
    eval::EvalOptions opt;
    opt.scenarios = 200;
    opt.keep_states = true;
    const auto rep = eval::evaluate_policy(baselines::solve_mo(c).policy, c, opt);
    const auto cv = eval::cov_lv_check(c.grid, rep.states);
    pass = pass && rep.valid && cv.max_ratio < 0.1 && sd <= 0.2;
    detail += fmt("%s max ratio %.4f (xi sd %.3f, %d pairs skipped); ", c.name.c_str(), cv.max_ratio, sd, cv.skipped);
  }
  return {pass, detail};
}

Outcome spbc_mo_agreement() {
  const Case c = load_case(case_path("case3.json"));
  baselines::CompareOptions opt;
  opt.n_eval = 1000;
  opt.timing_runs = 1;
  const auto rows = baselines::compare(c, {"mo", "spbc100"}, opt);
  if (!rows[0].ok || !rows[1].ok) return {false, "method failed"};
  const double a = rows[0].objective_mean, b = rows[1].objective_mean;
  const double rel = std::abs(a - b) / std::abs(a);
  return {rel < 0.05, fmt("MO %.5f, SPBC100 %.5f, relative gap %.4f", a, b, rel)};
}

Outcome solver_contract() {
  int optimal = 0, certified = 0, infeasible = 0;
  double worst = 0.0;
  bool pass = true;
  for (const auto& sc : testing::conic_suite()) {
    const auto sol = conic::solve(sc.prog);
    if (sc.status == conic::Status::Optimal) {
      ++optimal;
      const double r = conic::kkt_residuals(sc.prog, sol).max();
      worst = std::max(worst, r);
      const bool ok = sol.status == conic::Status::Optimal && r < 1e-8 &&
                      std::abs(sol.objective - sc.objective) <= 1e-7 * std::max(1.0, std::abs(sc.objective));
      if (!ok) std::printf("  suite %s: status %s residual %.3g\n", sc.name.c_str(), std::string(to_string(sol.status)).c_str(), r);
      pass = pass && ok;
    } else {
      infeasible += sc.status == conic::Status::Infeasible;
      const bool ok = sol.status == sc.status;
      certified += ok && sc.status == conic::Status::Infeasible;
      pass = pass && ok;
    }
  }
  return {pass && optimal >= 20 && infeasible > 0,
          fmt("%d problems with known optima, worst KKT residual %.3g; %d/%d infeasible certified", optimal, worst,
              certified, infeasible)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"moment exactness", moment_exactness},
      {"Monte Carlo moment oracle", monte_carlo_oracle},
      {"deterministic collapse", deterministic_collapse},
      {"relaxation tightness", relaxation_tightness},
      {"chance constraint validity", chance_validity},
      {"feedback value", feedback_value},
      {"problem size", problem_size},
      {"correlation trends", correlation_trends},
      {"baseline ordering", baseline_ordering},
      {"current-voltage covariance", cov_lv_diagnostic},
      {"SPBC and MO agreement", spbc_mo_agreement},
      {"solver contract", solver_contract},
  };
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!pick.empty() && !pick.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    while (!o.detail.empty() && (o.detail.back() == ' ' || o.detail.back() == ';')) o.detail.pop_back();
    failed += !o.pass;
    std::printf("criterion %2d %-28s %s  %s [%.1f s]\n", id, criteria[i].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed ? EXIT_FAILURE : EXIT_SUCCESS;
}
