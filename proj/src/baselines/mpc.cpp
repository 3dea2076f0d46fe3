#include "adn/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <mutex>

namespace adn::baselines {

int mpc_window(const Case& c, const MpcOptions& options) {
  if (options.window_steps < 0) throw std::invalid_argument("mpc: window must be non-negative");
  if (options.window_steps > 0) return options.window_steps;
  const int w = static_cast<int>(std::lround(c.config.mpc_window_hours / c.config.dt_hours));
  if (w < 1) throw std::invalid_argument("mpc: window shorter than one step");
  return w;
}

namespace {

// Case restricted to steps [k, k + w) with unit energy e and xi held at xi_k.
// Realized energy may sit past a bound by the solver tolerance; it is clamped.
Case window_case(const Case& c, int k, int w, const Eigen::VectorXd& e) {
  const auto& g = c.grid;
  auto units = g.units();
  for (std::size_t i = 0; i < units.size(); ++i) units[i].e0 = std::clamp(e[static_cast<Eigen::Index>(i)], units[i].e_min, units[i].e_max);
  Case sub = c;
  sub.grid = grid::GridModel(g.buses(), g.branches(), g.root(), g.sources(), std::move(units));
  sub.profile.p_pred = c.profile.p_pred.middleRows(k, w);
  sub.profile.p_load = c.profile.p_load.middleRows(k, w);
  sub.profile.q_load = c.profile.q_load.middleRows(k, w);
  sub.config.steps = w;
  sub.config.start_hour = c.config.start_hour + k * c.config.dt_hours;
  sub.config.price.assign(c.config.price.begin() + k, c.config.price.begin() + k + w);
  return sub;
}

sde::MomentTrajectory held_moments(const Eigen::VectorXd& xi, int w, int n_units) {
  sde::MomentTrajectory m;
  m.n_xi = static_cast<int>(xi.size());
  m.n_units = n_units;
  m.mean = xi.transpose().replicate(w + 1, 1);
  m.M.assign(static_cast<std::size_t>(w + 1), Eigen::MatrixXd::Zero(m.n_xi, m.n_xi));
  return m;
}

}  // namespace

eval::ControlLaw mpc_law(const Case& c, const MpcOptions& options, std::vector<double>* solve_seconds) {
  const int window = mpc_window(c, options);
  const int N = c.config.steps;
  const auto solver = options.solver;
  const auto plan = solve_dc(c, solver).policy;
  const auto eu = sde::EUParams::from_grid(c.grid);
  Eigen::MatrixXd e_plan(N + 1, c.grid.num_units());
  for (int i = 0; i < c.grid.num_units(); ++i) {
    const auto hold = mo::exact_hold(eu.alpha[i], eu.beta[i], c.config.dt_hours);
    e_plan(0, i) = c.grid.units()[static_cast<std::size_t>(i)].e0;
    for (int k = 0; k < N; ++k) e_plan(k + 1, i) = hold.a * e_plan(k, i) + hold.b * plan.u0(k, c.grid.num_sources() + i);
  }
  auto mutex = std::make_shared<std::mutex>();
  return [c, window, N, solver, solve_seconds, mutex, e_plan](
             int k, const Eigen::VectorXd& xi, const Eigen::VectorXd& e) -> std::optional<Eigen::VectorXd> {
    const int w = std::min(window, N - k);
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<Eigen::VectorXd> u;
    auto attempt = [&](bool anchored) {
      try {
        const Case sub = window_case(c, k, w, e);
        mo::MoOptions opt;
        opt.feedback = false;
        if (anchored) opt.terminal_energy = e_plan.row(k + w).transpose();
        const auto run = mo::solve_case(sub, held_moments(xi, w, c.grid.num_units()), opt, solver);
        if (run.solution.optimal()) u = run.policy.u0.row(0).transpose();
      } catch (const std::exception&) {
        u.reset();
      }
    };
    if (k + w < N) attempt(true);
    if (!u) attempt(false);
    if (solve_seconds) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::lock_guard lock(*mutex);
      solve_seconds->push_back(s);
    }
    return u;
  };
}

MpcRun run_mpc(const Case& c, int window_steps, std::uint64_t seed, const MpcOptions& options) {
  MpcOptions opt = options;
  opt.window_steps = window_steps;
  const auto ens = sde::simulate_paths(c.disturbance, 1, c.config.steps, c.config.dt_hours, seed, 10, 1);
  MpcRun out;
  out.trajectory = eval::run_scenario(mpc_law(c, opt), c, ens.path(0));
  out.objective = out.trajectory.objective;
  out.failures = out.trajectory.control_failures;
  return out;
}

}  // namespace adn::baselines
