#include "adn/mo.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace adn::mo {

namespace {

double value(const std::vector<double>& x, int var) { return var >= 0 ? x[static_cast<std::size_t>(var)] : 0.0; }

double norm_of(const std::vector<conic::AffineExpr>& entries, const std::vector<double>& x) {
  double s = 0.0;
  for (const auto& e : entries) {
    const double v = e.evaluate(x);
    s += v * v;
  }
  return std::sqrt(s);
}

double residual(const RelaxedRow& row, const std::vector<double>& x) {
  if (row.kind != RelaxedKind::BranchFlow) return value(x, row.hat) - norm_of(row.entries, x);
  const double l = value(x, row.hat);
  const double v = row.entries[0].evaluate(x);
  double rhs = 0.0;
  for (std::size_t i = 1; i < row.entries.size(); ++i) {
    const double e = row.entries[i].evaluate(x);
    rhs += e * e;
  }
  return l * v - rhs;
}

}  // namespace

AffinePolicy extract_policy(const MoProgram& mo, const conic::Solution& sol, double dt_hours) {
  if (!sol.optimal())
    throw std::runtime_error(std::string("extract_policy: solver status is ") + std::string(conic::to_string(sol.status)));
  const auto& L = mo.layout;
  AffinePolicy p;
  p.dt_hours = dt_hours;
  p.window_steps = L.window_steps;
  p.u0.resize(L.steps, L.n_u);
  p.K.assign(static_cast<std::size_t>(L.n_windows), Eigen::MatrixXd::Zero(L.n_u, L.n_xi));
  for (int w = 0; w < L.n_windows; ++w)
    for (int c = 0; c < L.n_u; ++c)
      for (int j = 0; j < L.n_xi; ++j)
        p.K[static_cast<std::size_t>(w)](c, j) = L.K.empty() ? L.fixed_gain(w, c, j) : value(sol.x, L.gain_var(w, c, j));
  double worst = 0.0;
  for (int k = 0; k < L.steps; ++k) {
    const Eigen::VectorXd xi = L.xi_mean.row(k).transpose();
    for (int c = 0; c < L.n_u; ++c) p.u0(k, c) = value(sol.x, L.u0[static_cast<std::size_t>(k * L.n_u + c)]);
    const Eigen::VectorXd replay = p.control(k, xi);
    for (int c = 0; c < L.n_u; ++c) {
      const double um = value(sol.x, L.u_mean[static_cast<std::size_t>(k * L.n_u + c)]);
      worst = std::max(worst, std::abs(replay[c] - um) / std::max(1.0, std::abs(um)));
    }
  }
  if (!(worst <= 1e-8)) throw std::runtime_error("extract_policy: mean control replay mismatch " + std::to_string(worst));
  return p;
}

double RelaxationReport::max() const {
  double m = 0.0;
  for (const auto& g : groups) m = std::max(m, g.max);
  return m;
}

const RelaxationGroup* RelaxationReport::group(RelaxedKind kind) const {
  for (const auto& g : groups)
    if (g.kind == kind) return &g;
  return nullptr;
}

RelaxationReport relaxation_residuals(const MoProgram& mo, const conic::Solution& sol) {
  RelaxationReport rep;
  for (const auto kind : {RelaxedKind::ControlHat, RelaxedKind::EnergyHat, RelaxedKind::StateHat, RelaxedKind::BranchFlow}) {
    RelaxationGroup g;
    g.kind = kind;
    double sum = 0.0;
    for (const auto& row : mo.relaxed) {
      if (row.kind != kind) continue;
      const double r = residual(row, sol.x);
      g.max = std::max(g.max, r);
      sum += r;
      ++g.rows;
    }
    if (g.rows == 0) continue;
    g.mean = sum / static_cast<double>(g.rows);
    rep.groups.push_back(g);
  }
  return rep;
}

TightenReport tighten_hats(const MoProgram& mo, conic::Solution& sol) {
  TightenReport rep;
  const double before = mo.program.objective(sol.x);
  for (const auto& row : mo.relaxed) {
    if (row.kind == RelaxedKind::BranchFlow) continue;
    const auto h = static_cast<std::size_t>(row.hat);
    const double n = norm_of(row.entries, sol.x);
    if (sol.x[h] > n) {
      sol.x[h] = n;
      ++rep.lowered;
    }
  }
  rep.objective_change = mo.program.objective(sol.x) - before;
  rep.min_bound = std::numeric_limits<double>::infinity();
  for (const auto& b : mo.bounds) rep.min_bound = std::min(rep.min_bound, b.evaluate(sol.x));
  rep.min_branch = std::numeric_limits<double>::infinity();
  for (const auto& row : mo.relaxed)
    if (row.kind == RelaxedKind::BranchFlow) rep.min_branch = std::min(rep.min_branch, residual(row, sol.x));
  return rep;
}

MoResult solve_case(const Case& c, const sde::MomentTrajectory& moments, const MoOptions& options,
                    const conic::SolverOptions& solver) {
  MoResult r;
  const auto t0 = std::chrono::steady_clock::now();
  r.mo = build_mo(c.grid, c.profile, moments, sde::EUParams::from_grid(c.grid), c.config, options);
  r.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.solution = conic::solve(r.mo.program, solver);
  if (r.solution.optimal()) r.policy = extract_policy(r.mo, r.solution, c.config.dt_hours);
  return r;
}

}  // namespace adn::mo
