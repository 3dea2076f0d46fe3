#include "adn/baselines.hpp"

#include <chrono>
#include <cmath>

namespace adn::baselines {

using conic::AffineExpr;
using conic::ConeKind;
using conic::Term;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

MethodPolicy solve_moment_program(const Case& c, const mo::MoOptions& opt, const conic::SolverOptions& solver) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto run = mo::solve_case(c, mo::case_moments(c), opt, solver);
  MethodPolicy out;
  out.stats.seconds = seconds_since(t0);
  out.stats.status = run.solution.status;
  out.stats.objective = run.solution.objective;
  out.stats.size = run.mo.size;
  out.stats.cones = run.mo.program.cones().size();
  out.stats.iterations = run.solution.iterations;
  if (!run.solution.optimal())
    throw std::runtime_error("solver status " + std::string(conic::to_string(run.solution.status)));
  out.policy = run.policy;
  return out;
}

}  // namespace

MethodPolicy solve_mo(const Case& c, const conic::SolverOptions& solver) { return solve_moment_program(c, {}, solver); }

MethodPolicy solve_dc(const Case& c, const conic::SolverOptions& solver) {
  mo::MoOptions opt;
  opt.feedback = false;
  return solve_moment_program(c, opt, solver);
}

MethodPolicy solve_spbc(const Case& c, const SpbcOptions& options) {
  if (options.scenarios < 1) throw std::invalid_argument("spbc: scenarios must be at least 1");
  const auto ens = sde::simulate_paths(c.disturbance, options.scenarios, c.config.steps, c.config.dt_hours,
                                       options.seed, options.substeps, 1);
  std::vector<Eigen::MatrixXd> paths;
  for (int p = 0; p < ens.n_paths; ++p) paths.push_back(ens.path(p));
  return solve_spbc(c, paths, options);
}

MethodPolicy solve_spbc(const Case& c, const std::vector<Eigen::MatrixXd>& paths, const SpbcOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& g = c.grid;
  const auto& cfg = c.config;
  const int N = cfg.steps;
  const int n_src = g.num_sources(), n_units = g.num_units(), n_u = g.num_controls();
  const int nbr = g.num_branches(), nbus = g.num_buses(), dim_x = g.dim_x();
  const int n_xi = n_src;
  const double dt = cfg.dt_hours;
  cfg.validate(n_u);
  if (paths.empty()) throw std::invalid_argument("spbc: no scenarios");
  for (const auto& p : paths)
    if (p.rows() < N || p.cols() != n_xi) throw std::invalid_argument("spbc: scenario path has the wrong shape");
  const auto S = static_cast<int>(paths.size());
  const double w = 1.0 / S;
  const int window_steps = cfg.window_steps();
  const int n_windows = window_steps > 0 ? (N + window_steps - 1) / window_steps : 1;
  const bool gains = !options.feedforward_only && n_xi > 0;
  const auto eu = sde::EUParams::from_grid(g);

  conic::ConicProgram prog;
  mo::ModelSize size;
  const auto eqs = grid::build_network_equations(g, cfg.root_voltage);
  const Eigen::SparseMatrix<double, Eigen::RowMajor> Ax = eqs.Ax, Ay = eqs.Ay, Au = eqs.Au;
  std::vector<grid::Polygon> polygons;
  for (const auto& s : g.sources()) polygons.push_back(grid::build_capacity_polygon(s.capacity, cfg.polygon_sides));

  std::vector<int> u0(static_cast<std::size_t>(N * n_u)), K;
  for (auto& v : u0) v = prog.add_variable();
  size.variables += u0.size();
  if (gains) {
    K.resize(static_cast<std::size_t>(n_windows * n_u * n_xi));
    for (auto& v : K) v = prog.add_variable();
    size.gain_entries = K.size();
    size.variables += K.size();
  }
  auto gain = [&](int win, int cc, int j) { return K[static_cast<std::size_t>((win * n_u + cc) * n_xi + j)]; };

  auto bound = [&](const AffineExpr& e) {
    prog.add_nonneg(e);
    ++size.constraints;
  };

  std::vector<int> u(static_cast<std::size_t>(n_u)), x(static_cast<std::size_t>(dim_x)), y(static_cast<std::size_t>(nbr));
  std::vector<int> e_prev(static_cast<std::size_t>(n_units));
  for (int s = 0; s < S; ++s) {
    const auto& xi_path = paths[static_cast<std::size_t>(s)];
    for (int k = 0; k < N; ++k) {
      const int win = window_steps > 0 ? k / window_steps : 0;
      const Eigen::VectorXd xi = xi_path.row(k).transpose();
      for (int cc = 0; cc < n_u; ++cc) {
        u[static_cast<std::size_t>(cc)] = prog.add_variable();
        prog.add_square_cost(u[static_cast<std::size_t>(cc)], w * dt * cfg.r_u[cc]);
        std::vector<Term> row{{u[static_cast<std::size_t>(cc)], 1.0}, {u0[static_cast<std::size_t>(k * n_u + cc)], -1.0}};
        if (gains)
          for (int j = 0; j < n_xi; ++j)
            if (xi[j] != 0.0) row.push_back({gain(win, cc, j), -xi[j]});
        prog.add_equality(std::move(row), 0.0);
        ++size.constraints;
      }
      for (auto& v : x) v = prog.add_variable();
      for (auto& v : y) v = prog.add_variable();
      size.variables += static_cast<std::size_t>(n_u + dim_x + nbr);

      const Eigen::VectorXd rhs = -(eqs.Axi * xi + eqs.Ad * c.profile.d(k) + eqs.c0);
      for (Eigen::Index r = 0; r < Ax.rows(); ++r) {
        std::vector<Term> row;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Ax, r); it; ++it)
          row.push_back({x[static_cast<std::size_t>(it.col())], it.value()});
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Ay, r); it; ++it)
          row.push_back({y[static_cast<std::size_t>(it.col())], it.value()});
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Au, r); it; ++it)
          row.push_back({u[static_cast<std::size_t>(it.col())], it.value()});
        prog.add_equality(std::move(row), rhs[r]);
      }
      size.constraints += static_cast<std::size_t>(Ax.rows());

      const double price = cfg.price[static_cast<std::size_t>(k)] * cfg.price_scale;
      for (int b = 0; b < nbr; ++b)
        if (g.branches()[static_cast<std::size_t>(b)].from == g.root())
          prog.add_linear_cost(x[static_cast<std::size_t>(g.p_row(b))], w * dt * price);
      for (int i = 0; i < nbus; ++i) {
        const int v = x[static_cast<std::size_t>(g.v_row(i))];
        prog.add_square_cost(v, w * dt * cfg.r_v);
        prog.add_linear_cost(v, -2.0 * w * dt * cfg.r_v);
        prog.add_constant_cost(w * dt * cfg.r_v);
        if (i == g.root()) continue;
        const auto& bus = g.buses()[static_cast<std::size_t>(i)];
        AffineExpr lo = AffineExpr::variable(v);
        lo += -bus.v_min;
        AffineExpr hi(bus.v_max);
        hi.add(v, -1.0);
        bound(lo);
        bound(hi);
      }
      for (int b = 0; b < nbr; ++b) {
        const auto& br = g.branches()[static_cast<std::size_t>(b)];
        AffineExpr cap(br.l_max);
        cap.add(y[static_cast<std::size_t>(b)], -1.0);
        bound(cap);
        prog.add_cone_exprs(ConeKind::RotatedSecondOrder,
                            {AffineExpr::variable(y[static_cast<std::size_t>(b)]),
                             AffineExpr::variable(x[static_cast<std::size_t>(g.v_row(br.from))], 0.5),
                             AffineExpr::variable(x[static_cast<std::size_t>(g.p_row(b))]),
                             AffineExpr::variable(x[static_cast<std::size_t>(g.q_row(b))])});
        ++size.constraints;
      }
      for (int j = 0; j < n_src; ++j) {
        const auto& poly = polygons[static_cast<std::size_t>(j)];
        const double p = c.profile.p_pred(k, j) + xi[j];
        for (Eigen::Index m = 0; m < poly.C.rows(); ++m) {
          AffineExpr e(poly.D[m] - poly.C(m, 0) * p);
          e.add(u[static_cast<std::size_t>(j)], -poly.C(m, 1));
          bound(e);
        }
      }
      for (int i = 0; i < n_units; ++i) {
        const auto& unit = g.units()[static_cast<std::size_t>(i)];
        const int pu = u[static_cast<std::size_t>(n_src + i)];
        AffineExpr hi(unit.p_max);
        hi.add(pu, -1.0);
        AffineExpr lo = AffineExpr::variable(pu);
        lo += -unit.p_min;
        bound(hi);
        bound(lo);

        const auto hold = mo::exact_hold(eu.alpha[i], eu.beta[i], dt);
        const int e = prog.add_variable();
        ++size.variables;
        std::vector<Term> row{{e, 1.0}, {pu, -hold.b}};
        double rhs0 = 0.0;
        if (k == 0)
          rhs0 = hold.a * unit.e0;
        else
          row.push_back({e_prev[static_cast<std::size_t>(i)], -hold.a});
        prog.add_equality(std::move(row), rhs0);
        ++size.constraints;
        e_prev[static_cast<std::size_t>(i)] = e;
        AffineExpr ehi(unit.e_max);
        ehi.add(e, -1.0);
        AffineExpr elo = AffineExpr::variable(e);
        elo += -unit.e_min;
        bound(ehi);
        bound(elo);
        if (k == N - 1) prog.add_square_cost(e, w * cfg.r_e);
      }
    }
  }

  const auto sol = conic::solve(prog, options.solver);
  MethodPolicy out;
  out.stats.seconds = seconds_since(t0);
  out.stats.status = sol.status;
  out.stats.objective = sol.objective;
  out.stats.size = size;
  out.stats.cones = prog.cones().size();
  out.stats.iterations = sol.iterations;
  if (sol.status == conic::Status::Infeasible)
    throw SpbcInfeasible("spbc: sampled program is infeasible for " + std::to_string(S) + " scenarios");
  if (!sol.optimal()) throw std::runtime_error("spbc: solver status " + std::string(conic::to_string(sol.status)));

  auto& pol = out.policy;
  pol.dt_hours = dt;
  pol.window_steps = window_steps;
  pol.u0.resize(N, n_u);
  for (int k = 0; k < N; ++k)
    for (int cc = 0; cc < n_u; ++cc) pol.u0(k, cc) = sol.x[static_cast<std::size_t>(u0[static_cast<std::size_t>(k * n_u + cc)])];
  pol.K.assign(static_cast<std::size_t>(n_windows), Eigen::MatrixXd::Zero(n_u, n_xi));
  if (gains)
    for (int win = 0; win < n_windows; ++win)
      for (int cc = 0; cc < n_u; ++cc)
        for (int j = 0; j < n_xi; ++j)
          pol.K[static_cast<std::size_t>(win)](cc, j) = sol.x[static_cast<std::size_t>(gain(win, cc, j))];
  return out;
}

}  // namespace adn::baselines
