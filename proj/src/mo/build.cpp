#include "adn/mo.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace adn::mo {

using conic::AffineExpr;
using conic::ConeKind;
using conic::Term;

std::string to_string(RelaxedKind kind) {
  switch (kind) {
    case RelaxedKind::ControlHat: return "control_hat";
    case RelaxedKind::EnergyHat: return "energy_hat";
    case RelaxedKind::StateHat: return "state_hat";
    case RelaxedKind::BranchFlow: return "branch_flow";
  }
  return "?";
}

sde::MomentTrajectory case_moments(const Case& c) {
  sde::MomentOptions opt;
  opt.window_steps = c.config.window_steps();
  return sde::propagate_moments(c.disturbance, sde::EUParams::from_grid(c.grid), c.config.steps, c.config.dt_hours,
                                opt);
}

namespace {

/// Factor with numerically zero columns dropped.
Eigen::MatrixXd trimmed_factor(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return Eigen::MatrixXd(m.rows(), 0);
  const Eigen::MatrixXd n = sde::psd_factor(m);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < n.cols(); ++c)
    if (n.col(c).norm() > 0.0) keep.push_back(c);
  Eigen::MatrixXd out(n.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = n.col(keep[i]);
  return out;
}

void check_psd(const Eigen::MatrixXd& m, int k) {
  if (m.size() == 0) return;
  if (!m.allFinite()) throw std::invalid_argument("build_mo: moment matrix at step " + std::to_string(k) + " is not finite");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-9 * scale)
    throw std::invalid_argument("build_mo: moment matrix at step " + std::to_string(k) +
                                " is not positive semidefinite (min eigenvalue " +
                                std::to_string(es.eigenvalues().minCoeff()) + ")");
}

std::vector<Term> sparse_row_terms(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m, Eigen::Index row,
                                   const std::vector<int>& vars, std::size_t offset) {
  std::vector<Term> out;
  for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, row); it; ++it)
    if (it.value() != 0.0) out.push_back({vars[offset + static_cast<std::size_t>(it.col())], it.value()});
  return out;
}

}  // namespace

MoProgram build_mo(const grid::GridModel& grid, const grid::InjectionProfile& profile,
                   const sde::MomentTrajectory& moments, const sde::EUParams& eu, const CaseConfig& cfg,
                   const MoOptions& options) {
  const int N = cfg.steps;
  const int n_src = grid.num_sources();
  const int n_units = grid.num_units();
  const int n_u = grid.num_controls();
  const int n_xi = n_src;
  const int nbr = grid.num_branches();
  const int nbus = grid.num_buses();
  const int dim_x = grid.dim_x();
  const double dt = cfg.dt_hours;

  cfg.validate(n_u);
  if (N <= 0) throw std::invalid_argument("build_mo: horizon must be positive");
  if (profile.steps() < N) throw std::invalid_argument("build_mo: profile shorter than the horizon");
  if (moments.steps() < N) throw std::invalid_argument("build_mo: moments shorter than the horizon");
  if (moments.n_xi != n_xi)
    throw std::invalid_argument("build_mo: moments have " + std::to_string(moments.n_xi) + " disturbance components, grid has " +
                                std::to_string(n_xi) + " sources");
  if (eu.size() != n_units) throw std::invalid_argument("build_mo: EU parameters do not match the grid");
  if (options.terminal_energy.size() > 0 && options.terminal_energy.size() != n_units)
    throw std::invalid_argument("build_mo: terminal energy does not match the unit count");
  if (static_cast<int>(cfg.price.size()) < N) throw std::invalid_argument("build_mo: price shorter than the horizon");

  const bool feedback = options.feedback;
  const bool fixed = !options.fixed_gains.empty();
  const bool gains = feedback && !options.fix_gain_zero && !fixed && n_xi > 0;
  const int window_steps = cfg.window_steps();
  const int n_windows = window_steps > 0 ? (N + window_steps - 1) / window_steps : 1;
  if (fixed) {
    if (static_cast<int>(options.fixed_gains.size()) != n_windows)
      throw std::invalid_argument("build_mo: expected " + std::to_string(n_windows) + " fixed gain matrices");
    for (const auto& k : options.fixed_gains)
      if (k.rows() != n_u || k.cols() != n_xi) throw std::invalid_argument("build_mo: fixed gain has the wrong shape");
  }
  auto fixed_gain = [&](int w, int c, int j) {
    return fixed && !options.fix_gain_zero ? options.fixed_gains[static_cast<std::size_t>(w)](c, j) : 0.0;
  };
  if (feedback) {
    if (moments.n_units != n_units) throw std::invalid_argument("build_mo: moments were propagated for another unit count");
    if (moments.window_steps != window_steps || moments.n_windows < n_windows)
      throw std::invalid_argument("build_mo: moment windows do not match the configured gain windows");
  }
  const double kap = kappa(cfg.gamma, cfg.kappa_rule);

  MoProgram out;
  auto& prog = out.program;
  auto& L = out.layout;
  auto& size = out.size;
  out.kappa = kap;
  L.steps = N;
  L.n_u = n_u;
  L.n_xi = n_xi;
  L.n_src = n_src;
  L.n_units = n_units;
  L.dim_x = dim_x;
  L.n_branches = nbr;
  L.n_windows = n_windows;
  L.window_steps = window_steps;
  L.xi_mean = moments.mean.topRows(N);
  if (fixed && !options.fix_gain_zero) L.fixed = options.fixed_gains;
  L.e0.resize(n_units);
  for (int i = 0; i < n_units; ++i) L.e0[i] = grid.units()[static_cast<std::size_t>(i)].e0;

  const auto eqs = grid::build_network_equations(grid, cfg.root_voltage);
  const Eigen::SparseMatrix<double, Eigen::RowMajor> Ax = eqs.Ax, Ay = eqs.Ay, Au = eqs.Au;
  const Eigen::Index n_rows = eqs.Ax.rows();

  // Gains and lifted sensitivities G_w = A_xi + A_u K_w of the linear model.
  if (gains) {
    L.K.resize(static_cast<std::size_t>(n_windows * n_u * n_xi));
    for (auto& v : L.K) v = prog.add_variable();
    size.gain_entries = L.K.size();
  }
  std::vector<int> hat_rows;
  for (int b = 0; b < nbr; ++b) hat_rows.push_back(grid.p_row(b));
  for (int b = 0; b < nbr; ++b) hat_rows.push_back(grid.q_row(b));
  for (int i = 0; i < nbus; ++i)
    if (i != grid.root()) hat_rows.push_back(grid.v_row(i));

  grid::LinearNetwork lin;
  std::vector<int> G;  // [(w * hat_rows + h) * n_xi + j]
  const auto nh = static_cast<int>(hat_rows.size());
  if (feedback) {
    lin = grid::build_lindistflow(grid, cfg.root_voltage);
    if (gains) {
      G.resize(static_cast<std::size_t>(n_windows * nh * n_xi));
      for (int w = 0; w < n_windows; ++w)
        for (int h = 0; h < nh; ++h)
          for (int j = 0; j < n_xi; ++j) {
            const int r = hat_rows[static_cast<std::size_t>(h)];
            AffineExpr e(lin.Axi(r, j));
            for (int c = 0; c < n_u; ++c)
              if (lin.Au(r, c) != 0.0) e.add(L.gain_var(w, c, j), lin.Au(r, c));
            G[static_cast<std::size_t>((w * nh + h) * n_xi + j)] = prog.define(e);
          }
    }
  }
  auto sensitivity = [&](int w, int h, int j) {
    if (gains) return AffineExpr::variable(G[static_cast<std::size_t>((w * nh + h) * n_xi + j)]);
    const int r = hat_rows[static_cast<std::size_t>(h)];
    double g = lin.Axi(r, j);
    for (int c = 0; c < n_u; ++c) g += lin.Au(r, c) * fixed_gain(w, c, j);
    return AffineExpr(g);
  };
  auto gain_expr = [&](int w, int c, int j, double scale) {
    AffineExpr e;
    if (gains && scale != 0.0) e.add(L.gain_var(w, c, j), scale);
    if (!gains) e += fixed_gain(w, c, j) * scale;
    return e;
  };

  auto hat_cone = [&](RelaxedKind kind, int k, int index, std::vector<AffineExpr> entries) {
    const int hat = prog.add_variable();
    RelaxedRow row{kind, k, index, hat, entries};
    bool constant = true;
    double norm2 = 0.0;
    for (const auto& e : entries) {
      constant = constant && e.terms.empty();
      norm2 += e.constant * e.constant;
    }
    if (constant) {
      // Fixed spread: a plain lower bound instead of a degenerate cone.
      AffineExpr lo = AffineExpr::variable(hat);
      lo += -std::sqrt(norm2);
      prog.add_nonneg(lo);
    } else {
      entries.insert(entries.begin(), AffineExpr::variable(hat));
      prog.add_cone_exprs(ConeKind::SecondOrder, entries);
    }
    out.relaxed.push_back(std::move(row));
    ++size.variables;
    ++size.constraints;
    return hat;
  };
  auto bound = [&](const AffineExpr& e) {
    prog.add_nonneg(e);
    out.bounds.push_back(e);
    ++size.constraints;
  };

  L.u0.assign(static_cast<std::size_t>(N * n_u), -1);
  L.u_mean.assign(static_cast<std::size_t>(N * n_u), -1);
  L.u_hat.assign(static_cast<std::size_t>(N * n_u), -1);
  L.x_mean.assign(static_cast<std::size_t>(N * dim_x), -1);
  L.x_hat.assign(static_cast<std::size_t>(N * dim_x), -1);
  L.y_mean.assign(static_cast<std::size_t>(N * nbr), -1);
  L.e_mean.assign(static_cast<std::size_t>((N + 1) * n_units), -1);
  L.e_hat.assign(static_cast<std::size_t>((N + 1) * n_units), -1);

  std::vector<grid::Polygon> polygons;
  for (const auto& s : grid.sources()) polygons.push_back(grid::build_capacity_polygon(s.capacity, cfg.polygon_sides));

  // Unit eta blocks: indices of eta(w, i, .) in the auxiliary vector.
  std::vector<std::vector<Eigen::Index>> unit_aux(static_cast<std::size_t>(n_units));
  if (feedback)
    for (int i = 0; i < n_units; ++i)
      for (int w = 0; w < moments.n_windows; ++w)
        for (int j = 0; j < n_xi; ++j) unit_aux[static_cast<std::size_t>(i)].push_back(moments.aux_index(w, i, j));

  for (int k = 0; k < N; ++k) {
    const int w = window_steps > 0 ? k / window_steps : 0;
    const Eigen::VectorXd xi_mean = moments.mean.row(k).transpose();
    Eigen::MatrixXd Nxi, xixi;
    if (feedback) {
      check_psd(moments.M[static_cast<std::size_t>(k)], k);
      xixi = moments.xixi(k);
      Nxi = trimmed_factor(xixi);
    }
    const double price = cfg.price[static_cast<std::size_t>(k)] * cfg.price_scale;

    // Controls.
    for (int c = 0; c < n_u; ++c) {
      const auto idx = static_cast<std::size_t>(k * n_u + c);
      const int um = prog.add_variable();
      prog.add_square_cost(um, dt * cfg.r_u[c]);
      L.u_mean[idx] = um;
      ++size.variables;
      if (!feedback) {
        L.u0[idx] = um;
        continue;
      }
      const int u0 = prog.add_variable();
      L.u0[idx] = u0;
      ++size.variables;
      std::vector<Term> row{{um, 1.0}, {u0, -1.0}};
      double shift = 0.0;
      for (int j = 0; j < n_xi; ++j) {
        if (gains && xi_mean[j] != 0.0) row.push_back({L.gain_var(w, c, j), -xi_mean[j]});
        shift += fixed_gain(w, c, j) * xi_mean[j];
      }
      prog.add_equality(std::move(row), shift);
      ++size.constraints;

      std::vector<AffineExpr> entries;
      for (Eigen::Index m = 0; m < Nxi.cols(); ++m) {
        AffineExpr e;
        for (int j = 0; j < n_xi; ++j) e.add(gain_expr(w, c, j, Nxi(j, m)));
        entries.push_back(std::move(e));
      }
      const int uh = hat_cone(RelaxedKind::ControlHat, k, c, std::move(entries));
      prog.add_square_cost(uh, dt * cfg.r_u[c]);
      L.u_hat[idx] = uh;
    }

    // Mean network in the sparse original form.
    for (int r = 0; r < dim_x; ++r) L.x_mean[static_cast<std::size_t>(k * dim_x + r)] = prog.add_variable();
    for (int b = 0; b < nbr; ++b) L.y_mean[static_cast<std::size_t>(k * nbr + b)] = prog.add_variable();
    size.variables += static_cast<std::size_t>(dim_x + nbr);
    {
      const Eigen::VectorXd rhs = -(eqs.Axi * xi_mean + eqs.Ad * profile.d(k) + eqs.c0);
      for (Eigen::Index r = 0; r < n_rows; ++r) {
        auto row = sparse_row_terms(Ax, r, L.x_mean, static_cast<std::size_t>(k * dim_x));
        auto ry = sparse_row_terms(Ay, r, L.y_mean, static_cast<std::size_t>(k * nbr));
        auto ru = sparse_row_terms(Au, r, L.u_mean, static_cast<std::size_t>(k * n_u));
        row.insert(row.end(), ry.begin(), ry.end());
        row.insert(row.end(), ru.begin(), ru.end());
        prog.add_equality(std::move(row), rhs[r]);
      }
      size.constraints += static_cast<std::size_t>(n_rows);
    }

    // State hats.
    if (feedback) {
      for (int h = 0; h < nh; ++h) {
        const int r = hat_rows[static_cast<std::size_t>(h)];
        std::vector<AffineExpr> entries;
        for (Eigen::Index m = 0; m < Nxi.cols(); ++m) {
          AffineExpr e;
          for (int j = 0; j < n_xi; ++j) e.add(sensitivity(w, h, j), Nxi(j, m));
          entries.push_back(std::move(e));
        }
        L.x_hat[static_cast<std::size_t>(k * dim_x + r)] = hat_cone(RelaxedKind::StateHat, k, r, std::move(entries));
      }
    }
    auto xm = [&](int r) { return L.x_mean[static_cast<std::size_t>(k * dim_x + r)]; };
    auto xh = [&](int r) { return L.x_hat[static_cast<std::size_t>(k * dim_x + r)]; };

    // Objective: energy purchase and voltage profile.
    for (int b = 0; b < nbr; ++b)
      if (grid.branches()[static_cast<std::size_t>(b)].from == grid.root()) prog.add_linear_cost(xm(grid.p_row(b)), dt * price);
    for (int i = 0; i < nbus; ++i) {
      const int v = xm(grid.v_row(i));
      prog.add_square_cost(v, dt * cfg.r_v);
      prog.add_linear_cost(v, -2.0 * dt * cfg.r_v);
      prog.add_constant_cost(dt * cfg.r_v);
      if (xh(grid.v_row(i)) >= 0) prog.add_square_cost(xh(grid.v_row(i)), dt * cfg.r_v);
    }

    // Voltage bounds, tightened by kappa * v hat.
    for (int i = 0; i < nbus; ++i) {
      if (i == grid.root()) continue;
      const auto& bus = grid.buses()[static_cast<std::size_t>(i)];
      const int v = xm(grid.v_row(i));
      const int vh = xh(grid.v_row(i));
      AffineExpr lo = AffineExpr::variable(v);
      lo += -bus.v_min;
      AffineExpr hi(bus.v_max);
      hi.add(v, -1.0);
      if (vh >= 0) {
        lo.add(vh, -kap);
        hi.add(vh, -kap);
      }
      bound(lo);
      bound(hi);
    }

    // Branch currents: upper bound and the relaxed flow relation.
    for (int b = 0; b < nbr; ++b) {
      const auto& br = grid.branches()[static_cast<std::size_t>(b)];
      const int y = L.y_mean[static_cast<std::size_t>(k * nbr + b)];
      AffineExpr cap(br.l_max);
      cap.add(y, -1.0);
      bound(cap);

      std::vector<AffineExpr> cone{AffineExpr::variable(y), AffineExpr::variable(xm(grid.v_row(br.from)), 0.5),
                                   AffineExpr::variable(xm(grid.p_row(b))), AffineExpr::variable(xm(grid.q_row(b)))};
      RelaxedRow row{RelaxedKind::BranchFlow, k, b, y,
                     {AffineExpr::variable(xm(grid.v_row(br.from))), AffineExpr::variable(xm(grid.p_row(b))),
                      AffineExpr::variable(xm(grid.q_row(b)))}};
      if (feedback) {
        cone.push_back(AffineExpr::variable(xh(grid.p_row(b))));
        cone.push_back(AffineExpr::variable(xh(grid.q_row(b))));
        row.entries.push_back(AffineExpr::variable(xh(grid.p_row(b))));
        row.entries.push_back(AffineExpr::variable(xh(grid.q_row(b))));
      }
      prog.add_cone_exprs(ConeKind::RotatedSecondOrder, cone);
      out.relaxed.push_back(std::move(row));
      ++size.constraints;
    }

    // Source capacity polygons.
    for (int s = 0; s < n_src; ++s) {
      const auto& poly = polygons[static_cast<std::size_t>(s)];
      const int c = s;
      const int um = L.u_mean[static_cast<std::size_t>(k * n_u + c)];
      const int uh = L.u_hat[static_cast<std::size_t>(k * n_u + c)];
      const double p_mean = profile.p_pred(k, s) + xi_mean[s];
      const double p_hat = feedback ? std::sqrt(std::max(0.0, xixi(s, s))) : 0.0;
      for (Eigen::Index m = 0; m < poly.C.rows(); ++m) {
        AffineExpr e(poly.D[m] - poly.C(m, 0) * p_mean - kap * std::abs(poly.C(m, 0)) * p_hat);
        e.add(um, -poly.C(m, 1));
        if (uh >= 0) e.add(uh, -kap * std::abs(poly.C(m, 1)));
        bound(e);
      }
    }

    // Unit power limits.
    for (int i = 0; i < n_units; ++i) {
      const auto& unit = grid.units()[static_cast<std::size_t>(i)];
      const int c = n_src + i;
      const int um = L.u_mean[static_cast<std::size_t>(k * n_u + c)];
      const int uh = L.u_hat[static_cast<std::size_t>(k * n_u + c)];
      AffineExpr hi(unit.p_max);
      hi.add(um, -1.0);
      AffineExpr lo = AffineExpr::variable(um);
      lo += -unit.p_min;
      if (uh >= 0) {
        hi.add(uh, -kap);
        lo.add(uh, -kap);
      }
      bound(hi);
      bound(lo);
    }
  }

  // Energy units: exact hold on the means, hats from the lifted eta block.
  for (int i = 0; i < n_units; ++i) {
    const auto& unit = grid.units()[static_cast<std::size_t>(i)];
    const Hold hold = exact_hold(eu.alpha[i], eu.beta[i], dt);
    const int c = n_src + i;
    const auto& aux = unit_aux[static_cast<std::size_t>(i)];
    for (int k = 1; k <= N; ++k) {
      const int em = prog.add_variable();
      L.e_mean[static_cast<std::size_t>(k * n_units + i)] = em;
      ++size.variables;
      std::vector<Term> row{{em, 1.0}, {L.u_mean[static_cast<std::size_t>((k - 1) * n_u + c)], -hold.b}};
      double rhs = 0.0;
      if (k == 1)
        rhs = hold.a * unit.e0;
      else
        row.push_back({L.e_mean[static_cast<std::size_t>((k - 1) * n_units + i)], -hold.a});
      prog.add_equality(std::move(row), rhs);
      ++size.constraints;

      int eh = -1;
      if (feedback) {
        const Eigen::MatrixXd etaeta = moments.etaeta(k);
        Eigen::MatrixXd block(static_cast<Eigen::Index>(aux.size()), static_cast<Eigen::Index>(aux.size()));
        for (std::size_t a = 0; a < aux.size(); ++a)
          for (std::size_t b = 0; b < aux.size(); ++b)
            block(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = etaeta(aux[a], aux[b]);
        const Eigen::MatrixXd Neta = trimmed_factor(block);
        std::vector<AffineExpr> entries;
        for (Eigen::Index m = 0; m < Neta.cols(); ++m) {
          AffineExpr e;
          for (int ww = 0; ww < moments.n_windows && ww < n_windows; ++ww)
            for (int j = 0; j < n_xi; ++j) e.add(gain_expr(ww, c, j, Neta(ww * n_xi + j, m)));
          entries.push_back(std::move(e));
        }
        eh = hat_cone(RelaxedKind::EnergyHat, k, i, std::move(entries));
        L.e_hat[static_cast<std::size_t>(k * n_units + i)] = eh;
      }
      AffineExpr hi(unit.e_max);
      hi.add(em, -1.0);
      AffineExpr lo = AffineExpr::variable(em);
      lo += -unit.e_min;
      if (eh >= 0) {
        hi.add(eh, -kap);
        lo.add(eh, -kap);
      }
      bound(hi);
      bound(lo);
      if (k == N && options.terminal_energy.size() > 0) {
        prog.add_equality({{em, 1.0}}, options.terminal_energy[i]);
        ++size.constraints;
      } else if (k == N) {
        prog.add_square_cost(em, cfg.r_e);
        if (eh >= 0) prog.add_square_cost(eh, cfg.r_e);
      }
    }
  }
  size.variables += size.gain_entries;
  return out;
}

}  // namespace adn::mo
