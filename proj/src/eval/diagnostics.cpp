#include "adn/eval.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace adn::eval {

CovLvReport cov_lv_check(const grid::GridModel& grid, const std::vector<std::vector<grid::NetworkState>>& states,
                         double min_flow_std) {
  const auto n = static_cast<int>(states.size());
  if (n < 100) throw std::invalid_argument("cov_lv_check: need at least 100 scenarios, got " + std::to_string(n));
  const auto steps = static_cast<int>(states.front().size());
  for (const auto& s : states)
    if (static_cast<int>(s.size()) != steps) throw std::invalid_argument("cov_lv_check: scenarios differ in length");
  const int nbr = grid.num_branches();

  CovLvReport rep;
  rep.ratio = Eigen::MatrixXd::Constant(steps, nbr, std::numeric_limits<double>::quiet_NaN());
  for (int k = 0; k < steps; ++k) {
    for (int b = 0; b < nbr; ++b) {
      const int from = grid.branches()[static_cast<std::size_t>(b)].from;
      double ml = 0, mv = 0, mp = 0, mq = 0;
      for (const auto& s : states) {
        const auto& st = s[static_cast<std::size_t>(k)];
        ml += st.l[b];
        mv += st.v[from];
        mp += st.P[b];
        mq += st.Q[b];
      }
      ml /= n, mv /= n, mp /= n, mq /= n;
      double clv = 0, vp = 0, vq = 0;
      for (const auto& s : states) {
        const auto& st = s[static_cast<std::size_t>(k)];
        clv += (st.l[b] - ml) * (st.v[from] - mv);
        vp += (st.P[b] - mp) * (st.P[b] - mp);
        vq += (st.Q[b] - mq) * (st.Q[b] - mq);
      }
      const double denom = (vp + vq) / (n - 1);
      if (!(std::sqrt(denom) >= min_flow_std)) {
        ++rep.skipped;
        continue;
      }
      const double r = std::abs(clv / (n - 1)) / denom;
      rep.ratio(k, b) = r;
      if (r > rep.max_ratio || rep.worst_step < 0) {
        rep.max_ratio = r;
        rep.worst_step = k;
        rep.worst_branch = b;
      }
    }
  }
  if (rep.skipped > 0)
    rep.note = std::to_string(rep.skipped) + " of " + std::to_string(steps * nbr) +
               " (step, branch) pairs skipped: flow std below " + std::to_string(min_flow_std) + " p.u.";
  return rep;
}

Eigen::MatrixXd independent_sigma(const Eigen::MatrixXd& sigma) {
  return (sigma * sigma.transpose()).diagonal().cwiseSqrt().asDiagonal();
}

std::vector<SweepCell> correlation_sweep(const Case& c, const std::vector<double>& taus,
                                         const std::vector<SigmaVariant>& variants, const EvalOptions& options,
                                         const conic::SolverOptions& solver) {
  if (taus.empty()) throw std::invalid_argument("correlation_sweep: empty tau list");
  if (variants.empty()) throw std::invalid_argument("correlation_sweep: no sigma variants");
  const Eigen::MatrixXd base = c.disturbance.sigma * c.disturbance.sigma.transpose();
  for (const auto& v : variants) {
    if (v.sigma.rows() != c.disturbance.sigma.rows())
      throw std::invalid_argument("correlation_sweep: variant '" + v.name + "' has the wrong dimension");
    const Eigen::VectorXd diag = (v.sigma * v.sigma.transpose()).diagonal();
    if ((diag - base.diagonal()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, base.diagonal().maxCoeff()))
      throw std::invalid_argument("correlation_sweep: variant '" + v.name + "' changes the marginal variances");
  }
  std::vector<SweepCell> cells;
  for (double tau : taus) {
    for (const auto& v : variants) {
      SweepCell cell;
      cell.tau = tau;
      cell.variant = v.name;
      try {
        Case cc = c;
        cc.disturbance = c.disturbance.family == sde::Family::Beta
                             ? sde::make_beta_model(tau, v.sigma, c.disturbance.mean0)
                             : sde::make_ou_model(tau, v.sigma, c.disturbance.mean0);
        const auto run = mo::solve_case(cc, mo::case_moments(cc), {}, solver);
        if (!run.solution.optimal())
          throw std::runtime_error(std::string("solver status ") + std::string(conic::to_string(run.solution.status)));
        cell.mo_objective = run.solution.objective;
        cell.u0 = run.policy.u0;
        const auto rep = evaluate_policy(run.policy, cc, options);
        cell.objective_mean = rep.objective_mean;
        cell.ci_half_width = rep.ci_half_width();
        cell.objectives = rep.objectives;
        cell.ok = rep.valid;
        if (!rep.valid) cell.error = std::to_string(rep.excluded) + " scenarios excluded";
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace adn::eval
