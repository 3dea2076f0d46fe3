#include "adn/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace adn::eval {

namespace {

constexpr double kZ95 = 1.959963984540054;
constexpr int kBlock = 16;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::Voltage: return "voltage";
    case Family::Current: return "current";
    case Family::Energy: return "energy";
    case Family::UnitPower: return "unit_power";
    case Family::SourceCapacity: return "source_capacity";
  }
  return "?";
}

ControlLaw affine_law(const mo::AffinePolicy& policy) {
  return [policy](int k, const Eigen::VectorXd& xi, const Eigen::VectorXd&) -> std::optional<Eigen::VectorXd> {
    return policy.control(k, xi);
  };
}

Scenario run_scenario(const ControlLaw& law, const Case& c, const Eigen::MatrixXd& xi_path) {
  const auto& g = c.grid;
  const auto& cfg = c.config;
  const int N = cfg.steps;
  const int n_src = g.num_sources(), n_units = g.num_units(), n_u = g.num_controls();
  const double dt = cfg.dt_hours;
  if (xi_path.rows() < N || xi_path.cols() != n_src) throw std::invalid_argument("run_scenario: path shape mismatch");
  const auto eu = sde::EUParams::from_grid(g);

  Scenario s;
  s.u = Eigen::MatrixXd::Zero(N, n_u);
  s.e.resize(N + 1, n_units);
  for (int i = 0; i < n_units; ++i) s.e(0, i) = g.units()[static_cast<std::size_t>(i)].e0;
  s.states.reserve(static_cast<std::size_t>(N));

  Eigen::VectorXd u_prev = Eigen::VectorXd::Zero(n_u);
  for (int k = 0; k < N; ++k) {
    const Eigen::VectorXd xi = xi_path.row(k).transpose();
    const Eigen::VectorXd e = s.e.row(k).transpose();
    auto decided = law(k, xi, e);
    if (decided && decided->size() != n_u) throw std::invalid_argument("run_scenario: control law returned the wrong size");
    if (!decided) ++s.control_failures;
    const Eigen::VectorXd u = decided ? *decided : u_prev;
    s.u.row(k) = u.transpose();
    u_prev = u;

    const Eigen::VectorXd p_src = c.profile.p_pred.row(k).transpose() + xi;
    const auto inj = grid::bus_injections(g, p_src, u.head(n_src), u.tail(n_units), c.profile.p_load.row(k).transpose(),
                                          c.profile.q_load.row(k).transpose());
    const grid::NetworkState* warm = s.states.empty() ? nullptr : &s.states.back();
    s.states.push_back(grid::power_flow_solve(g, inj, cfg.root_voltage, {}, warm));
    const auto& st = s.states.back();

    double stage = 0.0;
    const double price = cfg.price[static_cast<std::size_t>(k)] * cfg.price_scale;
    for (int b = 0; b < g.num_branches(); ++b)
      if (g.branches()[static_cast<std::size_t>(b)].from == g.root()) stage += price * st.P[b];
    for (int c_idx = 0; c_idx < n_u; ++c_idx) stage += cfg.r_u[c_idx] * u[c_idx] * u[c_idx];
    stage += cfg.r_v * (st.v.array() - 1.0).square().sum();
    s.objective += dt * stage;

    for (int i = 0; i < n_units; ++i) {
      const auto h = mo::exact_hold(eu.alpha[i], eu.beta[i], dt);
      s.e(k + 1, i) = h.a * s.e(k, i) + h.b * u[n_src + i];
    }
  }
  s.objective += cfg.r_e * s.e.row(N).squaredNorm();
  return s;
}

double deterministic_objective(const mo::AffinePolicy& policy, const Case& c) {
  const auto m = sde::propagate_moments(c.disturbance, sde::EUParams{}, c.config.steps, c.config.dt_hours);
  return run_scenario(affine_law(policy), c, m.mean).objective;
}

const ViolationTable& EvalReport::table(Family f) const {
  for (const auto& t : violations)
    if (t.family == f) return t;
  throw std::out_of_range("no violation table for " + to_string(f));
}

namespace {

/// Shifted first and second sums per block; combined in block order.
struct Moments {
  Eigen::MatrixXd s1, s2;
  void init(Eigen::Index r, Eigen::Index c) {
    s1 = Eigen::MatrixXd::Zero(r, c);
    s2 = Eigen::MatrixXd::Zero(r, c);
  }
  void add(const Eigen::MatrixXd& x, const Eigen::MatrixXd& ref) {
    const Eigen::MatrixXd d = x - ref;
    s1 += d;
    s2 += d.cwiseProduct(d);
  }
  void merge(const Moments& o) {
    s1 += o.s1;
    s2 += o.s2;
  }
  StepStats finish(const Eigen::MatrixXd& ref, int n) const {
    StepStats out;
    out.mean = ref + s1 / std::max(1, n);
    out.var = n > 1 ? ((s2 - s1.cwiseProduct(s1) / n) / (n - 1)).cwiseMax(0.0).eval() : Eigen::MatrixXd::Zero(ref.rows(), ref.cols());
    return out;
  }
};

struct Accumulator {
  Moments v, e, u;
  Eigen::MatrixXi viol[5];
  int evaluated = 0;
  int control_failures = 0;
};

Eigen::MatrixXd voltage_matrix(const std::vector<grid::NetworkState>& states, int nbus) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(states.size()), nbus);
  for (std::size_t k = 0; k < states.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = states[k].v.transpose();
  return m;
}

}  // namespace

EvalReport evaluate(const ControlLaw& law, const Case& c, const sde::ScenarioEnsemble& paths, const EvalOptions& options) {
  const auto& g = c.grid;
  const auto& cfg = c.config;
  const int N = cfg.steps;
  const int nbus = g.num_buses(), nbr = g.num_branches(), n_src = g.num_sources(), n_units = g.num_units();
  const int n_u = g.num_controls();
  if (paths.steps < N || paths.n_xi != n_src) throw std::invalid_argument("evaluate: ensemble does not match the case");
  const int n = options.scenarios > 0 ? options.scenarios : paths.n_paths;
  if (n > paths.n_paths) throw std::invalid_argument("evaluate: ensemble has fewer paths than requested");

  std::vector<grid::Polygon> polygons;
  for (const auto& s : g.sources()) polygons.push_back(grid::build_capacity_polygon(s.capacity, cfg.polygon_sides));

  // Reference for the shifted sums: the mean disturbance path.
  Eigen::MatrixXd ref_v = Eigen::MatrixXd::Ones(N, nbus), ref_e = Eigen::MatrixXd::Zero(N + 1, n_units),
                  ref_u = Eigen::MatrixXd::Zero(N, n_u);
  try {
    const auto m = sde::propagate_moments(c.disturbance, sde::EUParams{}, N, cfg.dt_hours);
    const auto ref = run_scenario(law, c, m.mean);
    ref_v = voltage_matrix(ref.states, nbus);
    ref_e = ref.e;
    ref_u = ref.u;
  } catch (const std::exception&) {
  }

  EvalReport rep;
  rep.requested = n;
  rep.seed = paths.seed;
  rep.objectives.assign(static_cast<std::size_t>(n), kNaN);
  std::vector<std::string> errors(static_cast<std::size_t>(n));
  std::vector<std::vector<grid::NetworkState>> kept(options.keep_states ? static_cast<std::size_t>(n) : 0);

  const int blocks = (n + kBlock - 1) / kBlock;
  std::vector<Accumulator> acc(static_cast<std::size_t>(blocks));
  const int widths[5] = {nbus, nbr, n_units, n_units, n_src};
  const int heights[5] = {N, N, N, N, N};

  auto run_block = [&](int b) {
    auto& a = acc[static_cast<std::size_t>(b)];
    a.v.init(N, nbus);
    a.e.init(N + 1, n_units);
    a.u.init(N, n_u);
    for (int f = 0; f < 5; ++f) a.viol[f] = Eigen::MatrixXi::Zero(heights[f], widths[f]);
    for (int p = b * kBlock; p < std::min(n, (b + 1) * kBlock); ++p) {
      Scenario s;
      const Eigen::MatrixXd path = paths.path(p);
      try {
        s = run_scenario(law, c, path);
      } catch (const std::exception& ex) {
        errors[static_cast<std::size_t>(p)] = ex.what();
        continue;
      }
      rep.objectives[static_cast<std::size_t>(p)] = s.objective;
      ++a.evaluated;
      a.control_failures += s.control_failures;
      a.v.add(voltage_matrix(s.states, nbus), ref_v);
      a.e.add(s.e, ref_e);
      a.u.add(s.u, ref_u);
      const double tol = options.bound_tol;
      for (int k = 0; k < N; ++k) {
        const auto& st = s.states[static_cast<std::size_t>(k)];
        for (int i = 0; i < nbus; ++i) {
          if (i == g.root()) continue;
          const auto& bus = g.buses()[static_cast<std::size_t>(i)];
          if (st.v[i] < bus.v_min - tol || st.v[i] > bus.v_max + tol) ++a.viol[0](k, i);
        }
        for (int br = 0; br < nbr; ++br)
          if (st.l[br] > g.branches()[static_cast<std::size_t>(br)].l_max + tol) ++a.viol[1](k, br);
        for (int i = 0; i < n_units; ++i) {
          const auto& unit = g.units()[static_cast<std::size_t>(i)];
          const double e = s.e(k + 1, i);
          if (e < unit.e_min - tol || e > unit.e_max + tol) ++a.viol[2](k, i);
          const double pu = s.u(k, n_src + i);
          if (pu < unit.p_min - tol || pu > unit.p_max + tol) ++a.viol[3](k, i);
        }
        for (int j = 0; j < n_src; ++j) {
          const auto& poly = polygons[static_cast<std::size_t>(j)];
          const Eigen::Vector2d pq(c.profile.p_pred(k, j) + path(k, j), s.u(k, j));
          if (((poly.C * pq - poly.D).array() > tol).any()) ++a.viol[4](k, j);
        }
      }
      if (options.keep_states) kept[static_cast<std::size_t>(p)] = std::move(s.states);
    }
  };

  int threads = options.threads > 0 ? options.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::max(1, std::min(threads, blocks));
  if (threads == 1) {
    for (int b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int b = next++; b < blocks; b = next++) run_block(b);
      });
    for (auto& th : pool) th.join();
  }

  Accumulator total;
  total.v.init(N, nbus);
  total.e.init(N + 1, n_units);
  total.u.init(N, n_u);
  for (int f = 0; f < 5; ++f) total.viol[f] = Eigen::MatrixXi::Zero(heights[f], widths[f]);
  for (const auto& a : acc) {
    total.v.merge(a.v);
    total.e.merge(a.e);
    total.u.merge(a.u);
    for (int f = 0; f < 5; ++f) total.viol[f] += a.viol[f];
    total.evaluated += a.evaluated;
    total.control_failures += a.control_failures;
  }

  rep.evaluated = total.evaluated;
  rep.excluded = n - total.evaluated;
  rep.valid = rep.evaluated > 0 && rep.excluded <= options.max_excluded_fraction * n;
  rep.control_failures = total.control_failures;
  for (int p = 0; p < n; ++p)
    if (!errors[static_cast<std::size_t>(p)].empty())
      rep.failures.push_back("scenario " + std::to_string(p) + ": " + errors[static_cast<std::size_t>(p)]);
  if (options.keep_states)
    for (auto& st : kept)
      if (!st.empty()) rep.states.push_back(std::move(st));

  double sum = 0.0;
  for (double o : rep.objectives)
    if (!std::isnan(o)) sum += o;
  const int m = rep.evaluated;
  rep.objective_mean = m > 0 ? sum / m : kNaN;
  double ss = 0.0;
  for (double o : rep.objectives)
    if (!std::isnan(o)) ss += (o - rep.objective_mean) * (o - rep.objective_mean);
  rep.objective_stderr = m > 1 ? std::sqrt(ss / (m - 1) / m) : 0.0;
  rep.ci_low = rep.objective_mean - kZ95 * rep.objective_stderr;
  rep.ci_high = rep.objective_mean + kZ95 * rep.objective_stderr;

  rep.voltage = total.v.finish(ref_v, m);
  rep.energy = total.e.finish(ref_e, m);
  rep.control = total.u.finish(ref_u, m);
  const Family families[5] = {Family::Voltage, Family::Current, Family::Energy, Family::UnitPower,
                              Family::SourceCapacity};
  for (int f = 0; f < 5; ++f) {
    ViolationTable t;
    t.family = families[f];
    t.first_step = families[f] == Family::Energy ? 1 : 0;
    t.rate = total.viol[f].cast<double>() / std::max(1, m);
    rep.violations.push_back(std::move(t));
  }
  return rep;
}

EvalReport evaluate(const ControlLaw& law, const Case& c, const EvalOptions& options) {
  if (options.scenarios < 1) throw std::invalid_argument("evaluate: scenarios must be at least 1");
  const auto paths = sde::simulate_paths(c.disturbance, options.scenarios, c.config.steps, c.config.dt_hours,
                                         options.seed, options.substeps, options.threads);
  return evaluate(law, c, paths, options);
}

EvalReport evaluate_policy(const mo::AffinePolicy& policy, const Case& c, const EvalOptions& options) {
  policy.validate();
  const auto& g = c.grid;
  if (policy.steps() < c.config.steps || policy.n_u() != g.num_controls() || policy.n_xi() != g.num_sources())
    throw std::invalid_argument("policy has " + std::to_string(policy.steps()) + " steps, " +
                                std::to_string(policy.n_u()) + " controls and " + std::to_string(policy.n_xi()) +
                                " disturbance inputs; case needs " + std::to_string(c.config.steps) + ", " +
                                std::to_string(g.num_controls()) + " and " + std::to_string(g.num_sources()));
  if (std::abs(policy.dt_hours - c.config.dt_hours) > 1e-12)
    throw std::invalid_argument("policy step length differs from the case");
  return evaluate(affine_law(policy), c, options);
}

PairedDifference paired_difference(const EvalReport& a, const EvalReport& b) {
  return paired_difference(a.objectives, b.objectives);
}

PairedDifference paired_difference(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  std::vector<double> d;
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isnan(a[i]) && !std::isnan(b[i])) d.push_back(a[i] - b[i]);
  PairedDifference out;
  out.pairs = static_cast<int>(d.size());
  if (d.empty()) return out;
  double s = 0.0;
  for (double x : d) s += x;
  out.mean = s / static_cast<double>(d.size());
  double ss = 0.0;
  for (double x : d) ss += (x - out.mean) * (x - out.mean);
  if (d.size() > 1) out.half_width = kZ95 * std::sqrt(ss / static_cast<double>(d.size() - 1) / static_cast<double>(d.size()));
  return out;
}

}  // namespace adn::eval
