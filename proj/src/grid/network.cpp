#include "adn/grid.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <deque>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace adn::grid {

namespace {

std::string bus_name(const std::vector<Bus>& buses, int index) { return "bus " + std::to_string(buses[static_cast<std::size_t>(index)].id); }

}  // namespace

GridModel::GridModel(std::vector<Bus> buses, std::vector<Branch> branches, int root, std::vector<Source> sources,
                     std::vector<EnergyUnit> units)
    : buses_(std::move(buses)),
      branches_(std::move(branches)),
      sources_(std::move(sources)),
      units_(std::move(units)),
      root_(root) {
  const int nb = num_buses();
  if (nb == 0) throw std::invalid_argument("grid has no buses");
  if (root_ < 0 || root_ >= nb) throw std::invalid_argument("root bus index out of range");
  std::unordered_map<int, int> ids;
  for (int i = 0; i < nb; ++i) {
    const auto& bus = buses_[static_cast<std::size_t>(i)];
    if (!ids.emplace(bus.id, i).second) throw std::invalid_argument("duplicate bus id " + std::to_string(bus.id));
    if (!(bus.v_min > 0.0) || !(bus.v_min <= bus.v_max))
      throw std::invalid_argument(bus_name(buses_, i) + ": voltage bounds must satisfy 0 < v_min <= v_max");
  }
  parent_.assign(static_cast<std::size_t>(nb), -1);
  children_.assign(static_cast<std::size_t>(nb), {});
  for (int k = 0; k < num_branches(); ++k) {
    const auto& br = branches_[static_cast<std::size_t>(k)];
    const std::string name = "branch " + std::to_string(k);
    if (br.from < 0 || br.from >= nb || br.to < 0 || br.to >= nb || br.from == br.to)
      throw std::invalid_argument(name + ": invalid end buses");
    if (!(br.r > 0.0) || !(br.x > 0.0)) throw std::invalid_argument(name + ": impedance must be positive");
    if (!(br.l_max > 0.0)) throw std::invalid_argument(name + ": current bound must be positive");
    if (br.to == root_)
      throw std::invalid_argument(name + ": branches must point away from the root, but it ends at the root " +
                                  bus_name(buses_, root_));
    if (parent_[static_cast<std::size_t>(br.to)] >= 0)
      throw std::invalid_argument("branches do not form a tree: " + bus_name(buses_, br.to) +
                                  " is fed by branches " + std::to_string(parent_[static_cast<std::size_t>(br.to)]) +
                                  " and " + std::to_string(k));
    parent_[static_cast<std::size_t>(br.to)] = k;
    children_[static_cast<std::size_t>(br.from)].push_back(k);
  }
  std::deque<int> queue{root_};
  std::vector<char> seen(static_cast<std::size_t>(nb), 0);
  seen[static_cast<std::size_t>(root_)] = 1;
  while (!queue.empty()) {
    const int bus = queue.front();
    queue.pop_front();
    order_.push_back(bus);
    for (int k : children_[static_cast<std::size_t>(bus)]) {
      const int child = branches_[static_cast<std::size_t>(k)].to;
      if (seen[static_cast<std::size_t>(child)]) throw std::invalid_argument("branches contain a cycle");
      seen[static_cast<std::size_t>(child)] = 1;
      queue.push_back(child);
    }
  }
  for (int i = 0; i < nb; ++i)
    if (!seen[static_cast<std::size_t>(i)])
      throw std::invalid_argument("branches do not form a tree rooted at " + bus_name(buses_, root_) + ": " +
                                  bus_name(buses_, i) + " is unreachable (cycle or island)");

  for (std::size_t s = 0; s < sources_.size(); ++s) {
    const auto& src = sources_[s];
    const std::string name = "source " + std::to_string(s);
    if (src.bus < 0 || src.bus >= nb) throw std::invalid_argument(name + ": unknown bus");
    if (src.bus == root_) throw std::invalid_argument(name + ": placed at the root bus");
    if (!(src.capacity > 0.0)) throw std::invalid_argument(name + ": capacity must be positive");
  }
  for (std::size_t u = 0; u < units_.size(); ++u) {
    const auto& eu = units_[u];
    const std::string name = "energy unit " + std::to_string(u);
    if (eu.bus < 0 || eu.bus >= nb) throw std::invalid_argument(name + ": unknown bus");
    if (eu.bus == root_) throw std::invalid_argument(name + ": placed at the root bus");
    if (!(eu.p_min <= eu.p_max)) throw std::invalid_argument(name + ": p_min > p_max");
    if (!(eu.e_min <= eu.e0 && eu.e0 <= eu.e_max)) throw std::invalid_argument(name + ": need e_min <= e0 <= e_max");
    if (!(eu.alpha >= 0.0)) throw std::invalid_argument(name + ": alpha must be nonnegative");
    if (!(eu.beta > 0.0)) throw std::invalid_argument(name + ": beta must be positive");
  }
}

int GridModel::bus_index(int id) const {
  for (int i = 0; i < num_buses(); ++i)
    if (buses_[static_cast<std::size_t>(i)].id == id) return i;
  throw std::invalid_argument("unknown bus id " + std::to_string(id));
}

Eigen::VectorXd InjectionProfile::d(int k) const {
  Eigen::VectorXd out(p_pred.cols() + p_load.cols() + q_load.cols());
  out << p_pred.row(k).transpose(), p_load.row(k).transpose(), q_load.row(k).transpose();
  return out;
}

Eigen::VectorXd NetworkState::x() const {
  Eigen::VectorXd out(P.size() + Q.size() + v.size());
  out << P, Q, v;
  return out;
}

Injections bus_injections(const GridModel& grid, const Eigen::VectorXd& p_src, const Eigen::VectorXd& q_src,
                          const Eigen::VectorXd& p_unit, const Eigen::VectorXd& p_load, const Eigen::VectorXd& q_load) {
  Injections inj{-p_load, -q_load};
  for (int s = 0; s < grid.num_sources(); ++s) {
    const int bus = grid.sources()[static_cast<std::size_t>(s)].bus;
    inj.p[bus] += p_src[s];
    inj.q[bus] += q_src[s];
  }
  for (int u = 0; u < grid.num_units(); ++u) inj.p[grid.units()[static_cast<std::size_t>(u)].bus] += p_unit[u];
  return inj;
}

NetworkEquations build_network_equations(const GridModel& grid, double root_voltage) {
  const int nbr = grid.num_branches();
  const int nbus = grid.num_buses();
  const int ns = grid.num_sources();
  const int rows = grid.dim_x();
  using T = Eigen::Triplet<double>;
  std::vector<T> ax, ay, axi, ad, au;
  for (int b = 0; b < nbr; ++b) {
    const auto& br = grid.branches()[static_cast<std::size_t>(b)];
    const int j = br.to;
    const auto& bus = grid.buses()[static_cast<std::size_t>(j)];
    const int rp = b, rq = nbr + b, rv = 2 * nbr + b;
    // Balance at the child bus j: outflow - inflow + losses + shunt - injection = 0.
    for (int k : grid.child_branches(j)) {
      ax.emplace_back(rp, grid.p_row(k), 1.0);
      ax.emplace_back(rq, grid.q_row(k), 1.0);
    }
    ax.emplace_back(rp, grid.p_row(b), -1.0);
    ax.emplace_back(rq, grid.q_row(b), -1.0);
    if (bus.g != 0.0) ax.emplace_back(rp, grid.v_row(j), bus.g);
    if (bus.b != 0.0) ax.emplace_back(rq, grid.v_row(j), bus.b);
    ay.emplace_back(rp, b, br.r);
    ay.emplace_back(rq, b, br.x);
    ad.emplace_back(rp, ns + j, 1.0);
    ad.emplace_back(rq, ns + nbus + j, 1.0);
    // Voltage drop along the branch.
    ax.emplace_back(rv, grid.v_row(j), 1.0);
    ax.emplace_back(rv, grid.v_row(br.from), -1.0);
    ax.emplace_back(rv, grid.p_row(b), 2.0 * br.r);
    ax.emplace_back(rv, grid.q_row(b), 2.0 * br.x);
    ay.emplace_back(rv, b, -(br.r * br.r + br.x * br.x));
  }
  for (int s = 0; s < ns; ++s) {
    const int b = grid.parent_branch(grid.sources()[static_cast<std::size_t>(s)].bus);
    axi.emplace_back(b, s, -1.0);
    ad.emplace_back(b, s, -1.0);
    au.emplace_back(nbr + b, s, -1.0);
  }
  for (int u = 0; u < grid.num_units(); ++u) {
    const int b = grid.parent_branch(grid.units()[static_cast<std::size_t>(u)].bus);
    au.emplace_back(b, ns + u, -1.0);
  }
  const int rroot = 3 * nbr;
  ax.emplace_back(rroot, grid.v_row(grid.root()), 1.0);

  NetworkEquations eq;
  auto make = [rows](Eigen::SparseMatrix<double>& m, int cols, const std::vector<T>& t) {
    m.resize(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
  };
  make(eq.Ax, rows, ax);
  make(eq.Ay, nbr, ay);
  make(eq.Axi, ns, axi);
  make(eq.Ad, ns + 2 * nbus, ad);
  make(eq.Au, grid.num_controls(), au);
  eq.c0 = Eigen::VectorXd::Zero(rows);
  eq.c0[rroot] = -root_voltage;
  return eq;
}

Eigen::VectorXd CompactNetwork::evaluate(const Eigen::VectorXd& y, const Eigen::VectorXd& xi, const Eigen::VectorXd& d,
                                         const Eigen::VectorXd& e, const Eigen::VectorXd& u) const {
  Eigen::VectorXd x = a0 + Ay * y + Axi * xi + Ad * d + Au * u;
  if (e.size() > 0) x += Ae * e;
  return x;
}

CompactNetwork build_compact(const GridModel& grid, double root_voltage) {
  CompactNetwork net;
  net.original = build_network_equations(grid, root_voltage);
  const auto& eq = net.original;
  Eigen::SparseMatrix<double> ax = eq.Ax;
  ax.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(ax);
  lu.factorize(ax);
  if (lu.info() != Eigen::Success) throw std::runtime_error("A_x0 is singular: " + lu.lastErrorMessage());
  auto reduce = [&lu](const Eigen::SparseMatrix<double>& m) -> Eigen::MatrixXd {
    if (m.cols() == 0) return Eigen::MatrixXd(m.rows(), 0);
    const Eigen::MatrixXd rhs = -Eigen::MatrixXd(m);
    return lu.solve(rhs);
  };
  net.Ay = reduce(eq.Ay);
  net.Axi = reduce(eq.Axi);
  net.Ad = reduce(eq.Ad);
  net.Au = reduce(eq.Au);
  // Network injections depend on unit power, not on stored energy.
  net.Ae = Eigen::MatrixXd::Zero(grid.dim_x(), grid.num_units());
  const Eigen::VectorXd rhs = -eq.c0;
  net.a0 = lu.solve(rhs);
  if (!net.a0.allFinite() || !net.Ay.allFinite()) throw std::runtime_error("A_x0 is singular");
  return net;
}

Eigen::VectorXd LinearNetwork::evaluate(const Eigen::VectorXd& xi, const Eigen::VectorXd& d, const Eigen::VectorXd& e,
                                        const Eigen::VectorXd& u) const {
  Eigen::VectorXd x = a0 + Axi * xi + Ad * d + Au * u;
  if (e.size() > 0) x += Ae * e;
  return x;
}

LinearNetwork build_lindistflow(const GridModel& grid, double root_voltage) {
  // Dropping the loss terms A_y y of the exact reduction leaves the
  // lossless, flat-voltage model.
  const CompactNetwork c = build_compact(grid, root_voltage);
  return {c.Axi, c.Ad, c.Ae, c.Au, c.a0};
}

Eigen::VectorXd distflow_residual(const GridModel& grid, const NetworkState& s, const Injections& inj) {
  const int nbr = grid.num_branches();
  Eigen::VectorXd r(4 * nbr);
  for (int b = 0; b < nbr; ++b) {
    const auto& br = grid.branches()[static_cast<std::size_t>(b)];
    const int j = br.to;
    const auto& bus = grid.buses()[static_cast<std::size_t>(j)];
    double p = -s.P[b] + br.r * s.l[b] + bus.g * s.v[j] - inj.p[j];
    double q = -s.Q[b] + br.x * s.l[b] + bus.b * s.v[j] - inj.q[j];
    for (int k : grid.child_branches(j)) {
      p += s.P[k];
      q += s.Q[k];
    }
    r[b] = p;
    r[nbr + b] = q;
    r[2 * nbr + b] = s.v[j] - s.v[br.from] + 2.0 * (br.r * s.P[b] + br.x * s.Q[b]) -
                     (br.r * br.r + br.x * br.x) * s.l[b];
    r[3 * nbr + b] = s.l[b] * s.v[br.from] - s.P[b] * s.P[b] - s.Q[b] * s.Q[b];
  }
  return r;
}

Polygon build_capacity_polygon(double capacity, int n_sides) {
  if (n_sides < 4) throw std::invalid_argument("polygon needs at least 4 sides");
  if (!(capacity > 0.0)) throw std::invalid_argument("capacity must be positive");
  Polygon poly;
  poly.C.resize(n_sides, 2);
  poly.D.resize(n_sides);
  const double half = std::numbers::pi / n_sides;
  // Vertices at angles 2*pi*k/n lie on the circle; each row is the edge
  // between consecutive vertices.
  for (int k = 0; k < n_sides; ++k) {
    const double phi = 2.0 * half * k + half;
    poly.C(k, 0) = std::cos(phi);
    poly.C(k, 1) = std::sin(phi);
    poly.D[k] = capacity * std::cos(half);
  }
  return poly;
}

NetworkState power_flow_solve(const GridModel& grid, const Injections& inj, double root_voltage,
                              const PowerFlowOptions& options, const NetworkState* initial) {
  const int nbr = grid.num_branches();
  NetworkState s;
  if (initial != nullptr) {
    s = *initial;
  } else {
    s.P = Eigen::VectorXd::Zero(nbr);
    s.Q = Eigen::VectorXd::Zero(nbr);
    s.l = Eigen::VectorXd::Zero(nbr);
    s.v = Eigen::VectorXd::Constant(grid.num_buses(), root_voltage);
  }
  s.v[grid.root()] = root_voltage;
  const auto& order = grid.bfs_order();
  std::vector<double> trace;
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    // Backward: branch flows from the leaves towards the root.
    double change = 0.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const int j = *it;
      const int b = grid.parent_branch(j);
      if (b < 0) continue;
      const auto& br = grid.branches()[static_cast<std::size_t>(b)];
      const auto& bus = grid.buses()[static_cast<std::size_t>(j)];
      double p = bus.g * s.v[j] - inj.p[j] + br.r * s.l[b];
      double q = bus.b * s.v[j] - inj.q[j] + br.x * s.l[b];
      for (int k : grid.child_branches(j)) {
        p += s.P[k];
        q += s.Q[k];
      }
      s.P[b] = p;
      s.Q[b] = q;
      const double l = (p * p + q * q) / s.v[br.from];
      change = std::max(change, std::abs(l - s.l[b]));
      s.l[b] = l;
    }
    // Forward: voltages from the root.
    for (int j : order) {
      const int b = grid.parent_branch(j);
      if (b < 0) continue;
      const auto& br = grid.branches()[static_cast<std::size_t>(b)];
      const double v = s.v[br.from] - 2.0 * (br.r * s.P[b] + br.x * s.Q[b]) + (br.r * br.r + br.x * br.x) * s.l[b];
      change = std::max(change, std::abs(v - s.v[j]));
      s.v[j] = v;
    }
    trace.push_back(change);
    if (!std::isfinite(change) || s.v.minCoeff() <= 0.0) {
      std::ostringstream msg;
      msg << "power flow diverged after " << sweep + 1 << " sweeps (non-positive or non-finite voltage)";
      throw PowerFlowError(msg.str(), trace);
    }
    if (change < options.tol) return s;
  }
  std::ostringstream msg;
  msg << "power flow did not converge in " << options.max_sweeps << " sweeps; last update " << trace.back();
  throw PowerFlowError(msg.str(), trace);
}

}  // namespace adn::grid
