#pragma once

// Radial network model, distFlow equations and the compact linear reduction
//
//   x = A_y y + A_xi xi + A_d d + A_e e + A_u u + a0
//
// with x = (P per branch, Q per branch, v per bus), y = l per branch,
// xi = active deviation per stochastic source, d = (predicted source power,
// active load per bus, reactive load per bus) and u = (reactive power per
// source, active power per energy unit). All quantities are per unit; v and
// l are squared magnitudes.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <stdexcept>
#include <string>
#include <vector>

namespace adn::grid {

struct Bus {
  int id = 0;
  double g = 0.0;  ///< shunt conductance
  double b = 0.0;  ///< shunt susceptance
  double v_min = 0.0;
  double v_max = 0.0;
};

struct Branch {
  int from = 0;  ///< bus index (parent side)
  int to = 0;    ///< bus index (child side)
  double r = 0.0;
  double x = 0.0;
  double l_max = 0.0;
};

struct Source {
  int bus = 0;  ///< bus index
  std::string kind;
  double capacity = 0.0;
};

struct EnergyUnit {
  int bus = 0;  ///< bus index
  double p_min = 0.0;
  double p_max = 0.0;
  double e_min = 0.0;  ///< energy bounds relative to the reference level
  double e_max = 0.0;
  double e0 = 0.0;     ///< initial energy relative to the reference level
  double alpha = 0.0;  ///< dissipation, 1/h
  double beta = 1.0;   ///< charging efficiency
};

class GridModel {
 public:
  GridModel() = default;
  /// Validates the tree structure and bounds; throws std::invalid_argument
  /// naming the offending element.
  GridModel(std::vector<Bus> buses, std::vector<Branch> branches, int root, std::vector<Source> sources,
            std::vector<EnergyUnit> units);

  [[nodiscard]] const std::vector<Bus>& buses() const { return buses_; }
  [[nodiscard]] const std::vector<Branch>& branches() const { return branches_; }
  [[nodiscard]] const std::vector<Source>& sources() const { return sources_; }
  [[nodiscard]] const std::vector<EnergyUnit>& units() const { return units_; }
  [[nodiscard]] int root() const { return root_; }
  [[nodiscard]] int num_buses() const { return static_cast<int>(buses_.size()); }
  [[nodiscard]] int num_branches() const { return static_cast<int>(branches_.size()); }
  [[nodiscard]] int num_sources() const { return static_cast<int>(sources_.size()); }
  [[nodiscard]] int num_units() const { return static_cast<int>(units_.size()); }
  /// Control dimension: reactive power per source, then active power per unit.
  [[nodiscard]] int num_controls() const { return num_sources() + num_units(); }

  /// Branch feeding `bus` (-1 for the root).
  [[nodiscard]] int parent_branch(int bus) const { return parent_[static_cast<std::size_t>(bus)]; }
  [[nodiscard]] const std::vector<int>& child_branches(int bus) const { return children_[static_cast<std::size_t>(bus)]; }
  /// Buses in breadth-first order from the root.
  [[nodiscard]] const std::vector<int>& bfs_order() const { return order_; }
  /// Index of the bus with the given id; throws when absent.
  [[nodiscard]] int bus_index(int id) const;

  // Layout of x.
  [[nodiscard]] int dim_x() const { return 2 * num_branches() + num_buses(); }
  [[nodiscard]] int p_row(int branch) const { return branch; }
  [[nodiscard]] int q_row(int branch) const { return num_branches() + branch; }
  [[nodiscard]] int v_row(int bus) const { return 2 * num_branches() + bus; }

 private:
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  std::vector<Source> sources_;
  std::vector<EnergyUnit> units_;
  int root_ = 0;
  std::vector<int> parent_;
  std::vector<std::vector<int>> children_;
  std::vector<int> order_;
};

/// Per step k (rows) fixed injections.
struct InjectionProfile {
  Eigen::MatrixXd p_pred;  ///< steps x sources
  Eigen::MatrixXd p_load;  ///< steps x buses
  Eigen::MatrixXd q_load;  ///< steps x buses

  [[nodiscard]] int steps() const { return static_cast<int>(p_pred.rows()); }
  /// Stacked d vector of step k.
  [[nodiscard]] Eigen::VectorXd d(int k) const;
};

struct NetworkState {
  Eigen::VectorXd P, Q, l;  ///< per branch
  Eigen::VectorXd v;        ///< per bus

  /// Stacked x = (P, Q, v).
  [[nodiscard]] Eigen::VectorXd x() const;
};

/// Net injections per bus.
struct Injections {
  Eigen::VectorXd p, q;
};

/// Net bus injections for source output (p_src, q_src), unit power and loads.
Injections bus_injections(const GridModel& grid, const Eigen::VectorXd& p_src, const Eigen::VectorXd& q_src,
                          const Eigen::VectorXd& p_unit, const Eigen::VectorXd& p_load, const Eigen::VectorXd& q_load);

/// Sparse original form A_x0 x + A_y0 y + A_xi0 xi + A_d0 d + A_u0 u + c0 = 0
/// (rows: P balance and Q balance per non-root bus, voltage drop per
/// branch, root voltage). The root balance is not imposed: the root supplies
/// whatever the feeder draws.
struct NetworkEquations {
  Eigen::SparseMatrix<double> Ax, Ay, Axi, Ad, Au;
  Eigen::VectorXd c0;
};

NetworkEquations build_network_equations(const GridModel& grid, double root_voltage = 1.0);

struct CompactNetwork {
  NetworkEquations original;
  Eigen::MatrixXd Ay, Axi, Ad, Ae, Au;
  Eigen::VectorXd a0;
  /// x for the given (y, xi, d, e, u); an empty e counts as zero.
  [[nodiscard]] Eigen::VectorXd evaluate(const Eigen::VectorXd& y, const Eigen::VectorXd& xi, const Eigen::VectorXd& d,
                                         const Eigen::VectorXd& e, const Eigen::VectorXd& u) const;
};

/// Eliminates A_x0 with a sparse LU solve. Throws std::runtime_error when
/// A_x0 is singular.
CompactNetwork build_compact(const GridModel& grid, double root_voltage = 1.0);

/// Lossless flat-voltage model x = A_xi xi + A_d d + A_e e + A_u u + a0.
/// Used only for second moments.
struct LinearNetwork {
  Eigen::MatrixXd Axi, Ad, Ae, Au;
  Eigen::VectorXd a0;
  [[nodiscard]] Eigen::VectorXd evaluate(const Eigen::VectorXd& xi, const Eigen::VectorXd& d, const Eigen::VectorXd& e,
                                         const Eigen::VectorXd& u) const;
};

LinearNetwork build_lindistflow(const GridModel& grid, double root_voltage = 1.0);

/// Residuals of the balance rows (non-root buses), voltage-drop rows and
/// l_ij v_i - P_ij^2 - Q_ij^2 per branch, stacked in that order.
Eigen::VectorXd distflow_residual(const GridModel& grid, const NetworkState& state, const Injections& inj);

/// Inner polygon of the disk p^2 + q^2 <= s^2: rows C [p q]' <= D.
struct Polygon {
  Eigen::MatrixXd C;  ///< n_sides x 2
  Eigen::VectorXd D;
};

Polygon build_capacity_polygon(double capacity, int n_sides = 12);

class PowerFlowError : public std::runtime_error {
 public:
  PowerFlowError(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  /// Largest voltage update of each sweep.
  [[nodiscard]] const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

struct PowerFlowOptions {
  double tol = 1e-12;
  int max_sweeps = 100;
};

/// Backward/forward sweep solution of the distFlow equations, starting from
/// `initial` when given and from the flat state otherwise.
NetworkState power_flow_solve(const GridModel& grid, const Injections& inj, double root_voltage = 1.0,
                              const PowerFlowOptions& options = {}, const NetworkState* initial = nullptr);

}  // namespace adn::grid
