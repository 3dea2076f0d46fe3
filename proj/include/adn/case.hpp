#pragma once

// Case files: network, DER placements, profiles, disturbance model and
// optimization settings. Schema in docs/case_format.md.

#include "adn/grid.hpp"
#include "adn/sde.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace adn {

enum class KappaRule { DistributionallyRobust, Gaussian };

std::string to_string(KappaRule r);
/// Accepts "dr" / "gauss" (and the long names).
KappaRule kappa_rule_from_string(const std::string& name);

struct CaseConfig {
  int steps = 0;
  double dt_hours = 0.25;
  double start_hour = 0.0;
  std::vector<double> price;    ///< $/kWh per step
  double price_scale = 10.0;    ///< objective units per ($/kWh * p.u. * h)
  Eigen::VectorXd r_u;          ///< per control
  double r_v = 1.0;
  double r_e = 0.1;
  double gamma = 0.95;
  KappaRule kappa_rule = KappaRule::DistributionallyRobust;
  double window_hours = 4.0;    ///< gain recompute interval; 0 means one gain
  int polygon_sides = 12;
  double root_voltage = 1.0;
  double mpc_window_hours = 4.0;

  /// Steps per gain window (0 when a single gain covers the horizon).
  [[nodiscard]] int window_steps() const;
  /// Throws std::invalid_argument when a setting is out of range.
  void validate(int n_controls) const;
};

struct Case {
  std::string name;
  bool synthetic = false;
  std::string origin;  ///< file the case was read from
  double base_mva = 10.0;
  double base_kv = 10.0;
  grid::GridModel grid;
  grid::InjectionProfile profile;
  sde::ItoModel disturbance;
  CaseConfig config;
};

/// Parse or validation failure; the message names the line/column or the
/// field path (e.g. "branches[3].r").
class CaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Case load_case(const std::string& path);
Case parse_case(const std::string& text, const std::string& origin = "<string>");

/// Price vector of `steps` steps: `peak` inside [peak_start, peak_end) hours
/// of the day, `offpeak` otherwise.
std::vector<double> time_of_use_price(int steps, double dt_hours, double start_hour, double peak, double offpeak,
                                      double peak_start, double peak_end);

}  // namespace adn
