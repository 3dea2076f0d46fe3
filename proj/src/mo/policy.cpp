#include "adn/mo.hpp"

#include <json.hpp>

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace adn::mo {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01, -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double lo = 0.02425;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - lo) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement against the exact CDF.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double kappa(double gamma, KappaRule rule) {
  if (!(gamma >= 0.5 && gamma < 1.0)) throw std::invalid_argument("kappa: gamma must satisfy 0.5 <= gamma < 1");
  if (rule == KappaRule::DistributionallyRobust) return std::sqrt(gamma / (1.0 - gamma));
  return gamma == 0.5 ? 0.0 : normal_quantile(gamma);
}

Hold exact_hold(double alpha, double beta, double dt) {
  if (alpha == 0.0) return {1.0, beta * dt};
  const double a = std::exp(-alpha * dt);
  return {a, beta * (1.0 - a) / alpha};
}

Eigen::VectorXd AffinePolicy::control(int k, const Eigen::VectorXd& xi) const {
  Eigen::VectorXd u = u0.row(k).transpose();
  if (!K.empty()) u += gain(k) * xi;
  return u;
}

void AffinePolicy::validate() const {
  if (!(dt_hours > 0.0)) throw std::invalid_argument("policy: dt_hours must be positive");
  if (window_steps < 0) throw std::invalid_argument("policy: window_steps must be >= 0");
  if (!u0.allFinite()) throw std::invalid_argument("policy: u0 has non-finite entries");
  const int windows = window_steps > 0 ? (steps() + window_steps - 1) / window_steps : 1;
  if (static_cast<int>(K.size()) != windows)
    throw std::invalid_argument("policy: expected " + std::to_string(windows) + " gain matrices, got " +
                                std::to_string(K.size()));
  for (const auto& k : K) {
    if (k.rows() != n_u() || k.cols() != n_xi()) throw std::invalid_argument("policy: gain dimensions disagree");
    if (!k.allFinite()) throw std::invalid_argument("policy: gain has non-finite entries");
  }
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd json_matrix(const nlohmann::json& j, Eigen::Index cols, const std::string& what) {
  if (!j.is_array()) throw std::runtime_error("policy: " + what + " must be an array of rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || static_cast<Eigen::Index>(j[i].size()) != cols)
      throw std::runtime_error("policy: " + what + " row " + std::to_string(i) + " has the wrong length");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = j[i][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

void write_policy(std::ostream& out, const AffinePolicy& policy) {
  nlohmann::json j;
  j["format"] = "adn-affine-policy";
  j["units"] = "controls in per unit: source reactive power then unit active power; K maps per-unit source deviation";
  j["dt_hours"] = policy.dt_hours;
  j["window_steps"] = policy.window_steps;
  j["n_u"] = policy.n_u();
  j["n_xi"] = policy.n_xi();
  j["u0"] = matrix_json(policy.u0);
  auto gains = nlohmann::json::array();
  for (const auto& k : policy.K) gains.push_back(matrix_json(k));
  j["K"] = gains;
  out << j.dump(1) << '\n';
}

AffinePolicy read_policy(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("policy: ") + e.what());
  }
  try {
    if (j.value("format", "") != "adn-affine-policy") throw std::runtime_error("policy: unknown format tag");
    AffinePolicy p;
    p.dt_hours = j.at("dt_hours").get<double>();
    p.window_steps = j.at("window_steps").get<int>();
    const auto n_u = j.at("n_u").get<Eigen::Index>();
    const auto n_xi = j.at("n_xi").get<Eigen::Index>();
    p.u0 = json_matrix(j.at("u0"), n_u, "u0");
    for (const auto& k : j.at("K")) {
      Eigen::MatrixXd g = json_matrix(k, n_xi, "K");
      if (g.rows() != n_u) throw std::runtime_error("policy: gain has the wrong number of rows");
      p.K.push_back(std::move(g));
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("policy: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(e.what());
  }
}

}  // namespace adn::mo
