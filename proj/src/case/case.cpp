#include "adn/case.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace adn {

using nlohmann::json;

std::string to_string(KappaRule r) { return r == KappaRule::Gaussian ? "gauss" : "dr"; }

KappaRule kappa_rule_from_string(const std::string& name) {
  if (name == "dr" || name == "distributionally_robust") return KappaRule::DistributionallyRobust;
  if (name == "gauss" || name == "gaussian") return KappaRule::Gaussian;
  throw std::invalid_argument("unknown kappa rule '" + name + "' (expected dr or gauss)");
}

int CaseConfig::window_steps() const {
  if (window_hours <= 0.0) return 0;
  const int w = static_cast<int>(std::lround(window_hours / dt_hours));
  return w >= steps ? 0 : std::max(w, 1);
}

void CaseConfig::validate(int n_controls) const {
  if (steps < 1) throw std::invalid_argument("horizon must have at least one step");
  if (!(dt_hours > 0.0)) throw std::invalid_argument("dt_hours must be positive");
  if (static_cast<int>(price.size()) != steps) throw std::invalid_argument("price length does not match the horizon");
  if (r_u.size() != n_controls) throw std::invalid_argument("r_u length does not match the number of controls");
  if ((r_u.array() < 0.0).any() || r_v < 0.0 || r_e < 0.0) throw std::invalid_argument("weights must be nonnegative");
  if (!(gamma >= 0.5 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0.5, 1)");
  if (polygon_sides < 4) throw std::invalid_argument("polygon_sides must be at least 4");
  if (window_hours < 0.0 || mpc_window_hours <= 0.0) throw std::invalid_argument("window lengths must be positive");
}

std::vector<double> time_of_use_price(int steps, double dt_hours, double start_hour, double peak, double offpeak,
                                      double peak_start, double peak_end) {
  std::vector<double> out(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    const double hour = std::fmod(start_hour + k * dt_hours + 1e-9, 24.0);
    out[static_cast<std::size_t>(k)] = hour >= peak_start && hour < peak_end ? peak : offpeak;
  }
  return out;
}

namespace {

/// JSON node with its path for diagnostics.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& what) const { throw CaseError(path_ + ": " + what); }

  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }
  Node at(const std::string& key) const {
    if (!j_.is_object()) fail("expected an object");
    if (!j_.contains(key)) fail("missing field '" + key + "'");
    return {j_.at(key), path_ + "." + key};
  }
  Node at(std::size_t i) const { return {j_.at(i), path_ + "[" + std::to_string(i) + "]"}; }
  std::size_t size() const {
    if (!j_.is_array()) fail("expected an array");
    return j_.size();
  }
  double num() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("value is not finite");
    return v;
  }
  int integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<int>();
  }
  bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }
  std::string str() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  double num_or(const std::string& key, double fallback) const { return has(key) ? at(key).num() : fallback; }
  std::vector<double> vec() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i).num();
    return out;
  }
  Eigen::MatrixXd matrix(std::size_t rows, std::size_t cols) const {
    if (size() != rows) fail("expected " + std::to_string(rows) + " rows, got " + std::to_string(size()));
    Eigen::MatrixXd out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const Node row = at(r);
      if (row.size() != cols) row.fail("expected " + std::to_string(cols) + " entries, got " + std::to_string(row.size()));
      for (std::size_t c = 0; c < cols; ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row.at(c).num();
    }
    return out;
  }
  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
};

template <class F>
auto with_path(const Node& n, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    n.fail(e.what());
  }
}

struct Parsed {
  Case c;
  std::map<int, int> bus_of_id;
  Eigen::VectorXd base_p, base_q;
};

int bus_ref(const Parsed& p, const Node& n) {
  const int id = n.integer();
  const auto it = p.bus_of_id.find(id);
  if (it == p.bus_of_id.end()) n.fail("unknown bus id " + std::to_string(id));
  return it->second;
}

void parse_network(const Node& root, Parsed& p) {
  Case& c = p.c;
  if (root.has("base")) {
    const Node base = root.at("base");
    c.base_mva = base.num_or("mva", c.base_mva);
    c.base_kv = base.num_or("kv", c.base_kv);
    if (!(c.base_mva > 0.0 && c.base_kv > 0.0)) base.fail("bases must be positive");
  }
  const double z_base = c.base_kv * c.base_kv / c.base_mva;
  const double s_base_kw = c.base_mva * 1000.0;

  const Node buses = root.at("buses");
  std::vector<grid::Bus> bus_list;
  p.base_p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(buses.size()));
  p.base_q = p.base_p;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const Node b = buses.at(i);
    grid::Bus bus;
    bus.id = b.at("id").integer();
    if (!p.bus_of_id.emplace(bus.id, static_cast<int>(i)).second) b.fail("duplicate bus id " + std::to_string(bus.id));
    bus.g = b.num_or("g", 0.0);
    bus.b = b.num_or("b", 0.0);
    bus.v_min = b.num_or("v_min", 0.9025);
    bus.v_max = b.num_or("v_max", 1.1025);
    const auto k = static_cast<Eigen::Index>(i);
    p.base_p[k] = b.has("p_load_kw") ? b.at("p_load_kw").num() / s_base_kw : b.num_or("p_load", 0.0);
    p.base_q[k] = b.has("q_load_kvar") ? b.at("q_load_kvar").num() / s_base_kw : b.num_or("q_load", 0.0);
    bus_list.push_back(bus);
  }

  const Node branches = root.at("branches");
  std::vector<grid::Branch> branch_list;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const Node b = branches.at(i);
    grid::Branch br;
    br.from = bus_ref(p, b.at("from"));
    br.to = bus_ref(p, b.at("to"));
    br.r = b.has("r_ohm") ? b.at("r_ohm").num() / z_base : b.at("r").num();
    br.x = b.has("x_ohm") ? b.at("x_ohm").num() / z_base : b.at("x").num();
    br.l_max = b.num_or("l_max", 4.0);
    branch_list.push_back(br);
  }

  std::vector<grid::Source> sources;
  std::vector<grid::EnergyUnit> units;
  if (root.has("ders")) {
    const Node ders = root.at("ders");
    if (ders.has("sources")) {
      const Node s = ders.at("sources");
      for (std::size_t i = 0; i < s.size(); ++i) {
        const Node n = s.at(i);
        sources.push_back({bus_ref(p, n.at("bus")), n.has("kind") ? n.at("kind").str() : "generic", n.at("capacity").num()});
      }
    }
    if (ders.has("energy_units")) {
      const Node s = ders.at("energy_units");
      for (std::size_t i = 0; i < s.size(); ++i) {
        const Node n = s.at(i);
        grid::EnergyUnit eu;
        eu.bus = bus_ref(p, n.at("bus"));
        eu.p_min = n.at("p_min").num();
        eu.p_max = n.at("p_max").num();
        eu.e_min = n.at("e_min").num();
        eu.e_max = n.at("e_max").num();
        eu.e0 = n.num_or("e0", 0.0);
        eu.alpha = n.num_or("alpha", 0.0);
        eu.beta = n.num_or("beta", 1.0);
        units.push_back(eu);
      }
    }
  }
  const int root_bus = bus_ref(p, root.at("root"));
  try {
    c.grid = grid::GridModel(std::move(bus_list), std::move(branch_list), root_bus, std::move(sources), std::move(units));
  } catch (const std::invalid_argument& e) {
    throw CaseError(std::string("invalid network: ") + e.what());
  }
}

void parse_profiles(const Node& root, Parsed& p) {
  Case& c = p.c;
  const Node prof = root.at("profiles");
  CaseConfig& cfg = c.config;
  cfg.steps = prof.at("steps").integer();
  if (cfg.steps < 1) prof.at("steps").fail("must be at least 1");
  cfg.dt_hours = prof.at("dt_hours").num();
  if (!(cfg.dt_hours > 0.0)) prof.at("dt_hours").fail("must be positive");
  cfg.start_hour = prof.num_or("start_hour", 0.0);
  const auto n = static_cast<std::size_t>(cfg.steps);
  Eigen::VectorXd shape = Eigen::VectorXd::Ones(cfg.steps);
  if (prof.has("load_shape")) {
    const Node ls = prof.at("load_shape");
    if (ls.size() != n) ls.fail("expected " + std::to_string(n) + " entries");
    for (std::size_t k = 0; k < n; ++k) shape[static_cast<Eigen::Index>(k)] = ls.at(k).num();
  }
  c.profile.p_load = shape * p.base_p.transpose();
  c.profile.q_load = shape * p.base_q.transpose();
  const auto ns = static_cast<std::size_t>(c.grid.num_sources());
  c.profile.p_pred = ns > 0 ? prof.at("p_pred").matrix(n, ns) : Eigen::MatrixXd(cfg.steps, 0);
}

void parse_disturbance(const Node& root, Parsed& p) {
  Case& c = p.c;
  const int ns = c.grid.num_sources();
  const Node d = root.at("disturbance");
  const sde::Family family = with_path(d.at("family"), [&] { return sde::family_from_string(d.at("family").str()); });
  const double tau = d.at("tau_hours").num();
  const double scale = d.num_or("sigma_scale", 1.0);
  const Node sig = d.at("sigma");
  const std::size_t cols = sig.size() > 0 ? sig.at(0).size() : 0;
  const Eigen::MatrixXd sigma = scale * sig.matrix(static_cast<std::size_t>(ns), cols);
  Eigen::VectorXd mean0;
  if (d.has("mean0")) {
    const auto v = d.at("mean0").vec();
    mean0 = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  c.disturbance = with_path(d, [&] {
    sde::ItoModel m = family == sde::Family::Beta ? sde::make_beta_model(tau, sigma, mean0)
                                                   : sde::make_ou_model(tau, sigma, mean0);
    if (family == sde::Family::GeneralAffine) {
      m.family = family;
      m.drift = d.at("drift").matrix(static_cast<std::size_t>(ns), static_cast<std::size_t>(ns));
      const auto off = d.at("offset").vec();
      m.offset = Eigen::Map<const Eigen::VectorXd>(off.data(), static_cast<Eigen::Index>(off.size()));
      m.validate();
    }
    return m;
  });
}

void parse_config(const Node& root, Parsed& p) {
  Case& c = p.c;
  CaseConfig& cfg = c.config;
  const int nu = c.grid.num_controls();
  cfg.r_u = Eigen::VectorXd::Ones(nu);
  std::vector<double> price;
  if (root.has("config")) {
    const Node n = root.at("config");
    if (n.has("price")) {
      const Node pr = n.at("price");
      if (pr.size() != static_cast<std::size_t>(cfg.steps)) pr.fail("expected one price per step");
      price = pr.vec();
    } else if (n.has("tou_price")) {
      const Node t = n.at("tou_price");
      price = time_of_use_price(cfg.steps, cfg.dt_hours, cfg.start_hour, t.at("peak").num(), t.at("offpeak").num(),
                                t.num_or("peak_start_hour", 8.0), t.num_or("peak_end_hour", 20.0));
    }
    cfg.price_scale = n.num_or("price_scale", c.base_mva);
    if (n.has("r_u")) {
      const Node r = n.at("r_u");
      if (r.size() != static_cast<std::size_t>(nu)) r.fail("expected one weight per control");
      const auto v = r.vec();
      cfg.r_u = Eigen::Map<const Eigen::VectorXd>(v.data(), nu);
    }
    cfg.r_v = n.num_or("r_v", cfg.r_v);
    cfg.r_e = n.num_or("r_e", cfg.r_e);
    cfg.gamma = n.num_or("gamma", cfg.gamma);
    if (n.has("kappa_rule"))
      cfg.kappa_rule = with_path(n.at("kappa_rule"), [&] { return kappa_rule_from_string(n.at("kappa_rule").str()); });
    cfg.window_hours = n.num_or("window_hours", cfg.window_hours);
    if (n.has("polygon_sides")) cfg.polygon_sides = n.at("polygon_sides").integer();
    cfg.root_voltage = n.num_or("root_voltage", cfg.root_voltage);
    cfg.mpc_window_hours = n.num_or("mpc_window_hours", cfg.mpc_window_hours);
  } else {
    cfg.price_scale = c.base_mva;
  }
  if (price.empty()) price = time_of_use_price(cfg.steps, cfg.dt_hours, cfg.start_hour, 1.0, 0.5, 8.0, 20.0);
  cfg.price = price;
  try {
    cfg.validate(nu);
  } catch (const std::invalid_argument& e) {
    throw CaseError(std::string("config: ") + e.what());
  }
}

}  // namespace

Case parse_case(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::ostringstream msg;
    msg << origin << ":" << line << ":" << col << ": parse error: " << e.what();
    throw CaseError(msg.str());
  }
  const Node root(doc, "case");
  Parsed p;
  p.c.origin = origin;
  try {
    p.c.name = root.has("name") ? root.at("name").str() : origin;
    p.c.synthetic = root.has("synthetic") && root.at("synthetic").boolean();
    parse_network(root, p);
    parse_profiles(root, p);
    parse_disturbance(root, p);
    parse_config(root, p);
  } catch (const CaseError& e) {
    throw CaseError(origin + ": " + e.what());
  } catch (const json::exception& e) {
    throw CaseError(origin + ": " + e.what());
  }
  return std::move(p.c);
}

Case load_case(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CaseError(path + ": cannot open case file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_case(buf.str(), path);
}

}  // namespace adn
