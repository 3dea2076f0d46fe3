#include "adn/eval.hpp"

#include <json.hpp>

#include <cmath>
#include <iomanip>
#include <ostream>

namespace adn::eval {

namespace {

nlohmann::json number(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

}  // namespace

void write_summary_json(std::ostream& out, const EvalReport& r, const Case& c) {
  nlohmann::json j;
  j["case"] = c.name;
  j["synthetic"] = c.synthetic;
  j["units"] = {{"power", "per unit on base_mva"}, {"voltage", "squared magnitude, per unit"}, {"time", "hours"}};
  j["base_mva"] = c.base_mva;
  j["seed"] = r.seed;
  j["scenarios"] = {{"requested", r.requested}, {"evaluated", r.evaluated}, {"excluded", r.excluded}};
  j["valid"] = r.valid;
  j["objective"] = {{"mean", number(r.objective_mean)},
                    {"stderr", number(r.objective_stderr)},
                    {"ci95", {number(r.ci_low), number(r.ci_high)}}};
  auto viol = nlohmann::json::object();
  for (const auto& t : r.violations) {
    Eigen::Index k = 0, i = 0;
    const double mx = t.rate.size() ? t.rate.maxCoeff(&k, &i) : 0.0;
    viol[to_string(t.family)] = {{"max_rate", mx}, {"step", t.first_step + k}, {"index", i}, {"mean_rate", t.rate.size() ? t.rate.mean() : 0.0}};
  }
  j["violations"] = viol;
  j["control_failures"] = r.control_failures;
  j["failures"] = r.failures;
  out << j.dump(1) << '\n';
}

void write_traces_csv(std::ostream& out, const EvalReport& r, const Case& c) {
  const int N = c.config.steps;
  const auto& g = c.grid;
  out << "# per-step means and standard deviations; power in p.u. on " << c.base_mva
      << " MVA, v is squared voltage magnitude in p.u., energy in p.u. hours\n";
  out << "step,time_h";
  for (int i = 0; i < g.num_buses(); ++i) out << ",v" << i << "_mean,v" << i << "_std";
  for (int u = 0; u < g.num_controls(); ++u) out << ",u" << u << "_mean,u" << u << "_std";
  for (int i = 0; i < g.num_units(); ++i) out << ",e" << i << "_mean,e" << i << "_std";
  out << '\n' << std::setprecision(12);
  auto pair = [&](const StepStats& s, int k, int i) { out << ',' << s.mean(k, i) << ',' << std::sqrt(s.var(k, i)); };
  for (int k = 0; k <= N; ++k) {
    out << k << ',' << k * c.config.dt_hours;
    for (int i = 0; i < g.num_buses(); ++i) {
      if (k < N)
        pair(r.voltage, k, i);
      else
        out << ",,";
    }
    for (int u = 0; u < g.num_controls(); ++u) {
      if (k < N)
        pair(r.control, k, u);
      else
        out << ",,";
    }
    for (int i = 0; i < g.num_units(); ++i) pair(r.energy, k, i);
    out << '\n';
  }
}

void write_violations_csv(std::ostream& out, const EvalReport& r) {
  out << "family,step,index,rate\n" << std::setprecision(12);
  for (const auto& t : r.violations)
    for (Eigen::Index k = 0; k < t.rate.rows(); ++k)
      for (Eigen::Index i = 0; i < t.rate.cols(); ++i)
        if (t.rate(k, i) > 0.0) out << to_string(t.family) << ',' << t.first_step + k << ',' << i << ',' << t.rate(k, i) << '\n';
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
  out << "# tau in hours; objectives in case objective units (price_scale times $/kWh p.u. h plus penalties); 95% CI\n";
  out << "tau_h,variant,ok,mo_objective,objective_mean,ci_half_width,error\n" << std::setprecision(12);
  for (const auto& c : cells) {
    std::string err = c.error;
    for (auto& ch : err)
      if (ch == ',' || ch == '\n') ch = ';';
    out << c.tau << ',' << c.variant << ',' << (c.ok ? 1 : 0) << ',' << c.mo_objective << ',' << c.objective_mean << ','
        << c.ci_half_width << ',' << err << '\n';
  }
}

}  // namespace adn::eval
