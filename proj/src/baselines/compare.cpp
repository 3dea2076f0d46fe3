#include "adn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>

namespace adn::baselines {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct SpbcSpec {
  int scenarios = 100;
  bool feedforward_only = false;
};

std::optional<SpbcSpec> parse_spbc(const std::string& name) {
  if (name.rfind("spbc", 0) != 0) return std::nullopt;
  std::string rest = name.substr(4);
  SpbcSpec spec;
  if (rest.size() >= 3 && rest.compare(rest.size() - 3, 3, "-ff") == 0) {
    spec.feedforward_only = true;
    rest.resize(rest.size() - 3);
  }
  if (rest.empty()) return spec;
  if (!std::all_of(rest.begin(), rest.end(), [](char ch) { return ch >= '0' && ch <= '9'; }) || rest.size() > 6)
    return std::nullopt;
  spec.scenarios = std::stoi(rest);
  if (spec.scenarios < 1) return std::nullopt;
  return spec;
}

void fill_stats(BenchmarkRow& row, const MethodPolicy& mp) {
  row.objective = mp.stats.objective;
  row.variables = mp.stats.size.variables;
  row.constraints = mp.stats.size.constraints;
  row.gain_entries = mp.stats.size.gain_entries;
  row.cones = mp.stats.cones;
  row.policy = mp.policy;
}

void fill_eval(BenchmarkRow& row, const eval::EvalReport& rep) {
  row.objective_mean = rep.objective_mean;
  row.ci_half_width = rep.ci_half_width();
  row.evaluated = rep.evaluated;
  row.objectives = rep.objectives;
  row.ok = rep.valid;
  if (!rep.valid) row.error = std::to_string(rep.excluded) + " of " + std::to_string(rep.requested) + " scenarios excluded";
}

}  // namespace

std::vector<BenchmarkRow> compare(const Case& c, const std::vector<std::string>& methods, const CompareOptions& options) {
  if (methods.empty()) throw std::invalid_argument("compare: no methods");
  if (options.n_eval < 1) throw std::invalid_argument("compare: n_eval must be positive");
  if (options.timing_runs < 1) throw std::invalid_argument("compare: timing_runs must be positive");
  for (const auto& m : methods)
    if (m != "dc" && m != "mo" && m != "mpc" && !parse_spbc(m))
      throw std::invalid_argument("compare: unknown method '" + m + "'");

  const int N = c.config.steps;
  const auto ens = sde::simulate_paths(c.disturbance, options.n_eval, N, c.config.dt_hours, options.seed);
  eval::EvalOptions eopt;
  eopt.scenarios = options.n_eval;
  eopt.seed = options.seed;

  std::vector<BenchmarkRow> rows;
  for (const auto& m : methods) {
    BenchmarkRow row;
    row.method = m;
    try {
      if (m == "mpc") {
        std::vector<double> seconds;
        const auto law = mpc_law(c, {0, options.solver}, &seconds);
        auto opt = eopt;
        if (options.mpc_scenarios > 0) opt.scenarios = std::min(options.mpc_scenarios, options.n_eval);
        const auto rep = eval::evaluate(law, c, ens, opt);
        row.objective = std::numeric_limits<double>::quiet_NaN();
        row.seconds_per_step = median(seconds);
        row.solve_seconds = row.seconds_per_step * N;
        fill_eval(row, rep);
        if (rep.control_failures > 0 && row.error.empty())
          row.error = std::to_string(rep.control_failures) + " window solves failed";
      } else {
        std::function<MethodPolicy()> solve;
        if (m == "dc")
          solve = [&] { return solve_dc(c, options.solver); };
        else if (m == "mo")
          solve = [&] { return solve_mo(c, options.solver); };
        else {
          const auto spec = *parse_spbc(m);
          SpbcOptions so;
          so.scenarios = spec.scenarios;
          so.feedforward_only = spec.feedforward_only;
          so.seed = options.spbc_seed;
          so.solver = options.solver;
          solve = [&c, so] { return solve_spbc(c, so); };
        }
        std::vector<double> seconds;
        MethodPolicy mp;
        for (int r = 0; r < options.timing_runs; ++r) {
          mp = solve();
          seconds.push_back(mp.stats.seconds);
        }
        row.solve_seconds = median(seconds);
        row.seconds_per_step = row.solve_seconds / N;
        fill_stats(row, mp);
        fill_eval(row, eval::evaluate(eval::affine_law(mp.policy), c, ens, eopt));
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  out << "# wall times in seconds (median over timing runs); objectives in case objective units; 95% CI; "
         "sizes count model variables and rows\n";
  out << "method,ok,solve_seconds,seconds_per_step,objective,objective_mean,ci_half_width,evaluated,variables,"
         "constraints,cones,gain_entries,error\n";
  out.precision(10);
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    out << r.method << ',' << (r.ok ? 1 : 0) << ',' << r.solve_seconds << ',' << r.seconds_per_step << ',';
    if (!std::isnan(r.objective)) out << r.objective;
    out << ',' << r.objective_mean << ',' << r.ci_half_width << ',' << r.evaluated << ',' << r.variables << ','
        << r.constraints << ',' << r.cones << ',' << r.gain_entries << ",\"" << err << "\"\n";
  }
}

}  // namespace adn::baselines
