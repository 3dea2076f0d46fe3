// adnctl: solve, evaluate, sweep and compare control policies for a case.

#include "adn/baselines.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#ifndef ADN_VERSION
#define ADN_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace adn;

namespace {

constexpr int kOk = 0, kMethodFailure = 1, kInputError = 2;

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return out.str();
}

struct Common {
  std::string case_path;
  std::uint64_t seed = 1;
  int scenarios = -1;  // -1: command default
  std::optional<double> gamma;
  std::string kappa_rule;
  std::optional<double> window_hours;
  std::string out;
  int threads = 0;
};

struct Context {
  std::string command;
  Common common;
  json overrides = json::object();
  std::vector<std::string> inputs;  // files hashed into the manifest
  fs::path out_dir;
};

Case load_with_overrides(Context& ctx) {
  if (ctx.common.case_path.empty()) throw InputError("no case given (positional or --case)");
  Case c;
  try {
    c = load_case(ctx.common.case_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  ctx.inputs.push_back(ctx.common.case_path);
  auto& cfg = c.config;
  if (ctx.common.gamma) {
    cfg.gamma = *ctx.common.gamma;
    ctx.overrides["gamma"] = cfg.gamma;
  }
  if (!ctx.common.kappa_rule.empty()) {
    try {
      cfg.kappa_rule = kappa_rule_from_string(ctx.common.kappa_rule);
    } catch (const std::exception& e) {
      throw InputError(e.what());
    }
    ctx.overrides["kappa_rule"] = to_string(cfg.kappa_rule);
  }
  if (ctx.common.window_hours) {
    cfg.window_hours = *ctx.common.window_hours;
    ctx.overrides["window_hours"] = cfg.window_hours;
  }
  try {
    cfg.validate(c.grid.num_controls());
  } catch (const std::exception& e) {
    throw InputError(std::string("config override: ") + e.what());
  }
  return c;
}

fs::path resolve_out(const Context& ctx, const std::string& leaf) {
  if (!ctx.common.out.empty()) return ctx.common.out;
  const char* root = std::getenv("ADN_OUT_ROOT");
  return fs::path(root && *root ? root : "adn_out") / leaf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

template <class F>
void write_with(const fs::path& path, F&& f) {
  std::ostringstream ss;
  f(ss);
  write_text(path, ss.str());
}

void write_manifest(const Context& ctx, const json& extra = json::object()) {
  json m;
  m["tool"] = "adnctl";
  m["version"] = ADN_VERSION;
  m["command"] = ctx.command;
  m["case"] = ctx.common.case_path;
  m["seed"] = ctx.common.seed;
  m["overrides"] = ctx.overrides;
  m["output_dir"] = ctx.out_dir.string();
  std::string blob = ctx.command + '\n' + ctx.overrides.dump() + '\n' + std::to_string(ctx.common.seed) + '\n' +
                     extra.dump() + '\n';
  json files = json::array();
  for (const auto& f : ctx.inputs) {
    const std::string data = read_file(f);
    files.push_back({{"path", f}, {"sha256", sha256_hex(data)}});
    blob += data;
  }
  m["inputs"] = files;
  m["content_hash"] = sha256_hex(blob);
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  write_text(ctx.out_dir / "manifest.json", m.dump(2) + "\n");
}

json size_json(const baselines::SolveStats& s) {
  return {{"status", std::string(conic::to_string(s.status))},
          {"objective", s.objective},
          {"iterations", s.iterations},
          {"variables", s.size.variables},
          {"constraints", s.size.constraints},
          {"gain_entries", s.size.gain_entries},
          {"cones", s.cones}};
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void prepare_out(Context& ctx, const std::string& leaf) {
  ctx.out_dir = resolve_out(ctx, leaf);
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  if (ec) throw InputError("cannot create output directory '" + ctx.out_dir.string() + "': " + ec.message());
}

// ---- commands --------------------------------------------------------------

int cmd_run(Context& ctx, const std::string& method) {
  if (method != "mo" && method != "dc" && method != "spbc" && method != "mpc")
    throw InputError("unknown method '" + method + "' (mo, dc, spbc, mpc)");
  Case c = load_with_overrides(ctx);
  prepare_out(ctx, "run-" + method + "-" + c.name);
  std::string log;
  conic::SolverOptions solver;
  solver.log = [&log](const std::string& line) { log += line; };

  json extra{{"method", method}};
  if (method == "mpc") {
    const auto run = baselines::run_mpc(c, 0, ctx.common.seed, {0, solver});
    write_with(ctx.out_dir / "trajectory.csv", [&](std::ostream& out) {
      out << "# closed-loop run; controls and energy in p.u. on " << c.base_mva << " MVA, energy in p.u. hours\n";
      out << "step,time_h";
      for (int u = 0; u < c.grid.num_controls(); ++u) out << ",u" << u;
      for (int i = 0; i < c.grid.num_units(); ++i) out << ",e" << i;
      out << '\n' << std::setprecision(12);
      for (int k = 0; k <= c.config.steps; ++k) {
        out << k << ',' << k * c.config.dt_hours;
        for (int u = 0; u < c.grid.num_controls(); ++u) {
          out << ',';
          if (k < c.config.steps) out << run.trajectory.u(k, u);
        }
        for (int i = 0; i < c.grid.num_units(); ++i) out << ',' << run.trajectory.e(k, i);
        out << '\n';
      }
    });
    write_text(ctx.out_dir / "summary.json",
               json{{"objective", run.objective}, {"control_failures", run.failures}}.dump(2) + "\n");
    write_text(ctx.out_dir / "solver_log.txt", log);
    write_manifest(ctx, extra);
    return run.failures > 0 ? kMethodFailure : kOk;
  }

  baselines::MethodPolicy mp;
  try {
    if (method == "mo")
      mp = baselines::solve_mo(c, solver);
    else if (method == "dc")
      mp = baselines::solve_dc(c, solver);
    else {
      baselines::SpbcOptions so;
      so.scenarios = ctx.common.scenarios < 0 ? 100 : ctx.common.scenarios;
      if (so.scenarios < 1) throw InputError("--scenarios must be at least 1 for spbc");
      so.seed = ctx.common.seed;
      so.solver = solver;
      extra["spbc_scenarios"] = so.scenarios;
      mp = baselines::solve_spbc(c, so);
    }
  } catch (const InputError&) {
    throw;
  } catch (const std::exception& e) {
    write_text(ctx.out_dir / "solver_log.txt", log + "error: " + e.what() + "\n");
    throw;
  }
  std::ostringstream tail;
  tail << "status " << conic::to_string(mp.stats.status) << "\niterations " << mp.stats.iterations << "\nseconds "
       << mp.stats.seconds << '\n';
  write_text(ctx.out_dir / "solver_log.txt", log + tail.str());
  write_with(ctx.out_dir / "policy.json", [&](std::ostream& out) { mo::write_policy(out, mp.policy); });
  write_text(ctx.out_dir / "size.json", size_json(mp.stats).dump(2) + "\n");
  write_manifest(ctx, extra);
  return kOk;
}

int cmd_eval(Context& ctx, const std::string& policy_path) {
  if (ctx.common.scenarios == 0) throw InputError("--scenarios must be positive");
  Case c = load_with_overrides(ctx);
  mo::AffinePolicy policy;
  {
    std::ifstream in(policy_path);
    if (!in) throw InputError("cannot read policy '" + policy_path + "'");
    try {
      policy = mo::read_policy(in);
    } catch (const std::exception& e) {
      throw InputError(std::string("policy: ") + e.what());
    }
  }
  ctx.inputs.push_back(policy_path);
  prepare_out(ctx, "eval-" + c.name);
  eval::EvalOptions opt;
  opt.scenarios = ctx.common.scenarios < 0 ? 1000 : ctx.common.scenarios;
  opt.seed = ctx.common.seed;
  opt.threads = ctx.common.threads;
  eval::EvalReport rep;
  try {
    rep = eval::evaluate_policy(policy, c, opt);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  write_with(ctx.out_dir / "summary.json", [&](std::ostream& out) { eval::write_summary_json(out, rep, c); });
  write_with(ctx.out_dir / "traces.csv", [&](std::ostream& out) { eval::write_traces_csv(out, rep, c); });
  write_with(ctx.out_dir / "violations.csv", [&](std::ostream& out) { eval::write_violations_csv(out, rep); });
  write_manifest(ctx, {{"policy", policy_path}, {"scenarios", opt.scenarios}});
  return rep.valid ? kOk : kMethodFailure;
}

int cmd_sweep(Context& ctx, const std::string& tau_list, const std::string& variants_list) {
  if (ctx.common.scenarios == 0) throw InputError("--scenarios must be positive");
  std::vector<double> taus;
  for (const auto& t : split(tau_list)) {
    try {
      std::size_t used = 0;
      taus.push_back(std::stod(t, &used));
      if (used != t.size() || !(taus.back() > 0.0)) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw InputError("--tau-list: '" + t + "' is not a positive number");
    }
  }
  if (taus.empty()) throw InputError("--tau-list is empty");
  Case c = load_with_overrides(ctx);
  std::vector<eval::SigmaVariant> variants;
  for (const auto& v : split(variants_list)) {
    if (v == "corr")
      variants.push_back({v, c.disturbance.sigma});
    else if (v == "indep")
      variants.push_back({v, eval::independent_sigma(c.disturbance.sigma)});
    else
      throw InputError("--sigma-variants: unknown variant '" + v + "' (corr, indep)");
  }
  if (variants.empty()) throw InputError("--sigma-variants is empty");
  prepare_out(ctx, "sweep-" + c.name);
  eval::EvalOptions opt;
  opt.scenarios = ctx.common.scenarios < 0 ? 1000 : ctx.common.scenarios;
  opt.seed = ctx.common.seed;
  opt.threads = ctx.common.threads;
  const auto cells = eval::correlation_sweep(c, taus, variants, opt);
  write_with(ctx.out_dir / "sweep.csv", [&](std::ostream& out) { eval::write_sweep_csv(out, cells); });
  write_manifest(ctx, {{"tau_list", taus}, {"sigma_variants", split(variants_list)}, {"scenarios", opt.scenarios}});
  for (const auto& cell : cells)
    if (!cell.ok) return kMethodFailure;
  return kOk;
}

int cmd_compare(Context& ctx, const std::string& methods_list, int timing_runs, int mpc_scenarios) {
  if (ctx.common.scenarios == 0) throw InputError("--scenarios must be positive");
  const auto methods = split(methods_list);
  if (methods.empty()) throw InputError("--methods is empty");
  Case c = load_with_overrides(ctx);
  prepare_out(ctx, "compare-" + c.name);
  baselines::CompareOptions opt;
  opt.n_eval = ctx.common.scenarios < 0 ? 1000 : ctx.common.scenarios;
  opt.seed = ctx.common.seed;
  opt.timing_runs = timing_runs;
  opt.mpc_scenarios = mpc_scenarios;
  std::vector<baselines::BenchmarkRow> rows;
  try {
    rows = baselines::compare(c, methods, opt);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  write_with(ctx.out_dir / "benchmark.csv", [&](std::ostream& out) { baselines::write_benchmark_csv(out, rows); });
  write_manifest(ctx, {{"methods", methods}, {"scenarios", opt.n_eval}, {"timing_runs", timing_runs},
                       {"mpc_scenarios", mpc_scenarios}});
  for (const auto& r : rows)
    if (!r.ok) return kMethodFailure;
  return kOk;
}

void add_common(CLI::App* app, Common& o, bool scenarios) {
  app->add_option("case,--case", o.case_path, "case file (JSON)");
  app->add_option("--seed", o.seed, "random seed");
  if (scenarios) app->add_option("--scenarios", o.scenarios, "scenario count");
  app->add_option("--gamma", o.gamma, "chance-constraint confidence level");
  app->add_option("--kappa-rule", o.kappa_rule, "safety multiplier rule: dr or gauss");
  app->add_option("--window-hours", o.window_hours, "gain window length in hours (0: one gain)");
  app->add_option("--out", o.out, "output directory (default $ADN_OUT_ROOT/<command>-<case>)");
  app->add_option("--threads", o.threads, "evaluation threads (0: hardware)");
}

int report_error(const Context& ctx, int code, const std::string& kind, const std::string& message) {
  json doc{{"status", "error"}, {"exit_code", code}, {"kind", kind}, {"command", ctx.command}, {"message", message}};
  std::cerr << doc.dump() << std::endl;
  if (!ctx.out_dir.empty()) {
    std::ofstream out(ctx.out_dir / "error.json");
    out << doc.dump(2) << '\n';
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moment-optimization control of distribution networks"};
  app.set_version_flag("--version", ADN_VERSION);
  app.require_subcommand(1);

  Context ctx;
  std::string method, policy_path, tau_list = "0.5,1,2", variants = "corr,indep", methods = "dc,mo";
  int timing_runs = 3, mpc_scenarios = 0;

  auto* run = app.add_subcommand("run", "solve one method and write its policy");
  run->add_option("method", method, "mo, dc, spbc or mpc")->required();
  add_common(run, ctx.common, true);

  auto* ev = app.add_subcommand("eval", "Monte Carlo evaluation of a policy file");
  ev->add_option("policy", policy_path, "policy file")->required();
  add_common(ev, ctx.common, true);

  auto* sw = app.add_subcommand("sweep", "correlation sweep over tau and sigma variants");
  add_common(sw, ctx.common, true);
  sw->add_option("--tau-list", tau_list, "comma-separated tau values in hours");
  sw->add_option("--sigma-variants", variants, "comma-separated variants: corr, indep");

  auto* cmp = app.add_subcommand("compare", "benchmark methods on one scenario ensemble");
  add_common(cmp, ctx.common, true);
  cmp->add_option("--methods", methods, "comma-separated: dc, mo, mpc, spbc<n>, spbc<n>-ff");
  cmp->add_option("--timing-runs", timing_runs, "solves per method for the median wall time")->check(CLI::PositiveNumber);
  cmp->add_option("--mpc-scenarios", mpc_scenarios, "MPC evaluation scenarios (0: all)")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return report_error(ctx, kInputError, "usage", e.what());
  }

  try {
    if (*run) {
      ctx.command = "run";
      return cmd_run(ctx, method);
    }
    if (*ev) {
      ctx.command = "eval";
      return cmd_eval(ctx, policy_path);
    }
    if (*sw) {
      ctx.command = "sweep";
      return cmd_sweep(ctx, tau_list, variants);
    }
    ctx.command = "compare";
    return cmd_compare(ctx, methods, timing_runs, mpc_scenarios);
  } catch (const InputError& e) {
    return report_error(ctx, kInputError, "input", e.what());
  } catch (const grid::PowerFlowError& e) {
    return report_error(ctx, kMethodFailure, "power_flow", e.what());
  } catch (const std::exception& e) {
    return report_error(ctx, kMethodFailure, "method", e.what());
  }
}
