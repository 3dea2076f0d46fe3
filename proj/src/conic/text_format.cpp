#include "adn/conic.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace adn::conic {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of input");
    return w;
  }
  void expect(std::string_view keyword) {
    const auto w = word();
    if (w != keyword) fail("expected '" + std::string(keyword) + "', got '" + w + "'");
  }
  long integer() {
    const auto w = word();
    char* end = nullptr;
    const long v = std::strtol(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0') fail("expected integer, got '" + w + "'");
    return v;
  }
  double real() {
    const auto w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0') fail("expected number, got '" + w + "'");
    return v;
  }
  [[noreturn]] static void fail(const std::string& msg) { throw std::runtime_error("conic text format: " + msg); }

 private:
  std::istream& in_;
};

ConeKind parse_kind(const std::string& w) {
  if (w == "nonneg") return ConeKind::Nonnegative;
  if (w == "soc") return ConeKind::SecondOrder;
  if (w == "rsoc") return ConeKind::RotatedSecondOrder;
  Reader::fail("unknown cone kind '" + w + "'");
}

Status parse_status(const std::string& w) {
  if (w == "optimal") return Status::Optimal;
  if (w == "near_optimal") return Status::NearOptimal;
  if (w == "infeasible") return Status::Infeasible;
  if (w == "unbounded") return Status::Unbounded;
  if (w == "iter_limit") return Status::IterLimit;
  Reader::fail("unknown status '" + w + "'");
}

}  // namespace

void write_program(std::ostream& out, const ConicProgram& prog) {
  const auto n = prog.num_variables();
  out << "adn-conic 1\n";
  out << "variables " << n << "\n";
  out << "constant " << fmt(prog.constant_cost()) << "\n";
  std::size_t nnz = 0;
  for (double c : prog.linear_cost()) nnz += c != 0.0;
  out << "linear " << nnz << "\n";
  for (int i = 0; i < n; ++i)
    if (prog.linear_cost()[static_cast<std::size_t>(i)] != 0.0)
      out << i << " " << fmt(prog.linear_cost()[static_cast<std::size_t>(i)]) << "\n";
  nnz = 0;
  for (double d : prog.hessian_diagonal()) nnz += d != 0.0;
  out << "hessian_diagonal " << nnz << "\n";
  for (int i = 0; i < n; ++i)
    if (prog.hessian_diagonal()[static_cast<std::size_t>(i)] != 0.0)
      out << i << " " << fmt(prog.hessian_diagonal()[static_cast<std::size_t>(i)]) << "\n";
  out << "low_rank " << prog.low_rank().size() << "\n";
  for (const auto& col : prog.low_rank()) {
    out << col.size();
    for (const auto& t : col) out << " " << t.var << " " << fmt(t.coef);
    out << "\n";
  }
  out << "equalities " << prog.equalities().size() << "\n";
  for (const auto& row : prog.equalities()) {
    out << fmt(row.rhs) << " " << row.terms.size();
    for (const auto& t : row.terms) out << " " << t.var << " " << fmt(t.coef);
    out << "\n";
  }
  out << "cones " << prog.cones().size() << "\n";
  for (const auto& cone : prog.cones()) {
    out << to_string(cone.kind) << " " << cone.vars.size();
    for (int v : cone.vars) out << " " << v;
    out << "\n";
  }
  out << "end\n";
}

ConicProgram read_program(std::istream& in) {
  Reader r(in);
  r.expect("adn-conic");
  if (r.integer() != 1) Reader::fail("unsupported version");
  ConicProgram prog;
  r.expect("variables");
  const long n = r.integer();
  if (n < 0) Reader::fail("negative variable count");
  prog.add_variables(static_cast<int>(n));
  auto index = [&](long v) {
    if (v < 0 || v >= n) Reader::fail("variable index out of range");
    return static_cast<int>(v);
  };
  r.expect("constant");
  prog.add_constant_cost(r.real());
  r.expect("linear");
  for (long k = r.integer(); k > 0; --k) {
    const int i = index(r.integer());
    prog.add_linear_cost(i, r.real());
  }
  r.expect("hessian_diagonal");
  for (long k = r.integer(); k > 0; --k) {
    const int i = index(r.integer());
    prog.add_square_cost(i, 0.5 * r.real());
  }
  r.expect("low_rank");
  for (long k = r.integer(); k > 0; --k) {
    std::vector<Term> col;
    for (long j = r.integer(); j > 0; --j) {
      const int i = index(r.integer());
      col.push_back({i, r.real()});
    }
    prog.add_low_rank_column(std::move(col));
  }
  r.expect("equalities");
  for (long k = r.integer(); k > 0; --k) {
    const double rhs = r.real();
    std::vector<Term> terms;
    for (long j = r.integer(); j > 0; --j) {
      const int i = index(r.integer());
      terms.push_back({i, r.real()});
    }
    prog.add_equality(std::move(terms), rhs);
  }
  r.expect("cones");
  for (long k = r.integer(); k > 0; --k) {
    const auto kind = parse_kind(r.word());
    std::vector<int> vars;
    for (long j = r.integer(); j > 0; --j) vars.push_back(index(r.integer()));
    prog.add_cone(kind, std::move(vars));
  }
  r.expect("end");
  return prog;
}

void write_solution(std::ostream& out, const Solution& sol) {
  out << "adn-solution 1\n";
  out << "status " << to_string(sol.status) << "\n";
  out << "objective " << fmt(sol.objective) << "\n";
  out << "iterations " << sol.iterations << "\n";
  auto vec = [&out](std::string_view name, const std::vector<double>& v) {
    out << name << " " << v.size() << "\n";
    for (double a : v) out << fmt(a) << "\n";
  };
  vec("primal", sol.x);
  vec("dual_eq", sol.y);
  vec("dual_cone", sol.z);
  out << "end\n";
}

Solution read_solution(std::istream& in) {
  Reader r(in);
  r.expect("adn-solution");
  if (r.integer() != 1) Reader::fail("unsupported version");
  Solution sol;
  r.expect("status");
  sol.status = parse_status(r.word());
  r.expect("objective");
  sol.objective = r.real();
  r.expect("iterations");
  sol.iterations = static_cast<int>(r.integer());
  auto vec = [&r](std::string_view name) {
    r.expect(name);
    const long len = r.integer();
    if (len < 0) Reader::fail("negative length");
    std::vector<double> v(static_cast<std::size_t>(len));
    for (auto& a : v) a = r.real();
    return v;
  };
  sol.x = vec("primal");
  sol.y = vec("dual_eq");
  sol.z = vec("dual_cone");
  r.expect("end");
  return sol;
}

Solution solve_external(const ConicProgram& prog, const std::string& command) {
  namespace fs = std::filesystem;
  std::random_device rd;
  const auto stem = fs::temp_directory_path() / ("adn-conic-" + std::to_string(rd()) + "-" +
                                                 std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
  const auto prog_path = stem.string() + ".prog";
  const auto sol_path = stem.string() + ".sol";
  {
    std::ofstream f(prog_path);
    write_program(f, prog);
  }
  const auto start = std::chrono::steady_clock::now();
  const std::string cmd = command + " '" + prog_path + "' '" + sol_path + "'";
  const int rc = std::system(cmd.c_str());
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::error_code ec;
  fs::remove(prog_path, ec);
  if (rc != 0) {
    fs::remove(sol_path, ec);
    throw std::runtime_error("external solver command failed (exit " + std::to_string(rc) + "): " + cmd);
  }
  std::ifstream f(sol_path);
  if (!f) throw std::runtime_error("external solver wrote no solution file");
  Solution sol = read_solution(f);
  f.close();
  fs::remove(sol_path, ec);
  sol.wall_seconds = elapsed;
  if (sol.x.size() == static_cast<std::size_t>(prog.num_variables())) sol.residuals = kkt_residuals(prog, sol);
  return sol;
}

}  // namespace adn::conic
