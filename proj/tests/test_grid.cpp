#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace adn;
using adn::testing::random_tree;
using adn::testing::three_bus;
using adn::testing::two_bus;

namespace {

struct Scenario {
  Eigen::VectorXd xi, d, u;
  grid::Injections inj;
};

Scenario random_scenario(const grid::GridModel& g, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Scenario s;
  const int ns = g.num_sources(), nb = g.num_buses();
  s.xi = Eigen::VectorXd::NullaryExpr(ns, [&] { return 0.3 * scale * U(rng); });
  s.d.resize(ns + 2 * nb);
  for (int i = 0; i < ns; ++i) s.d[i] = scale * (0.5 + 0.5 * U(rng));
  for (int i = 0; i < 2 * nb; ++i) s.d[ns + i] = scale * (0.4 + 0.3 * U(rng)) * (i < nb ? 1.0 : 0.5);
  s.u = Eigen::VectorXd::NullaryExpr(g.num_controls(), [&] { return 0.2 * scale * U(rng); });
  const Eigen::VectorXd p_src = s.d.head(ns) + s.xi;
  s.inj = grid::bus_injections(g, p_src, s.u.head(ns), s.u.tail(g.num_units()), s.d.segment(ns, nb), s.d.tail(nb));
  return s;
}

double two_bus_current(double p, double q, double r, double x) {
  // l = (p + r l)^2 + (q + x l)^2 with v0 = 1; smaller root.
  const double a = r * r + x * x, b = 2.0 * (p * r + q * x) - 1.0, c = p * p + q * q;
  return (-b - std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
}

}  // namespace

TEST_CASE("grid validation") {
  using grid::Branch;
  auto b = adn::testing::plain_bus;
  CHECK_THROWS_WITH_AS(grid::GridModel({b(0), b(1), b(2)}, {{0, 1, 0.01, 0.01, 1}, {1, 2, 0.01, 0.01, 1}, {2, 1, 0.01, 0.01, 1}},
                                       0, {}, {}),
                       doctest::Contains("tree"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(grid::GridModel({b(0), b(1), b(2)}, {{0, 1, 0.01, 0.01, 1}, {2, 1, 0.01, 0.01, 1}}, 0, {}, {}),
                       doctest::Contains("bus 1"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(grid::GridModel({b(0), b(1)}, {{0, 1, 0.0, 0.01, 1}}, 0, {}, {}), doctest::Contains("branch 0"),
                       std::invalid_argument);
  CHECK_THROWS_AS(grid::GridModel({b(0), b(1)}, {{0, 1, 0.01, 0.01, 1}}, 0, {{5, "pv", 1.0}}, {}), std::invalid_argument);
  grid::Bus bad = b(1);
  bad.v_min = 1.2;
  CHECK_THROWS_WITH_AS(grid::GridModel({b(0), bad}, {{0, 1, 0.01, 0.01, 1}}, 0, {}, {}), doctest::Contains("bus 1"),
                       std::invalid_argument);
  const auto g = three_bus();
  CHECK(g.bfs_order() == std::vector<int>{0, 1, 2});
  CHECK(g.parent_branch(0) == -1);
  CHECK(g.parent_branch(2) == 1);
  CHECK(g.dim_x() == 7);
}

TEST_CASE("compact form of a two-bus line matches hand elimination") {
  const double r = 0.01, x = 0.02;
  const auto net = grid::build_compact(two_bus(r, x));
  // x = (P, Q, v0, v1); d = (pL0, pL1, qL0, qL1).
  CHECK(net.Ay(0, 0) == doctest::Approx(r).epsilon(1e-14));
  CHECK(net.Ay(1, 0) == doctest::Approx(x).epsilon(1e-14));
  CHECK(std::abs(net.Ay(2, 0)) < 1e-15);
  CHECK(net.Ay(3, 0) == doctest::Approx(-2.0 * (r * r + x * x) + (r * r + x * x)).epsilon(1e-12));
  CHECK(net.Ad(0, 1) == doctest::Approx(1.0));
  CHECK(net.Ad(1, 3) == doctest::Approx(1.0));
  CHECK(net.Ad(3, 1) == doctest::Approx(-2.0 * r));
  CHECK(net.Ad(3, 3) == doctest::Approx(-2.0 * x));
  CHECK(net.Ad.col(0).norm() < 1e-15);
  CHECK(net.a0.isApprox(Eigen::Vector4d(0, 0, 1, 1)));
  CHECK(net.Ae.cols() == 0);

  // v1 = v0 - 2(rP + xQ) + (r^2 + x^2) l for any (l, d).
  const double l = 0.3, pl = 0.2, ql = -0.1;
  const Eigen::VectorXd xs = net.evaluate(Eigen::VectorXd::Constant(1, l), {}, Eigen::Vector4d(0, pl, 0, ql), {}, {});
  CHECK(xs[3] == doctest::Approx(1.0 - 2.0 * (r * xs[0] + x * xs[1]) + (r * r + x * x) * l).epsilon(1e-14));

  const auto zero = net.evaluate(Eigen::VectorXd::Zero(1), {}, Eigen::VectorXd::Zero(4), {}, {});
  CHECK(zero.head(2).norm() == 0.0);
  CHECK(zero.tail(2).isApprox(Eigen::Vector2d(1, 1)));
}

TEST_CASE("LinDistFlow voltages") {
  const auto lin = grid::build_lindistflow(two_bus(0.01, 0.01));
  const Eigen::VectorXd xs = lin.evaluate({}, Eigen::Vector4d(0, 0.1, 0, 0.1), {}, {});
  CHECK(xs[0] == doctest::Approx(0.1));
  CHECK(xs[3] == doctest::Approx(0.996).epsilon(1e-14));

  const auto flat = grid::build_lindistflow(two_bus(1e-12, 1e-12));
  const Eigen::VectorXd xf = flat.evaluate({}, Eigen::Vector4d(0, 0.5, 0, 0.5), {}, {});
  CHECK(std::abs(xf[3] - 1.0) < 1e-10);

  // Error against the exact model grows with loading.
  const auto g = three_bus();
  const auto lin3 = grid::build_lindistflow(g);
  auto error_at = [&](double load) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(2 + 6);
    d[2 + 1] = d[2 + 2] = load;
    d[2 + 3 + 1] = d[2 + 3 + 2] = 0.5 * load;
    const auto inj = grid::bus_injections(g, Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), Eigen::VectorXd::Zero(1),
                                          d.segment(2, 3), d.tail(3));
    const auto exact = grid::power_flow_solve(g, inj);
    const Eigen::VectorXd approx = lin3.evaluate(Eigen::Vector2d::Zero(), d, {}, Eigen::VectorXd::Zero(3));
    return (approx.tail(3) - exact.v).cwiseAbs().maxCoeff();
  };
  const double e1 = error_at(0.1), e2 = error_at(0.2);
  CHECK(e1 < 1e-3);
  CHECK(e2 >= e1);
}

TEST_CASE("distflow residual") {
  const auto g = three_bus();
  std::mt19937_64 rng(7);
  const auto sc = random_scenario(g, rng, 0.3);
  const auto state = grid::power_flow_solve(g, sc.inj);
  const Eigen::VectorXd r0 = grid::distflow_residual(g, state, sc.inj);
  CHECK(r0.cwiseAbs().maxCoeff() < 1e-10);

  auto bumped = state;
  bumped.l[1] += 0.01;
  const Eigen::VectorXd r1 = grid::distflow_residual(g, bumped, sc.inj);
  CHECK(r1[3 * 2 + 1] - r0[3 * 2 + 1] == doctest::Approx(0.01 * state.v[1]).epsilon(1e-10));

  grid::NetworkState zero{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2),
                          Eigen::VectorXd::Zero(3)};
  const auto load = grid::bus_injections(g, Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), Eigen::VectorXd::Zero(1),
                                         Eigen::Vector3d(0, 0.2, 0.3), Eigen::Vector3d(0, 0.05, 0.07));
  const Eigen::VectorXd rz = grid::distflow_residual(g, zero, load);
  CHECK(rz.head(2).isApprox(Eigen::Vector2d(0.2, 0.3)));
  CHECK(rz.segment(2, 2).isApprox(Eigen::Vector2d(0.05, 0.07)));
}

TEST_CASE("capacity polygon") {
  const auto sq = grid::build_capacity_polygon(1.0, 4);
  auto inside = [](const grid::Polygon& p, double a, double b) {
    return ((p.C * Eigen::Vector2d(a, b)).array() <= p.D.array() + 1e-12).all();
  };
  for (auto [a, b] : {std::pair{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}}) CHECK(inside(sq, a, b));
  CHECK_FALSE(inside(sq, 0.8, 0.8));
  CHECK(inside(sq, 0.5, 0.5));
  for (int n : {4, 8, 12, 31}) CHECK(inside(grid::build_capacity_polygon(2.5, n), 0.0, 0.0));
  CHECK_FALSE(inside(grid::build_capacity_polygon(3.0, 8), 3.03, 0.0));
  CHECK_THROWS_AS(grid::build_capacity_polygon(1.0, 3), std::invalid_argument);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.6, 1.6);
  const auto poly = grid::build_capacity_polygon(1.5, 12);
  int accepted = 0;
  bool sound = true;
  for (int k = 0; k < 100000; ++k) {
    const double p = U(rng), q = U(rng);
    if (!((poly.C * Eigen::Vector2d(p, q)).array() <= poly.D.array()).all()) continue;
    ++accepted;
    sound = sound && p * p + q * q <= 1.5 * 1.5 * (1 + 1e-12);
  }
  CHECK(sound);
  CHECK(accepted > 50000);
}

TEST_CASE("power flow") {
  const auto g2 = two_bus(0.01, 0.01);
  const auto flat = grid::power_flow_solve(g2, {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()});
  CHECK(flat.v.isApprox(Eigen::Vector2d(1, 1)));
  CHECK(flat.P.norm() + flat.Q.norm() + flat.l.norm() == 0.0);

  const auto s = grid::power_flow_solve(g2, {Eigen::Vector2d(0, -0.1), Eigen::Vector2d::Zero()});
  const double l = two_bus_current(0.1, 0.0, 0.01, 0.01);
  CHECK(s.l[0] == doctest::Approx(l).epsilon(1e-12));
  CHECK(s.P[0] == doctest::Approx(0.1 + 0.01 * l).epsilon(1e-12));
  CHECK(s.Q[0] == doctest::Approx(0.01 * l).epsilon(1e-12));
  CHECK(s.v[1] == doctest::Approx(1.0 - 2.0 * 0.01 * (s.P[0] + s.Q[0]) + 2e-4 * l).epsilon(1e-12));

  try {
    grid::power_flow_solve(g2, {Eigen::Vector2d(0, -100.0), Eigen::Vector2d::Zero()});
    FAIL("expected PowerFlowError");
  } catch (const grid::PowerFlowError& e) {
    CHECK_FALSE(e.trace().empty());
  }
}

TEST_CASE("tree reduction is exact on solved states") {
  for (const auto& g : {three_bus(), random_tree(25, 3), random_tree(60, 9)}) {
    const auto net = grid::build_compact(g);
    std::mt19937_64 rng(42);
    double worst = 0.0, worst_pf = 0.0, worst_fixed = 0.0;
    const Eigen::VectorXd e = Eigen::VectorXd::Zero(g.num_units());
    for (int k = 0; k < 1000; ++k) {
      const auto sc = random_scenario(g, rng, 0.05);
      const auto st = grid::power_flow_solve(g, sc.inj);
      worst_pf = std::max(worst_pf, grid::distflow_residual(g, st, sc.inj).cwiseAbs().maxCoeff());
      const Eigen::VectorXd xs = net.evaluate(st.l, sc.xi, sc.d, e, sc.u);
      worst = std::max(worst, (xs - st.x()).cwiseAbs().maxCoeff());
      if (k < 20) {
        const auto again = grid::power_flow_solve(g, sc.inj, 1.0, {}, &st);
        worst_fixed = std::max(worst_fixed, (again.x() - st.x()).cwiseAbs().maxCoeff());
      }
    }
    CHECK(worst < 1e-10);
    CHECK(worst_pf < 1e-10);
    CHECK(worst_fixed <= 1e-12);
  }
}
