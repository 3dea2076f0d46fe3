#include <doctest.h>

#include "adn/case.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace adn;

namespace {

std::string case_path(const std::string& name) { return std::string(ADN_SOURCE_DIR) + "/cases/" + name; }

nlohmann::json read_json(const std::string& name) {
  std::ifstream in(case_path(name));
  return nlohmann::json::parse(in);
}

std::string error_of(const std::string& text) {
  try {
    parse_case(text, "t.json");
  } catch (const CaseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("shipped cases load") {
  const Case c3 = load_case(case_path("case3.json"));
  CHECK(c3.grid.num_branches() == 2);
  CHECK(c3.grid.num_units() == 1);
  CHECK(c3.config.steps == 96);
  CHECK(c3.profile.steps() == 96);
  CHECK(c3.config.window_steps() == 16);
  CHECK(c3.disturbance.dim() == 2);

  const Case c123 = load_case(case_path("case123.json"));
  CHECK(c123.grid.num_buses() == 123);
  CHECK(c123.grid.num_sources() == 6);
  CHECK(c123.grid.num_units() == 1);
  CHECK(c123.synthetic);
  for (int id : {11, 62, 66, 72, 75, 114}) {
    bool found = false;
    for (const auto& s : c123.grid.sources()) found = found || c123.grid.buses()[static_cast<std::size_t>(s.bus)].id == id;
    CHECK_MESSAGE(found, "source at bus ", id);
  }
  CHECK(c123.grid.buses()[static_cast<std::size_t>(c123.grid.units()[0].bus)].id == 62);
  // sigma_scale applies to the published diffusion matrix.
  CHECK(c123.disturbance.sigma(2, 1) == doctest::Approx(2.25 * 0.02));

  const Case c33 = load_case(case_path("case33.json"));
  CHECK(c33.grid.num_buses() == 33);
  // 0.0922 ohm on a 12.66 kV / 10 MVA base.
  CHECK(c33.grid.branches()[0].r == doctest::Approx(0.0922 / (12.66 * 12.66 / 10.0)));
  CHECK(c33.profile.p_load.row(0).sum() == doctest::Approx(3.715 / 10.0 * c33.profile.p_load(0, 1) / 0.01).epsilon(1e-9));

  // Peak and off-peak prices.
  CHECK(c3.config.price[0] == 0.5);
  CHECK(c3.config.price[40] == 1.0);
  CHECK(c3.config.price[80] == 0.5);
}

TEST_CASE("predicted operating point is within voltage limits") {
  for (const char* name : {"case3.json", "case33.json", "case123.json"}) {
    const Case c = load_case(case_path(name));
    const auto& g = c.grid;
    double lo = 2.0, hi = 0.0;
    bool inside = true;
    for (int k = 0; k < c.config.steps; ++k) {
      const auto inj = grid::bus_injections(g, c.profile.p_pred.row(k).transpose(), Eigen::VectorXd::Zero(g.num_sources()),
                                            Eigen::VectorXd::Zero(g.num_units()), c.profile.p_load.row(k).transpose(),
                                            c.profile.q_load.row(k).transpose());
      const auto s = grid::power_flow_solve(g, inj, c.config.root_voltage);
      lo = std::min(lo, s.v.minCoeff());
      hi = std::max(hi, s.v.maxCoeff());
      for (int i = 0; i < g.num_buses(); ++i) {
        const auto& b = g.buses()[static_cast<std::size_t>(i)];
        inside = inside && s.v[i] >= b.v_min && s.v[i] <= b.v_max;
      }
    }
    MESSAGE(std::string(name), " voltage range ", lo, " .. ", hi);
    CHECK(inside);
  }
}

TEST_CASE("case diagnostics") {
  auto j = read_json("case3.json");
  j["branches"].push_back({{"from", 2}, {"to", 1}, {"r", 0.01}, {"x", 0.01}});
  CHECK(error_of(j.dump()).find("tree") != std::string::npos);

  j = read_json("case3.json");
  j["branches"][1]["r"] = "abc";
  const std::string e1 = error_of(j.dump());
  CHECK(e1.find("branches[1].r") != std::string::npos);
  CHECK(e1.find("expected a number") != std::string::npos);

  j = read_json("case3.json");
  j["ders"]["sources"][0]["bus"] = 17;
  CHECK(error_of(j.dump()).find("unknown bus id 17") != std::string::npos);

  j = read_json("case3.json");
  j["config"]["gamma"] = 1.5;
  CHECK(error_of(j.dump()).find("gamma") != std::string::npos);

  j = read_json("case3.json");
  j["disturbance"]["family"] = "weibull";
  CHECK(error_of(j.dump()).find("case.disturbance.family") != std::string::npos);

  j = read_json("case3.json");
  j["profiles"]["p_pred"].erase(0);
  CHECK(error_of(j.dump()).find("case.profiles.p_pred") != std::string::npos);

  const std::string e2 = error_of("{\n  \"name\": \"x\",\n  \"buses\": [ 1, ]\n}");
  CHECK(e2.find("t.json:3:") != std::string::npos);

  CHECK_THROWS_AS(load_case(case_path("missing.json")), CaseError);
}

TEST_CASE("time of use price") {
  const auto p = time_of_use_price(24, 1.0, 0.0, 1.0, 0.5, 8.0, 20.0);
  for (int h = 0; h < 24; ++h) CHECK(p[static_cast<std::size_t>(h)] == (h >= 8 && h < 20 ? 1.0 : 0.5));
  CaseConfig cfg;
  cfg.steps = 96;
  cfg.dt_hours = 0.25;
  cfg.window_hours = 4;
  CHECK(cfg.window_steps() == 16);
  cfg.window_hours = 0;
  CHECK(cfg.window_steps() == 0);
}

TEST_CASE("documented example parses") {
  std::ifstream in(std::string(ADN_SOURCE_DIR) + "/docs/case_format.md");
  REQUIRE(in);
  std::stringstream doc;
  doc << in.rdbuf();
  const std::string text = doc.str();
  const auto begin = text.find("```json\n");
  REQUIRE(begin != std::string::npos);
  const auto end = text.find("```", begin + 8);
  const Case c = parse_case(text.substr(begin + 8, end - begin - 8), "case_format.md");
  CHECK(c.grid.num_buses() == 3);
  CHECK(c.grid.num_controls() == 3);
  CHECK(c.config.window_steps() == 2);
  CHECK(c.grid.branches()[1].r == doctest::Approx(0.03));
  CHECK(c.config.price[1] == 0.5);
  CHECK(c.config.price[2] == 1.0);
}
