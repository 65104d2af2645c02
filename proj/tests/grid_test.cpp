#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <complex>
#include <string>

#include "support/cases.hpp"
#include "support/paths.hpp"
#include "vstab/errors.hpp"
#include "vstab/grid.hpp"

using namespace vstab;
using testutil::data_file;

namespace {

GridCase load_case14() {
  static const GridCase grid = load_case(data_file("data/cases/case14.m"));
  return grid;
}

GridCase load_case57() {
  static const GridCase grid = load_case(data_file("data/cases/case57.m"));
  return grid;
}

}  // namespace

TEST_SUITE("grid") {

TEST_CASE("ieee 14-bus file parses with the published shape") {
  const GridCase grid = load_case14();
  CHECK(grid.buses.size() == 14);
  CHECK(grid.gens.size() == 5);
  CHECK(grid.branches.size() == 20);
  CHECK(grid.base_mva == doctest::Approx(100.0));
  CHECK(grid.slack_index() == 0);

  int pq = 0, pv = 0;
  for (const auto& bus : grid.buses) {
    if (bus.kind == BusKind::PQ) ++pq;
    if (bus.kind == BusKind::PV) ++pv;
  }
  CHECK(pq == 9);
  CHECK(pv == 4);

  double total_p = 0.0;
  for (const auto& bus : grid.buses) total_p += bus.p_demand;
  CHECK(total_p == doctest::Approx(259.0));
}

TEST_CASE("ieee 57-bus file parses with the published shape") {
  const GridCase grid = load_case57();
  CHECK(grid.buses.size() == 57);
  CHECK(grid.gens.size() == 7);
  CHECK(grid.branches.size() == 80);

  double total_p = 0.0;
  for (const auto& bus : grid.buses) total_p += bus.p_demand;
  CHECK(total_p == doctest::Approx(1250.8));
  CHECK(grid.buses[grid.bus_index(9)].p_demand == doctest::Approx(121.0));
}

TEST_CASE("case with zero buses fails validation") {
  const std::string text =
      "function mpc = empty\n"
      "mpc.baseMVA = 100;\n"
      "mpc.bus = [\n];\n"
      "mpc.gen = [\n];\n"
      "mpc.branch = [\n];\n";
  CHECK_THROWS_AS(parse_case(text, CaseFormat::matpower_m), ValidationError);
}

TEST_CASE("malformed matrix literal is a parse error") {
  const std::string text =
      "function mpc = bad\n"
      "mpc.baseMVA = 100;\n"
      "mpc.bus = [\n 1 3 0 0 0 0 1 1.0 0;\n 2 1 0 0 0\n";
  CHECK_THROWS_AS(parse_case(text, CaseFormat::matpower_m), ParseError);
}

TEST_CASE("short rows are rejected with the column count") {
  const std::string text =
      "function mpc = bad\n"
      "mpc.baseMVA = 100;\n"
      "mpc.bus = [\n 1 3 0;\n];\n";
  CHECK_THROWS_AS(parse_case(text, CaseFormat::matpower_m), ParseError);
}

TEST_CASE("validation rejects structural defects") {
  GridCase grid = testutil::two_bus_case();

  SUBCASE("duplicate bus ids") {
    grid.buses[1].id = 1;
    CHECK_THROWS_AS(grid.validate(), ValidationError);
  }
  SUBCASE("no slack bus") {
    grid.buses[0].kind = BusKind::PV;
    CHECK_THROWS_AS(grid.validate(), ValidationError);
  }
  SUBCASE("two slack buses") {
    grid.buses[1].kind = BusKind::Slack;
    CHECK_THROWS_AS(grid.validate(), ValidationError);
  }
  SUBCASE("dangling branch endpoint") {
    grid.branches[0].to = 9;
    CHECK_THROWS_AS(grid.validate(), ValidationError);
  }
  SUBCASE("in-service branch with zero impedance") {
    grid.branches[0].r = 0.0;
    grid.branches[0].x = 0.0;
    CHECK_THROWS_AS(grid.validate(), ValidationError);
    grid.branches[0].status = false;  // out of service, impedance no longer constrained
    CHECK_NOTHROW(grid.validate());
  }
  SUBCASE("nonpositive base power") {
    grid.base_mva = 0.0;
    CHECK_THROWS_AS(grid.validate(), ValidationError);
  }
  SUBCASE("unknown bus lookups throw") {
    CHECK_THROWS_AS(grid.bus_index(42), UnknownBus);
    CHECK_FALSE(grid.has_bus(42));
  }
}

TEST_CASE("single lossless line has the textbook admittance matrix") {
  const GridCase grid = testutil::two_bus_case();
  const AdmittanceMatrix y = build_ybus(grid);
  REQUIRE(y.size() == 2);
  const std::complex<double> diag(0.0, -10.0);
  const std::complex<double> off(0.0, 10.0);
  CHECK(std::abs(y.y(0, 0) - diag) < 1e-12);
  CHECK(std::abs(y.y(1, 1) - diag) < 1e-12);
  CHECK(std::abs(y.y(0, 1) - off) < 1e-12);
  CHECK(std::abs(y.y(1, 0) - off) < 1e-12);
}

TEST_CASE("line charging adds half its susceptance to each end") {
  GridCase grid = testutil::two_bus_case();
  grid.branches[0].b_charging = 0.2;
  const AdmittanceMatrix y = build_ybus(grid);
  CHECK(y.y(0, 0).imag() == doctest::Approx(-10.0 + 0.1));
  CHECK(y.y(1, 1).imag() == doctest::Approx(-10.0 + 0.1));
  CHECK(y.y(0, 1).imag() == doctest::Approx(10.0));
}

TEST_CASE("14-bus admittance matrix matches the reference entrywise") {
  const GridCase grid = load_case14();
  const AdmittanceMatrix y = build_ybus(grid);
  const auto ref = nlohmann::json::parse(testutil::slurp(data_file("tests/data/case14_reference.json")));

  int nonzero = 0;
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    for (Eigen::Index c = 0; c < y.size(); ++c) {
      if (std::abs(y.y(r, c)) > 0.0) ++nonzero;
    }
  }
  CHECK(nonzero == static_cast<int>(ref["ybus"].size()));

  for (const auto& entry : ref["ybus"]) {
    const auto r = entry["row"].get<Eigen::Index>();
    const auto c = entry["col"].get<Eigen::Index>();
    const std::complex<double> expected(entry["g"].get<double>(), entry["b"].get<double>());
    CHECK(std::abs(y.y(r, c) - expected) < 1e-10);
  }
}

TEST_CASE("57-bus admittance matrix matches the reference entrywise") {
  const GridCase grid = load_case57();
  const AdmittanceMatrix y = build_ybus(grid);
  const auto ref = nlohmann::json::parse(testutil::slurp(data_file("tests/data/case57_reference.json")));
  for (const auto& entry : ref["ybus"]) {
    const auto r = entry["row"].get<Eigen::Index>();
    const auto c = entry["col"].get<Eigen::Index>();
    const std::complex<double> expected(entry["g"].get<double>(), entry["b"].get<double>());
    CHECK(std::abs(y.y(r, c) - expected) < 1e-10);
  }
}

TEST_CASE("admittance matrix is symmetric without taps or shifts") {
  GridCase grid = load_case14();
  for (auto& branch : grid.branches) {
    branch.tap_ratio = 0.0;
    branch.phase_shift = 0.0;
  }
  const AdmittanceMatrix y = build_ybus(grid);
  CHECK((y.y - y.y.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("off-nominal taps scale the from side of the branch") {
  GridCase grid = load_case14();
  auto tapped = std::find_if(grid.branches.begin(), grid.branches.end(), [](const Branch& b) {
    return b.from == 4 && b.to == 7;
  });
  REQUIRE(tapped != grid.branches.end());
  REQUIRE(tapped->tap_ratio == doctest::Approx(0.978));

  const AdmittanceMatrix with_tap = build_ybus(grid);
  tapped->tap_ratio = 0.0;  // nominal
  const AdmittanceMatrix without = build_ybus(grid);

  const int f = grid.bus_index(4);
  const int t = grid.bus_index(7);
  // a real tap keeps the off-diagonal pair equal but changes its value
  CHECK(std::abs(with_tap.y(f, t) - with_tap.y(t, f)) < 1e-12);
  CHECK(std::abs(with_tap.y(f, t) - without.y(f, t)) > 1e-6);
  // only the from-side diagonal is rescaled
  CHECK(std::abs(with_tap.y(f, f) - without.y(f, f)) > 1e-6);
  CHECK(std::abs(with_tap.y(t, t) - without.y(t, t)) < 1e-12);

  // a phase shift is what breaks the off-diagonal symmetry
  tapped->tap_ratio = 0.978;
  tapped->phase_shift = 0.1;
  const AdmittanceMatrix shifted = build_ybus(grid);
  CHECK(std::abs(shifted.y(f, t) - shifted.y(t, f)) > 1e-6);
}

TEST_CASE("disabling a branch changes exactly its four entries") {
  GridCase grid = load_case14();
  const AdmittanceMatrix before = build_ybus(grid);
  auto& branch = grid.branches[5];
  branch.status = false;
  const AdmittanceMatrix after = build_ybus(grid);

  const int f = grid.bus_index(branch.from);
  const int t = grid.bus_index(branch.to);
  int changed = 0;
  for (Eigen::Index r = 0; r < before.size(); ++r) {
    for (Eigen::Index c = 0; c < before.size(); ++c) {
      if (std::abs(before.y(r, c) - after.y(r, c)) > 1e-15) {
        ++changed;
        const bool touched = (r == f || r == t) && (c == f || c == t);
        CHECK(touched);
      }
    }
  }
  CHECK(changed == 4);
}

TEST_CASE("json serialization round-trips every field") {
  const GridCase grid = load_case14();
  const GridCase copy = parse_case_json(serialize_case_json(grid));

  REQUIRE(copy.buses.size() == grid.buses.size());
  REQUIRE(copy.gens.size() == grid.gens.size());
  REQUIRE(copy.branches.size() == grid.branches.size());
  CHECK(copy.base_mva == grid.base_mva);
  CHECK(copy.name == grid.name);
  for (std::size_t i = 0; i < grid.buses.size(); ++i) {
    CHECK(copy.buses[i].id == grid.buses[i].id);
    CHECK(copy.buses[i].kind == grid.buses[i].kind);
    CHECK(copy.buses[i].p_demand == grid.buses[i].p_demand);
    CHECK(copy.buses[i].q_demand == grid.buses[i].q_demand);
    CHECK(copy.buses[i].shunt_g == grid.buses[i].shunt_g);
    CHECK(copy.buses[i].shunt_b == grid.buses[i].shunt_b);
    CHECK(copy.buses[i].v_mag_init == grid.buses[i].v_mag_init);
    CHECK(copy.buses[i].v_ang_init == grid.buses[i].v_ang_init);
  }
  for (std::size_t i = 0; i < grid.gens.size(); ++i) {
    CHECK(copy.gens[i].bus == grid.gens[i].bus);
    CHECK(copy.gens[i].p_out == grid.gens[i].p_out);
    CHECK(copy.gens[i].q_out == grid.gens[i].q_out);
    CHECK(copy.gens[i].q_max == grid.gens[i].q_max);
    CHECK(copy.gens[i].q_min == grid.gens[i].q_min);
    CHECK(copy.gens[i].v_set == grid.gens[i].v_set);
    CHECK(copy.gens[i].status == grid.gens[i].status);
  }
  for (std::size_t i = 0; i < grid.branches.size(); ++i) {
    CHECK(copy.branches[i].from == grid.branches[i].from);
    CHECK(copy.branches[i].to == grid.branches[i].to);
    CHECK(copy.branches[i].r == grid.branches[i].r);
    CHECK(copy.branches[i].x == grid.branches[i].x);
    CHECK(copy.branches[i].b_charging == grid.branches[i].b_charging);
    CHECK(copy.branches[i].tap_ratio == grid.branches[i].tap_ratio);
    CHECK(copy.branches[i].phase_shift == grid.branches[i].phase_shift);
    CHECK(copy.branches[i].status == grid.branches[i].status);
  }
}

TEST_CASE("net injections are generation minus demand in per-unit") {
  const GridCase grid = load_case14();
  const Eigen::VectorXd p = net_active_injection(grid);
  const Eigen::VectorXd q = net_reactive_injection(grid);
  // bus 2 carries a 40 MW generator and a 21.7 MW load
  CHECK(p[grid.bus_index(2)] == doctest::Approx((40.0 - 21.7) / 100.0));
  // bus 4 is load only
  CHECK(p[grid.bus_index(4)] == doctest::Approx(-47.8 / 100.0));
  CHECK(q[grid.bus_index(4)] == doctest::Approx(3.9 / 100.0));
}

TEST_CASE("out-of-service generators do not inject") {
  GridCase grid = load_case14();
  const int pos = grid.bus_index(2);
  const double before = net_active_injection(grid)[pos];
  for (auto& gen : grid.gens) {
    if (gen.bus == 2) gen.status = false;
  }
  const double after = net_active_injection(grid)[pos];
  CHECK(before - after == doctest::Approx(40.0 / 100.0));
}

}  // TEST_SUITE
