#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "support/paths.hpp"
#include "vstab/checkpoint.hpp"
#include "vstab/csv.hpp"
#include "vstab/errors.hpp"
#include "vstab/grid.hpp"
#include "vstab/pipeline.hpp"
#include "vstab/pmu.hpp"

using namespace vstab;

namespace {

const GridCase& case14() {
  static const GridCase grid = load_case(testutil::data_file("data/cases/case14.m"));
  return grid;
}

PmuPlacement tutorial_placement() {
  PmuPlacement p;
  p.observed_buses = {2, 4, 6, 7, 9};
  return p;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("load buses are the demand-carrying PQ buses") {
  const std::vector<int> buses = load_buses(case14());
  const std::vector<int> expected = {4, 5, 9, 10, 11, 12, 13, 14};
  CHECK(buses == expected);
}

TEST_CASE("experiment lists enumerate singles and unordered pairs") {
  const auto singles = single_load_directions(case14());
  CHECK(singles.size() == 8);
  for (const auto& d : singles) CHECK(d.size() == 1);

  const auto pairs = paired_load_directions(case14());
  CHECK(pairs.size() == 28);
  for (const auto& d : pairs) {
    CHECK(d.size() == 2);
    CHECK(d[0] < d[1]);
  }
}

TEST_CASE("demand directions scale both powers, active directions only one") {
  const GridCase& grid = case14();
  const LoadDirection both = demand_direction(grid, {9, 14}, {1.5, 0.8});
  const auto idx9 = grid.bus_index(9);
  const auto idx14 = grid.bus_index(14);
  CHECK(both.k_p[idx9] == 1.5);
  CHECK(both.k_q[idx9] == 1.5);
  CHECK(both.k_p[idx14] == 0.8);
  CHECK(both.k_q[idx14] == 0.8);
  CHECK(both.k_p.sum() == doctest::Approx(2.3));

  const LoadDirection active = active_direction(grid, {9});
  CHECK(active.k_p[idx9] == 1.0);
  CHECK(active.k_q.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(demand_direction(grid, {9}, {1.0, 2.0}), DimensionMismatch);
  CHECK_THROWS_AS(active_direction(grid, {99}), UnknownBus);
}

TEST_CASE("dataset generation refuses an empty request") {
  DatasetOptions opts;
  opts.n_curves = 0;
  CHECK_THROWS_AS(generate_dataset(case14(), tutorial_placement(), opts), EmptyRequest);
}

TEST_CASE("dataset generation is reproducible and self-describing") {
  DatasetOptions opts;
  opts.n_curves = 4;
  opts.seed = 11;
  opts.trace.max_points = 120;

  const GeneratedDataset a = generate_dataset(case14(), tutorial_placement(), opts);
  const GeneratedDataset b = generate_dataset(case14(), tutorial_placement(), opts);

  REQUIRE(a.manifest.size() == 4);
  REQUIRE(b.manifest.size() == 4);
  CHECK(a.seed == 11);

  std::size_t ok_count = 0;
  for (std::size_t i = 0; i < a.manifest.size(); ++i) {
    const CurveRecord& ra = a.manifest[i];
    const CurveRecord& rb = b.manifest[i];
    CHECK(ra.buses == rb.buses);
    CHECK(ra.factors == rb.factors);
    CHECK(ra.monitored_bus == rb.monitored_bus);
    CHECK(ra.ok == rb.ok);
    if (ra.ok) {
      CHECK(ra.lambda_max == rb.lambda_max);
      ++ok_count;
    }

    CHECK(ra.buses.size() >= 1);
    CHECK(ra.buses.size() <= 3);
    const std::vector<int> pool = load_buses(case14());
    double best_demand = -1.0;
    int best_bus = 0;
    for (std::size_t k = 0; k < ra.buses.size(); ++k) {
      CHECK(std::find(pool.begin(), pool.end(), ra.buses[k]) != pool.end());
      CHECK(ra.factors[k] >= opts.factor_min);
      CHECK(ra.factors[k] < opts.factor_max);
      const double demand = case14().buses[case14().bus_index(ra.buses[k])].p_demand;
      if (demand > best_demand || (demand == best_demand && ra.buses[k] < best_bus)) {
        best_demand = demand;
        best_bus = ra.buses[k];
      }
    }
    CHECK(ra.monitored_bus == best_bus);
  }

  CHECK(a.curves.size() == ok_count);
  CHECK(a.windows.size() == ok_count);
  for (std::size_t i = 0; i < a.curves.size(); ++i) {
    CHECK(a.windows[i].size() == a.curves[i].points.size());
  }

  DatasetOptions other = opts;
  other.seed = 12;
  const GeneratedDataset c = generate_dataset(case14(), tutorial_placement(), other);
  bool differs = false;
  for (std::size_t i = 0; i < c.manifest.size() && !differs; ++i) {
    differs = c.manifest[i].buses != a.manifest[i].buses ||
              c.manifest[i].factors != a.manifest[i].factors;
  }
  CHECK(differs);
}

TEST_CASE("windows flatten into one training pool") {
  DatasetOptions opts;
  opts.n_curves = 3;
  opts.seed = 21;
  opts.trace.max_points = 80;
  const GeneratedDataset data = generate_dataset(case14(), tutorial_placement(), opts);

  const auto flat = flatten_windows(data.windows);
  std::size_t total = 0;
  for (const auto& w : data.windows) total += w.size();
  CHECK(flat.size() == total);
  if (!flat.empty()) CHECK(flat[0].values.size() == 10);
}

TEST_CASE("alignment data pairs every sample with its curve reference") {
  DatasetOptions opts;
  opts.n_curves = 3;
  opts.seed = 31;
  opts.trace.max_points = 60;
  const GeneratedDataset data = generate_dataset(case14(), tutorial_placement(), opts);
  REQUIRE(!data.curves.empty());

  VaeArchitecture arch;
  arch.input_dim = 10;
  arch.encoder_hidden = {12};
  arch.latent_dim = 2;
  arch.decoder_hidden = {12};
  RandomStream init(3);
  VaeModel model = make_vae(arch, ReconLikelihood::gaussian, InitScheme::scaled, init);
  model.norm_stats = fit_norm_stats(flatten_windows(data.windows));

  TemperatureConfig temp;
  temp.phi = 0.0;
  RandomStream rng(1);
  const AlignmentData ad = collect_alignment_data(model, data, temp, rng);

  std::size_t total = 0;
  for (const auto& w : data.windows) total += w.size();
  CHECK(ad.z.rows() == static_cast<Eigen::Index>(total));
  CHECK(ad.z.cols() == 2);
  CHECK(ad.c.rows() == ad.z.rows());
  CHECK(ad.c.cols() == 2);

  // the reference column tracks each curve's loading factor exactly
  Eigen::Index row = 0;
  for (const PVCurve& curve : data.curves) {
    for (std::size_t pi = 0; pi < curve.points.size(); ++pi, ++row) {
      CHECK(ad.c(row, 0) == doctest::Approx(curve.points[pi].lambda));
    }
  }
}

TEST_CASE("checkpoints survive a round trip without losing precision") {
  VaeArchitecture arch;
  arch.input_dim = 6;
  arch.encoder_hidden = {5};
  arch.latent_dim = 2;
  arch.decoder_hidden = {5};
  RandomStream rng(43);
  Checkpoint ckpt;
  ckpt.model = make_vae(arch, ReconLikelihood::gaussian, InitScheme::scaled, rng);
  ckpt.model.norm_stats.offset = Eigen::VectorXd::LinSpaced(6, -0.3, 0.9);
  ckpt.model.norm_stats.scale = Eigen::VectorXd::LinSpaced(6, 0.5, 2.5);
  AlignmentMap map;
  map.beta << 1.25, -0.5,
              0.75, 2.125;
  ckpt.alignment = map;
  ckpt.phi = 0.05;

  const auto path = testutil::scratch_dir("ckpt") / "model.json";
  save_checkpoint(path, ckpt);
  const Checkpoint back = load_checkpoint(path);

  CHECK(back.model.latent_dim == 2);
  CHECK(back.model.recon_likelihood == ReconLikelihood::gaussian);
  REQUIRE(back.model.encoder_layers.size() == 1);
  CHECK((back.model.encoder_layers[0].weights - ckpt.model.encoder_layers[0].weights)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((back.model.mean_head.weights - ckpt.model.mean_head.weights).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK((back.model.var_head.bias - ckpt.model.var_head.bias).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.model.decoder_layers.back().weights - ckpt.model.decoder_layers.back().weights)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((back.model.norm_stats.offset - ckpt.model.norm_stats.offset).cwiseAbs().maxCoeff() ==
        0.0);
  REQUIRE(back.alignment.has_value());
  CHECK((back.alignment->beta - map.beta).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(back.phi.has_value());
  CHECK(*back.phi == 0.05);

  // optional fields stay optional
  Checkpoint bare;
  bare.model = ckpt.model;
  const Checkpoint bare_back = parse_checkpoint(serialize_checkpoint(bare));
  CHECK(!bare_back.alignment.has_value());
  CHECK(!bare_back.phi.has_value());

  CHECK_THROWS_AS(parse_checkpoint("not json at all {"), ParseError);
  CHECK_THROWS_AS(parse_checkpoint("{\"kind\": \"something else\"}"), ParseError);
  CHECK_THROWS_AS(load_checkpoint(testutil::scratch_dir("ckpt") / "missing.json"), IoError);
}

TEST_CASE("floating-point rendering is stable and precise") {
  CHECK(format_csv_double(0.0) == "0");
  CHECK(format_csv_double(1.5) == "1.5");
  CHECK(format_csv_double(-0.25) == "-0.25");
  CHECK(format_csv_double(1.0 / 3.0) == "0.333333333333");
}

TEST_CASE("measurement files round-trip through the reader") {
  MeasurementWindow window;
  window.first_tick = 7;
  RandomStream rng(5);
  for (int i = 0; i < 4; ++i) {
    PhasorVector v;
    v.values.resize(6);
    for (int j = 0; j < 6; ++j) v.values[j] = rng.gaussian();
    window.columns.push_back(std::move(v));
  }
  PmuPlacement placement;
  placement.observed_buses = {2, 4, 9};

  const auto path = testutil::scratch_dir("csv") / "meas.csv";
  write_measurement_csv(path, window, placement);

  const MeasurementCsv back = read_measurement_csv(path);
  CHECK(back.channel_count == 3);
  REQUIRE(back.columns.size() == 4);
  REQUIRE(back.ticks.size() == 4);
  CHECK(back.ticks[0] == 7);
  CHECK(back.ticks[3] == 10);
  for (std::size_t i = 0; i < back.columns.size(); ++i) {
    CHECK((back.columns[i].values - window.columns[i].values).cwiseAbs().maxCoeff() < 1e-11);
  }

  const std::string text = testutil::slurp(path);
  CHECK(text.rfind("t,2_vm,4_vm,9_vm,2_va,4_va,9_va\n", 0) == 0);
}

TEST_CASE("curve files round-trip through the reader") {
  const GridCase& grid = case14();
  const AdmittanceMatrix y = build_ybus(grid);
  const PowerFlowSolution sol = solve_newton(grid, y);
  REQUIRE(sol.converged);

  PVCurve curve;
  curve.bus_ids.reserve(grid.buses.size());
  for (const auto& bus : grid.buses) curve.bus_ids.push_back(bus.id);
  for (int k = 0; k < 3; ++k) {
    CurvePoint pt;
    pt.lambda = 0.25 * k;
    pt.solution = sol;
    pt.solution.v_mag.array() -= 0.01 * k;
    curve.points.push_back(std::move(pt));
  }

  const auto path = testutil::scratch_dir("csv") / "curve.csv";
  write_curve_csv(path, curve);
  const CurveCsv back = read_curve_csv(path);

  REQUIRE(back.lambda.size() == 3);
  CHECK(back.lambda[1] == doctest::Approx(0.25));
  CHECK(back.bus_ids.size() == 14);
  CHECK(back.bus_ids[0] == 1);
  CHECK(back.v_mag.rows() == 3);
  CHECK(back.v_mag.cols() == 14);
  for (int k = 0; k < 3; ++k) {
    CHECK((back.v_mag.row(k).transpose() - curve.points[k].solution.v_mag).cwiseAbs().maxCoeff() <
          1e-11);
    CHECK((back.v_ang.row(k).transpose() - curve.points[k].solution.v_ang).cwiseAbs().maxCoeff() <
          1e-11);
  }

  const std::string text = testutil::slurp(path);
  CHECK(text.rfind("lambda,bus_1_vm", 0) == 0);
}

TEST_CASE("monitor output uses the documented header") {
  MonitorResult result;
  for (int i = 0; i < 3; ++i) {
    MonitorRecord rec;
    rec.t = i;
    rec.z1 = 0.1 * i;
    rec.z2 = -0.1 * i;
    rec.lambda_hat = 1.0 + i;
    rec.v_hat = 1.0 - 0.05 * i;
    result.records.push_back(rec);
  }
  const auto path = testutil::scratch_dir("csv") / "monitor.csv";
  write_monitor_csv(path, result);
  const std::string text = testutil::slurp(path);
  CHECK(text.rfind("t,z1,z2,lambda_hat,v_hat\n", 0) == 0);
  CHECK(text.find("\n2,0.2,-0.2,3,0.9\n") != std::string::npos);
}

TEST_CASE("curve reader rejects malformed files") {
  const auto dir = testutil::scratch_dir("csv_bad");
  {
    std::ofstream out(dir / "bad_header.csv");
    out << "lambda,bus_1_vm\n0.0\n";
  }
  CHECK_THROWS_AS(read_curve_csv(dir / "bad_header.csv"), ParseError);
  {
    std::ofstream out(dir / "bad_value.csv");
    out << "lambda,bus_1_vm,bus_1_va\n0.0,abc,0.0\n";
  }
  CHECK_THROWS_AS(read_curve_csv(dir / "bad_value.csv"), ParseError);
  CHECK_THROWS_AS(read_curve_csv(dir / "missing.csv"), IoError);
  CHECK_THROWS_AS(read_measurement_csv(dir / "missing.csv"), IoError);
}

}  // TEST_SUITE
