#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "vstab/errors.hpp"
#include "vstab/stability.hpp"
#include "vstab/vae.hpp"

using namespace vstab;

namespace {

VaeModel fixture_model(int input_dim, std::uint64_t seed) {
  VaeArchitecture arch;
  arch.input_dim = input_dim;
  arch.encoder_hidden = {8};
  arch.latent_dim = 2;
  arch.decoder_hidden = {8};
  RandomStream rng(seed);
  VaeModel model = make_vae(arch, ReconLikelihood::gaussian, InitScheme::scaled, rng);
  model.norm_stats.offset = Eigen::VectorXd::Zero(input_dim);
  model.norm_stats.scale = Eigen::VectorXd::Ones(input_dim);
  return model;
}

PhasorVector vec(std::initializer_list<double> vals) {
  PhasorVector v;
  v.values.resize(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (double x : vals) v.values[i++] = x;
  return v;
}

}  // namespace

TEST_SUITE("stability") {

TEST_CASE("variance reduction scales by the temperature") {
  Eigen::VectorXd var(2);
  var << 0.04, 0.01;

  const Eigen::VectorXd cooled = reduce_variance(var, 0.05);
  CHECK(cooled[0] == doctest::Approx(0.002));
  CHECK(cooled[1] == doctest::Approx(0.0005));

  const Eigen::VectorXd frozen = reduce_variance(var, 0.0);
  CHECK(frozen.cwiseAbs().maxCoeff() == 0.0);

  const Eigen::VectorXd full = reduce_variance(var, 1.0);
  CHECK((full - var).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero temperature returns the latent mean without touching the stream") {
  const VaeModel model = fixture_model(4, 3);
  const PhasorVector x = vec({0.2, 0.5, 0.7, 0.4});
  TemperatureConfig temp;
  temp.phi = 0.0;

  RandomStream rng(42);
  const Feature f = extract_feature(model, x, temp, rng);
  const LatentDistribution dist = encode(model, normalize(model.norm_stats, x.values));
  CHECK((f.z_hat - dist.mu).cwiseAbs().maxCoeff() == 0.0);
  CHECK((f.mu - dist.mu).cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.var_reduced.cwiseAbs().maxCoeff() == 0.0);

  // the stream was not consumed: next draw equals a fresh stream's first draw
  RandomStream fresh(42);
  CHECK(rng.gaussian() == fresh.gaussian());

  RandomStream rng2(7);
  const Feature again = extract_feature(model, x, temp, rng2);
  CHECK((f.z_hat - again.z_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("positive temperature gives reproducible stochastic features") {
  const VaeModel model = fixture_model(4, 3);
  const PhasorVector x = vec({0.2, 0.5, 0.7, 0.4});
  TemperatureConfig temp;
  temp.phi = 0.05;

  RandomStream a(91), b(91), c(92);
  const Feature fa = extract_feature(model, x, temp, a);
  const Feature fb = extract_feature(model, x, temp, b);
  const Feature fc = extract_feature(model, x, temp, c);
  CHECK((fa.z_hat - fb.z_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fa.z_hat - fc.z_hat).cwiseAbs().maxCoeff() > 0.0);
  CHECK((fa.z_hat - fa.mu).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("feature scatter matches the reduced variance") {
  const VaeModel model = fixture_model(4, 3);
  const PhasorVector x = vec({0.2, 0.5, 0.7, 0.4});
  TemperatureConfig temp;
  temp.phi = 0.05;

  const LatentDistribution dist = encode(model, normalize(model.norm_stats, x.values));
  RandomStream rng(55);
  const int n = 10000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Feature f = extract_feature(model, x, temp, rng);
    sum += f.z_hat;
    sq += f.z_hat.cwiseProduct(f.z_hat);
  }
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd sample_var = sq / n - mean.cwiseProduct(mean);
  const Eigen::VectorXd expected = reduce_variance(dist.var, temp.phi);
  for (int k = 0; k < 2; ++k) {
    CHECK(sample_var[k] == doctest::Approx(expected[k]).epsilon(0.10));
  }
}

TEST_CASE("identical inputs already aligned fit the identity map") {
  Eigen::MatrixXd z(6, 2);
  z << 0.1, 1.0,
       0.4, 0.8,
       0.9, 0.6,
       1.3, 0.5,
       1.8, 0.3,
       2.2, 0.2;
  const AlignmentMap map = fit_alignment(z, z);
  CHECK((map.beta - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("a planted linear map is recovered exactly") {
  Eigen::Matrix2d planted;
  planted << 1.7, -0.3,
             0.4, 2.2;
  RandomStream rng(13);
  Eigen::MatrixXd z(40, 2);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    z(i, 0) = rng.gaussian();
    z(i, 1) = rng.gaussian();
  }
  const Eigen::MatrixXd c = z * planted;
  const AlignmentMap map = fit_alignment(z, c);
  CHECK((map.beta - planted).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((z * map.beta - c).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("overdetermined fits satisfy the normal equations") {
  RandomStream rng(29);
  Eigen::MatrixXd z(120, 2);
  Eigen::MatrixXd c(120, 2);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    z(i, 0) = rng.gaussian();
    z(i, 1) = rng.gaussian();
    c(i, 0) = 0.8 * z(i, 0) - 0.1 * z(i, 1) + 0.01 * rng.gaussian();
    c(i, 1) = 0.3 * z(i, 0) + 1.4 * z(i, 1) + 0.01 * rng.gaussian();
  }
  const AlignmentMap map = fit_alignment(z, c);
  const Eigen::MatrixXd residual = z.transpose() * (z * map.beta - c);
  CHECK(residual.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("no nearby map beats the fitted one") {
  RandomStream rng(37);
  Eigen::MatrixXd z(60, 2);
  Eigen::MatrixXd c(60, 2);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    z(i, 0) = rng.gaussian();
    z(i, 1) = rng.gaussian();
    c(i, 0) = 1.1 * z(i, 0) + 0.2 * z(i, 1) + 0.05 * rng.gaussian();
    c(i, 1) = -0.4 * z(i, 0) + 0.9 * z(i, 1) + 0.05 * rng.gaussian();
  }
  const AlignmentMap map = fit_alignment(z, c);
  const double best = (z * map.beta - c).squaredNorm();
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Matrix2d perturbed = map.beta;
    for (int r = 0; r < 2; ++r) {
      for (int col = 0; col < 2; ++col) perturbed(r, col) += 1e-3 * rng.gaussian();
    }
    CHECK((z * perturbed - c).squaredNorm() >= best - 1e-12);
  }
}

TEST_CASE("collinear latent features are rejected with advice") {
  Eigen::MatrixXd z(30, 2);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    z(i, 0) = 0.1 * static_cast<double>(i);
    z(i, 1) = 2.0 * z(i, 0);
  }
  const Eigen::MatrixXd c = z;
  CHECK_THROWS_WITH_AS(fit_alignment(z, c),
                       "latent features are collinear; train on more diverse curves before "
                       "fitting",
                       RankDeficient);
}

TEST_CASE("alignment maps apply as a transposed product") {
  Feature f;
  f.z_hat = Eigen::VectorXd(2);
  f.z_hat << 0.6, -1.2;
  f.mu = f.z_hat;
  f.var_reduced = Eigen::VectorXd::Zero(2);

  AlignmentMap identity;
  identity.beta = Eigen::Matrix2d::Identity();
  const auto [l1, v1] = align(identity, f);
  CHECK(l1 == doctest::Approx(0.6));
  CHECK(v1 == doctest::Approx(-1.2));

  AlignmentMap zero;
  zero.beta = Eigen::Matrix2d::Zero();
  const auto [l0, v0] = align(zero, f);
  CHECK(l0 == 0.0);
  CHECK(v0 == 0.0);

  AlignmentMap general;
  general.beta << 2.0, 0.5,
                  -1.0, 3.0;
  const auto [lg, vg] = align(general, f);
  CHECK(lg == doctest::Approx(2.0 * 0.6 - 1.0 * -1.2));
  CHECK(vg == doctest::Approx(0.5 * 0.6 + 3.0 * -1.2));
}

TEST_CASE("fitting then aligning reproduces the reference pairs") {
  Eigen::Matrix2d planted;
  planted << 0.9, 0.1,
             -0.2, 1.3;
  RandomStream rng(61);
  Eigen::MatrixXd z(25, 2);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    z(i, 0) = rng.gaussian();
    z(i, 1) = rng.gaussian();
  }
  const Eigen::MatrixXd c = z * planted;
  const AlignmentMap map = fit_alignment(z, c);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Feature f;
    f.z_hat = z.row(i).transpose();
    f.mu = f.z_hat;
    f.var_reduced = Eigen::VectorXd::Zero(2);
    const auto [lambda_hat, v_hat] = align(map, f);
    CHECK(lambda_hat == doctest::Approx(c(i, 0)).epsilon(1e-9));
    CHECK(v_hat == doctest::Approx(c(i, 1)).epsilon(1e-9));
  }
}

TEST_CASE("monitoring a constant stream emits constant records") {
  const VaeModel model = fixture_model(4, 3);
  AlignmentMap map;
  map.beta << 1.0, 0.2,
              0.3, 1.0;
  TemperatureConfig temp;
  temp.phi = 0.0;

  std::vector<PhasorVector> stream(5, vec({0.3, 0.6, 0.2, 0.8}));
  RandomStream rng(1);
  const MonitorResult res = monitor_stream(model, map, temp, stream, rng);
  REQUIRE(res.records.size() == 5);
  CHECK(res.errors.empty());
  for (const auto& rec : res.records) {
    CHECK(rec.lambda_hat == res.records[0].lambda_hat);
    CHECK(rec.v_hat == res.records[0].v_hat);
    CHECK(rec.z1 == res.records[0].z1);
  }
  CHECK(res.records[0].t == 0);
  CHECK(res.records[4].t == 4);

  RandomStream rng2(1);
  const MonitorResult offset = monitor_stream(model, map, temp, stream, rng2, 100);
  CHECK(offset.records[0].t == 100);
  CHECK(offset.records[4].t == 104);
}

TEST_CASE("each tick is processed independently of its neighbors") {
  const VaeModel model = fixture_model(4, 3);
  AlignmentMap map;
  map.beta = Eigen::Matrix2d::Identity();
  TemperatureConfig temp;
  temp.phi = 0.0;

  std::vector<PhasorVector> stream = {
      vec({0.1, 0.2, 0.3, 0.4}),
      vec({0.5, 0.6, 0.7, 0.8}),
      vec({0.9, 0.8, 0.7, 0.6}),
      vec({0.2, 0.4, 0.6, 0.8}),
  };
  RandomStream rng(2);
  const MonitorResult base = monitor_stream(model, map, temp, stream, rng);

  std::swap(stream[1], stream[2]);
  RandomStream rng2(2);
  const MonitorResult swapped = monitor_stream(model, map, temp, stream, rng2);

  REQUIRE(base.records.size() == 4);
  REQUIRE(swapped.records.size() == 4);
  CHECK(swapped.records[1].lambda_hat == base.records[2].lambda_hat);
  CHECK(swapped.records[2].lambda_hat == base.records[1].lambda_hat);
  CHECK(swapped.records[0].lambda_hat == base.records[0].lambda_hat);
  CHECK(swapped.records[3].lambda_hat == base.records[3].lambda_hat);
}

TEST_CASE("a malformed tick is reported and skipped, not fatal") {
  const VaeModel model = fixture_model(4, 3);
  AlignmentMap map;
  map.beta = Eigen::Matrix2d::Identity();
  TemperatureConfig temp;
  temp.phi = 0.0;

  std::vector<PhasorVector> stream = {
      vec({0.1, 0.2, 0.3, 0.4}),
      vec({0.5, 0.6, 0.7}),  // wrong width
      vec({0.9, 0.8, 0.7, 0.6}),
  };
  RandomStream rng(3);
  const MonitorResult res = monitor_stream(model, map, temp, stream, rng, 10);
  REQUIRE(res.records.size() == 2);
  CHECK(res.records[0].t == 10);
  CHECK(res.records[1].t == 12);
  REQUIRE(res.errors.size() == 1);
  CHECK(res.errors[0].first == 11);
  CHECK(!res.errors[0].second.empty());
}

TEST_CASE("collapse estimation picks the pre-nose maximum") {
  const std::vector<std::pair<double, double>> series = {
      {0.0, 1.0}, {1.0, 0.9}, {0.8, 0.7}};
  const VcpEstimate est = estimate_vcp(series);
  CHECK(est.lambda_pre == doctest::Approx(1.0));
  CHECK(est.nose_sample_index == 1);
  CHECK(est.aligned_curve.size() == 3);

  // appending post-nose samples below the maximum changes nothing
  auto extended = series;
  extended.push_back({0.5, 0.6});
  extended.push_back({0.2, 0.5});
  const VcpEstimate est2 = estimate_vcp(extended);
  CHECK(est2.lambda_pre == doctest::Approx(1.0));
  CHECK(est2.nose_sample_index == 1);
}

TEST_CASE("ties in the aligned series resolve to the earliest sample") {
  const std::vector<std::pair<double, double>> series = {
      {0.0, 1.0}, {2.0, 0.9}, {1.5, 0.8}, {2.0, 0.7}, {1.0, 0.6}};
  const VcpEstimate est = estimate_vcp(series);
  CHECK(est.nose_sample_index == 1);
}

TEST_CASE("a series that never turns over is not a collapse estimate") {
  const std::vector<std::pair<double, double>> series = {
      {0.0, 1.0}, {0.5, 0.95}, {1.0, 0.9}, {1.5, 0.85}};
  CHECK_THROWS_AS(estimate_vcp(series), InsufficientExcursion);
  CHECK_THROWS_AS(estimate_vcp({}), ValidationError);
}

TEST_CASE("percentage error matches hand-computed values") {
  CHECK(mape({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == doctest::Approx(0.0));
  CHECK(mape({1.1, 0.9}, {1.0, 1.0}) == doctest::Approx(0.1));
  CHECK_THROWS_AS(mape({1.0}, {1.0, 2.0}), DimensionMismatch);
  CHECK_THROWS_AS(mape({1.0, 1.0}, {1.0, 0.0}), ZeroReference);
  CHECK_THROWS_AS(mape({}, {}), DimensionMismatch);
}

TEST_CASE("percentage error scales linearly with the error size") {
  const std::vector<double> actual = {2.0, 4.0, 5.0};
  std::vector<double> off_by_one = actual;
  std::vector<double> off_by_three = actual;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    off_by_one[i] += 0.1;
    off_by_three[i] += 0.3;
  }
  CHECK(mape(off_by_three, actual) == doctest::Approx(3.0 * mape(off_by_one, actual)));
}

TEST_CASE("the frozen pipeline is bitwise repeatable") {
  const VaeModel model = fixture_model(6, 17);
  AlignmentMap map;
  map.beta << 1.4, -0.2,
              0.3, 0.9;
  TemperatureConfig temp;
  temp.phi = 0.0;

  std::vector<PhasorVector> stream;
  RandomStream data_rng(71);
  for (int i = 0; i < 30; ++i) {
    PhasorVector v;
    v.values.resize(6);
    for (int j = 0; j < 6; ++j) v.values[j] = data_rng.uniform();
    stream.push_back(std::move(v));
  }

  RandomStream r1(5), r2(99);
  const MonitorResult a = monitor_stream(model, map, temp, stream, r1);
  const MonitorResult b = monitor_stream(model, map, temp, stream, r2);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].lambda_hat == b.records[i].lambda_hat);
    CHECK(a.records[i].v_hat == b.records[i].v_hat);
    CHECK(a.records[i].z1 == b.records[i].z1);
    CHECK(a.records[i].z2 == b.records[i].z2);
  }
}

}  // TEST_SUITE
