#include "vstab/stability.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "vstab/errors.hpp"

namespace vstab {

Eigen::VectorXd reduce_variance(const Eigen::VectorXd& var, double phi) {
  if (!(phi >= 0.0 && phi <= 1.0)) throw ValidationError("temperature phi must be in [0, 1]");
  return var * phi;
}

Feature extract_feature(const VaeModel& model, const PhasorVector& x,
                        const TemperatureConfig& temp, RandomStream& rng) {
  const Eigen::VectorXd x_norm = normalize(model.norm_stats, x.values);
  const LatentDistribution dist = encode(model, x_norm);
  Feature f;
  f.mu = dist.mu;
  f.var_reduced = reduce_variance(dist.var, temp.phi);
  if (temp.phi == 0.0) {
    // Deterministic path: no draws consumed, identical across calls.
    f.z_hat = dist.mu;
  } else {
    Eigen::VectorXd eps(dist.mu.size());
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.gaussian();
    f.z_hat = f.mu + f.var_reduced.cwiseSqrt().cwiseProduct(eps);
  }
  return f;
}

AlignmentMap fit_alignment(const Eigen::MatrixXd& z, const Eigen::MatrixXd& c) {
  if (z.cols() != 2 || c.cols() != 2) throw DimensionMismatch("Z and C must have two columns");
  if (z.rows() != c.rows()) throw DimensionMismatch("Z and C must have the same row count");
  if (z.rows() < 2) throw ValidationError("alignment fit needs at least two stacked rows");

  const Eigen::Matrix2d gram = z.transpose() * z;
  const Eigen::JacobiSVD<Eigen::Matrix2d> svd(gram);
  const double s_max = svd.singularValues()[0];
  const double s_min = svd.singularValues()[1];
  if (!(s_max > 0.0) || s_min < 1e-12 * s_max) {
    throw RankDeficient(
        "latent features are collinear; train on more diverse curves before fitting");
  }
  AlignmentMap map;
  map.beta = gram.ldlt().solve(z.transpose() * c);
  return map;
}

std::pair<double, double> align(const AlignmentMap& map, const Feature& f) {
  if (f.z_hat.size() != 2) throw DimensionMismatch("alignment expects a 2-dimensional feature");
  const Eigen::Vector2d out = map.beta.transpose() * Eigen::Vector2d(f.z_hat[0], f.z_hat[1]);
  return {out[0], out[1]};
}

MonitorResult monitor_stream(const VaeModel& model, const AlignmentMap& map,
                             const TemperatureConfig& temp,
                             const std::vector<PhasorVector>& stream, RandomStream& rng,
                             int first_tick) {
  MonitorResult result;
  result.records.reserve(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const int t = first_tick + static_cast<int>(i);
    try {
      const Feature f = extract_feature(model, stream[i], temp, rng);
      const auto [lambda_hat, v_hat] = align(map, f);
      result.records.push_back({t, f.z_hat[0], f.z_hat[1], lambda_hat, v_hat});
    } catch (const Error& e) {
      result.errors.emplace_back(t, e.what());
    }
  }
  return result;
}

VcpEstimate estimate_vcp(const std::vector<std::pair<double, double>>& aligned_series) {
  if (aligned_series.empty()) throw ValidationError("aligned series is empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < aligned_series.size(); ++i) {
    if (aligned_series[i].first > aligned_series[best].first) best = i;
  }
  if (best + 1 == aligned_series.size()) {
    throw InsufficientExcursion(
        "estimated loading factor still rising at the last sample; nose not bracketed");
  }
  VcpEstimate est;
  est.lambda_pre = aligned_series[best].first;
  est.nose_sample_index = best;
  est.aligned_curve = aligned_series;
  return est;
}

double mape(const std::vector<double>& predicted, const std::vector<double>& actual) {
  if (predicted.size() != actual.size() || predicted.empty()) {
    throw DimensionMismatch("mape needs equal-length non-empty series");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!(actual[i] > 0.0)) throw ZeroReference("reference loading factor must be positive");
    total += std::abs(predicted[i] - actual[i]) / actual[i];
  }
  return total / static_cast<double>(predicted.size());
}

}  // namespace vstab
