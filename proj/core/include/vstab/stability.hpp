#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "vstab/pmu.hpp"
#include "vstab/random.hpp"
#include "vstab/vae.hpp"

namespace vstab {

struct TemperatureConfig {
  double phi = 0.05;  // in [0, 1]; 0 collapses samples onto the latent mean
};

struct Feature {
  Eigen::VectorXd z_hat;
  Eigen::VectorXd mu;
  Eigen::VectorXd var_reduced;
};

struct AlignmentMap {
  Eigen::Matrix2d beta;
};

Eigen::VectorXd reduce_variance(const Eigen::VectorXd& var, double phi);

Feature extract_feature(const VaeModel& model, const PhasorVector& x,
                        const TemperatureConfig& temp, RandomStream& rng);

/// Least-squares fit of C ~ Z beta over stacked rows; Z and C are N x 2.
AlignmentMap fit_alignment(const Eigen::MatrixXd& z, const Eigen::MatrixXd& c);

/// (lambda_hat, v_hat) = beta^T z_hat.
std::pair<double, double> align(const AlignmentMap& map, const Feature& f);

struct MonitorRecord {
  int t = 0;
  double z1 = 0.0;
  double z2 = 0.0;
  double lambda_hat = 0.0;
  double v_hat = 0.0;
};

struct MonitorResult {
  std::vector<MonitorRecord> records;
  std::vector<std::pair<int, std::string>> errors;  // (tick, message), stream not halted
};

MonitorResult monitor_stream(const VaeModel& model, const AlignmentMap& map,
                             const TemperatureConfig& temp,
                             const std::vector<PhasorVector>& stream, RandomStream& rng,
                             int first_tick = 0);

struct VcpEstimate {
  double lambda_pre = 0.0;
  std::size_t nose_sample_index = 0;
  std::vector<std::pair<double, double>> aligned_curve;
};

VcpEstimate estimate_vcp(const std::vector<std::pair<double, double>>& aligned_series);

double mape(const std::vector<double>& predicted, const std::vector<double>& actual);

}  // namespace vstab
