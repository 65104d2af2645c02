#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "vstab/cpflow.hpp"
#include "vstab/grid.hpp"
#include "vstab/pmu.hpp"
#include "vstab/stability.hpp"
#include "vstab/vae.hpp"

namespace vstab {

/// Buses eligible for load scaling and VCP experiments: PQ buses with
/// nonzero base active demand.
std::vector<int> load_buses(const GridCase& grid);

/// Direction scaling both P and Q at the chosen buses by per-bus factors
/// (constant power factor). Used for training curves.
LoadDirection demand_direction(const GridCase& grid, const std::vector<int>& buses,
                               const std::vector<double>& factors);

/// Active-power-only direction with unit factors over one or more buses.
/// One bus reproduces the single-load-increase experiment, two the
/// double-load-increase one.
LoadDirection active_direction(const GridCase& grid, const std::vector<int>& buses);

struct DatasetOptions {
  int n_curves = 0;
  int min_nodes = 1;
  int max_nodes = 3;
  double factor_min = 0.5;
  double factor_max = 2.0;
  std::uint64_t seed = 0;
  NoiseModel noise;           // noise.seed is re-derived per curve
  ContinuationOptions trace;
  int max_failures = 10;
};

struct CurveRecord {
  int index = 0;
  std::vector<int> buses;       // scaled nodes, external ids
  std::vector<double> factors;  // applied to both P and Q
  int monitored_bus = 0;        // largest base active demand among `buses`
  double lambda_max = 0.0;
  bool ok = false;
  std::string error;
};

struct GeneratedDataset {
  std::vector<PVCurve> curves;                     // successful traces only
  std::vector<std::vector<PhasorVector>> windows;  // aligned with curves
  std::vector<CurveRecord> manifest;               // every attempt, in order
  std::uint64_t seed = 0;
};

/// Trace n random load-growth curves and convert each to a measurement
/// window. Failed traces are skipped and logged in the manifest; more than
/// max_failures of them aborts with NotConverged.
GeneratedDataset generate_dataset(const GridCase& grid, const PmuPlacement& placement,
                                  const DatasetOptions& opts);

std::vector<PhasorVector> flatten_windows(const std::vector<std::vector<PhasorVector>>& windows);

struct AlignmentData {
  Eigen::MatrixXd z;  // stacked features, rows = total samples
  Eigen::MatrixXd c;  // stacked (lambda, monitored-bus voltage) references
};

/// Run every dataset sample through the encoder and pair it with its curve's
/// (lambda, V) reference, producing the least-squares fitting data.
AlignmentData collect_alignment_data(const VaeModel& model, const GeneratedDataset& data,
                                     const TemperatureConfig& temp, RandomStream& rng);

struct VcpExperiment {
  std::vector<int> buses;
  double lambda_real = 0.0;
  double lambda_pre = 0.0;
  std::size_t nose_sample_index = 0;
  bool ok = false;
  std::string error;
};

struct VcpEvalOptions {
  NoiseModel noise;  // noise.seed is re-derived per experiment
  ContinuationOptions trace;
  TemperatureConfig temp;
  std::uint64_t seed = 0;
};

struct VcpEvalResult {
  std::vector<VcpExperiment> experiments;
  double mape_value = 0.0;  // over successful experiments; NaN if none
  int failures = 0;
};

/// Single-node experiment list: one direction per load bus.
std::vector<std::vector<int>> single_load_directions(const GridCase& grid);
/// Two-node experiment list: every unordered pair of load buses.
std::vector<std::vector<int>> paired_load_directions(const GridCase& grid);

/// The VCP-accuracy protocol: per direction, trace the real curve, replay it
/// through the model as noisy measurements, estimate the VCP from the aligned
/// feature series, and compare against the traced nose.
VcpEvalResult evaluate_vcp(const GridCase& grid, const VaeModel& model, const AlignmentMap& map,
                           const PmuPlacement& placement,
                           const std::vector<std::vector<int>>& directions,
                           const VcpEvalOptions& opts);

}  // namespace vstab
