#include "vstab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "vstab/errors.hpp"

namespace vstab {

std::vector<int> load_buses(const GridCase& grid) {
  std::vector<int> out;
  for (const auto& bus : grid.buses) {
    if (bus.kind == BusKind::PQ && bus.p_demand > 0.0) out.push_back(bus.id);
  }
  return out;
}

LoadDirection demand_direction(const GridCase& grid, const std::vector<int>& buses,
                               const std::vector<double>& factors) {
  if (buses.size() != factors.size()) {
    throw DimensionMismatch("one factor per scaled bus required");
  }
  if (buses.empty()) throw ValidationError("direction needs at least one bus");
  LoadDirection dir = LoadDirection::zeros(grid);
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const int k = grid.bus_index(buses[i]);
    dir.k_p[k] = factors[i];
    dir.k_q[k] = factors[i];
  }
  return dir;
}

LoadDirection active_direction(const GridCase& grid, const std::vector<int>& buses) {
  if (buses.empty()) throw ValidationError("direction needs at least one bus");
  LoadDirection dir = LoadDirection::zeros(grid);
  for (int bus_id : buses) dir.k_p[grid.bus_index(bus_id)] = 1.0;
  return dir;
}

namespace {

int pick_monitored_bus(const GridCase& grid, const std::vector<int>& buses) {
  int best = buses.front();
  double best_demand = grid.buses[grid.bus_index(best)].p_demand;
  for (int bus_id : buses) {
    const double d = grid.buses[grid.bus_index(bus_id)].p_demand;
    if (d > best_demand || (d == best_demand && bus_id < best)) {
      best = bus_id;
      best_demand = d;
    }
  }
  return best;
}

std::vector<int> draw_distinct(RandomStream& rng, const std::vector<int>& pool, int count) {
  std::vector<int> chosen;
  while (static_cast<int>(chosen.size()) < count) {
    const int candidate = pool[rng.below(pool.size())];
    if (std::find(chosen.begin(), chosen.end(), candidate) == chosen.end()) {
      chosen.push_back(candidate);
    }
  }
  return chosen;
}

}  // namespace

GeneratedDataset generate_dataset(const GridCase& grid, const PmuPlacement& placement,
                                  const DatasetOptions& opts) {
  if (opts.n_curves <= 0) throw EmptyRequest("curve count must be positive");
  if (opts.min_nodes < 1 || opts.max_nodes < opts.min_nodes) {
    throw ValidationError("node count range must satisfy 1 <= min <= max");
  }
  if (!(opts.factor_min > 0.0) || !(opts.factor_max > opts.factor_min)) {
    throw ValidationError("scaling factor range must satisfy 0 < min < max");
  }
  placement.check_against(grid);

  const std::vector<int> pool = load_buses(grid);
  if (pool.empty()) throw ValidationError("case has no PQ bus with active demand to scale");

  GeneratedDataset out;
  out.seed = opts.seed;
  RandomStream root(opts.seed);
  RandomStream noise_root(opts.noise.seed);

  int failures = 0;
  for (int i = 0; i < opts.n_curves; ++i) {
    RandomStream rng = root.fork(static_cast<std::uint64_t>(i));
    const int span = opts.max_nodes - opts.min_nodes + 1;
    int count = opts.min_nodes + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));
    count = std::min<int>(count, static_cast<int>(pool.size()));

    CurveRecord rec;
    rec.index = i;
    rec.buses = draw_distinct(rng, pool, count);
    rec.factors.reserve(rec.buses.size());
    for (std::size_t j = 0; j < rec.buses.size(); ++j) {
      rec.factors.push_back(opts.factor_min +
                            rng.uniform() * (opts.factor_max - opts.factor_min));
    }
    rec.monitored_bus = pick_monitored_bus(grid, rec.buses);

    try {
      PVCurve curve = trace_pv_curve(grid, demand_direction(grid, rec.buses, rec.factors),
                                     opts.trace);
      rec.lambda_max = curve.points[curve.nose_index].lambda;
      rec.ok = true;

      NoiseModel noise = opts.noise;
      noise.seed = noise_root.fork(static_cast<std::uint64_t>(i)).seed();
      out.windows.push_back(curve_to_windows(curve, placement, noise));
      out.curves.push_back(std::move(curve));
    } catch (const Error& e) {
      rec.error = e.what();
      if (++failures > opts.max_failures) {
        throw NotConverged("dataset generation exceeded the failure cap (" +
                           std::to_string(opts.max_failures) + "); last error: " + rec.error);
      }
    }
    out.manifest.push_back(std::move(rec));
  }
  return out;
}

std::vector<PhasorVector> flatten_windows(const std::vector<std::vector<PhasorVector>>& windows) {
  std::vector<PhasorVector> flat;
  for (const auto& window : windows) flat.insert(flat.end(), window.begin(), window.end());
  return flat;
}

AlignmentData collect_alignment_data(const VaeModel& model, const GeneratedDataset& data,
                                     const TemperatureConfig& temp, RandomStream& rng) {
  std::size_t total = 0;
  for (const auto& window : data.windows) total += window.size();
  if (total == 0) throw EmptyRequest("no samples to fit the alignment on");

  AlignmentData out;
  out.z.resize(static_cast<Eigen::Index>(total), 2);
  out.c.resize(static_cast<Eigen::Index>(total), 2);

  Eigen::Index row = 0;
  std::size_t curve_index = 0;
  for (std::size_t rec_index = 0; rec_index < data.manifest.size(); ++rec_index) {
    const CurveRecord& rec = data.manifest[rec_index];
    if (!rec.ok) continue;
    const PVCurve& curve = data.curves[curve_index];
    const auto& window = data.windows[curve_index];
    ++curve_index;

    const auto it = std::find(curve.bus_ids.begin(), curve.bus_ids.end(), rec.monitored_bus);
    if (it == curve.bus_ids.end()) throw UnknownBus(rec.monitored_bus);
    const Eigen::Index v_index = std::distance(curve.bus_ids.begin(), it);

    for (std::size_t j = 0; j < window.size(); ++j) {
      const Feature f = extract_feature(model, window[j], temp, rng);
      out.z(row, 0) = f.z_hat[0];
      out.z(row, 1) = f.z_hat[1];
      out.c(row, 0) = curve.points[j].lambda;
      out.c(row, 1) = curve.points[j].solution.v_mag[v_index];
      ++row;
    }
  }
  return out;
}

std::vector<std::vector<int>> single_load_directions(const GridCase& grid) {
  std::vector<std::vector<int>> out;
  for (int bus_id : load_buses(grid)) out.push_back({bus_id});
  return out;
}

std::vector<std::vector<int>> paired_load_directions(const GridCase& grid) {
  const std::vector<int> pool = load_buses(grid);
  std::vector<std::vector<int>> out;
  for (std::size_t a = 0; a < pool.size(); ++a) {
    for (std::size_t b = a + 1; b < pool.size(); ++b) out.push_back({pool[a], pool[b]});
  }
  return out;
}

VcpEvalResult evaluate_vcp(const GridCase& grid, const VaeModel& model, const AlignmentMap& map,
                           const PmuPlacement& placement,
                           const std::vector<std::vector<int>>& directions,
                           const VcpEvalOptions& opts) {
  if (directions.empty()) throw EmptyRequest("no experiment directions");
  placement.check_against(grid);

  VcpEvalResult out;
  RandomStream root(opts.seed);
  RandomStream noise_root(opts.noise.seed);

  for (std::size_t i = 0; i < directions.size(); ++i) {
    VcpExperiment exp;
    exp.buses = directions[i];
    try {
      PVCurve curve = trace_pv_curve(grid, active_direction(grid, exp.buses), opts.trace);
      exp.lambda_real = curve.points[curve.nose_index].lambda;

      NoiseModel noise = opts.noise;
      noise.seed = noise_root.fork(static_cast<std::uint64_t>(i)).seed();
      const std::vector<PhasorVector> stream = curve_to_windows(curve, placement, noise);

      RandomStream rng = root.fork(static_cast<std::uint64_t>(i));
      std::vector<std::pair<double, double>> aligned;
      aligned.reserve(stream.size());
      for (const PhasorVector& x : stream) {
        aligned.push_back(align(map, extract_feature(model, x, opts.temp, rng)));
      }
      const VcpEstimate est = estimate_vcp(aligned);
      exp.lambda_pre = est.lambda_pre;
      exp.nose_sample_index = est.nose_sample_index;
      exp.ok = true;
    } catch (const Error& e) {
      exp.error = e.what();
      ++out.failures;
    }
    out.experiments.push_back(std::move(exp));
  }

  std::vector<double> predicted;
  std::vector<double> actual;
  for (const auto& exp : out.experiments) {
    if (!exp.ok) continue;
    predicted.push_back(exp.lambda_pre);
    actual.push_back(exp.lambda_real);
  }
  out.mape_value = predicted.empty() ? std::numeric_limits<double>::quiet_NaN()
                                     : mape(predicted, actual);
  return out;
}

}  // namespace vstab
