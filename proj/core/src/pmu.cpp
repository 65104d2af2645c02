#include "vstab/pmu.hpp"

#include <algorithm>
#include <unordered_set>

#include "vstab/errors.hpp"

namespace vstab {

void PmuPlacement::check_against(const GridCase& grid) const {
  if (observed_buses.empty()) throw ValidationError("placement has no observed buses");
  std::unordered_set<int> seen;
  for (int id : observed_buses) {
    if (!seen.insert(id).second) {
      throw ValidationError("placement lists bus " + std::to_string(id) + " twice");
    }
    if (!grid.has_bus(id)) throw UnknownBus(id);
  }
}

std::vector<int> PmuPlacement::resolve(const GridCase& grid) const {
  check_against(grid);
  std::vector<int> idx;
  idx.reserve(observed_buses.size());
  for (int id : observed_buses) idx.push_back(grid.bus_index(id));
  return idx;
}

std::vector<int> PmuPlacement::resolve(const std::vector<int>& bus_ids) const {
  if (observed_buses.empty()) throw ValidationError("placement has no observed buses");
  std::vector<int> idx;
  idx.reserve(observed_buses.size());
  for (int id : observed_buses) {
    auto it = std::find(bus_ids.begin(), bus_ids.end(), id);
    if (it == bus_ids.end()) throw UnobservedBus(id);
    idx.push_back(static_cast<int>(it - bus_ids.begin()));
  }
  return idx;
}

namespace {

PhasorVector sample_at_indices(const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang,
                               const std::vector<int>& idx, const NoiseModel& noise,
                               RandomStream& rng) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  PhasorVector out;
  out.values.resize(2 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values[k] = v_mag[idx[static_cast<std::size_t>(k)]];
    if (noise.sigma_mag > 0.0) out.values[k] += noise.sigma_mag * rng.gaussian();
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values[n + k] = v_ang[idx[static_cast<std::size_t>(k)]];
    if (noise.sigma_ang > 0.0) out.values[n + k] += noise.sigma_ang * rng.gaussian();
  }
  return out;
}

}  // namespace

PhasorVector sample_pmu(const PowerFlowSolution& sol, const GridCase& grid,
                        const PmuPlacement& placement, const NoiseModel& noise,
                        RandomStream& rng) {
  const auto idx = placement.resolve(grid);
  return sample_at_indices(sol.v_mag, sol.v_ang, idx, noise, rng);
}

std::vector<PhasorVector> curve_to_windows(const PVCurve& curve, const PmuPlacement& placement,
                                           const NoiseModel& noise) {
  if (curve.points.empty()) throw ValidationError("curve has no points");
  const auto idx = placement.resolve(curve.bus_ids);
  RandomStream rng(noise.seed);
  std::vector<PhasorVector> out;
  out.reserve(curve.points.size());
  for (const auto& pt : curve.points) {
    out.push_back(sample_at_indices(pt.solution.v_mag, pt.solution.v_ang, idx, noise, rng));
  }
  return out;
}

MeasurementWindow replay_schedule(const GridCase& grid, const LoadSchedule& schedule,
                                  const PmuPlacement& placement, const NoiseModel& noise,
                                  const SolverOptions& solver) {
  schedule.validate();
  const auto idx = placement.resolve(grid);
  for (const auto& seg : schedule.segments) {
    if (!grid.has_bus(seg.bus)) throw UnknownBus(seg.bus);
  }

  // Which (bus, field) channels the schedule drives; everything else stays at
  // the base-case demand.
  struct Channel {
    int bus_pos;
    int bus_id;
    DemandField field;
  };
  std::vector<Channel> channels;
  for (const auto& seg : schedule.segments) {
    const bool known = std::any_of(channels.begin(), channels.end(), [&](const Channel& c) {
      return c.bus_id == seg.bus && c.field == seg.field;
    });
    if (!known) channels.push_back({grid.bus_index(seg.bus), seg.bus, seg.field});
  }

  const AdmittanceMatrix y = build_ybus(grid);
  MeasurementWindow window;
  window.first_tick = schedule.first_tick();
  RandomStream rng(noise.seed);

  GridCase working = grid;
  StartPoint warm;
  bool have_warm = false;
  for (int t = schedule.first_tick(); t <= schedule.last_tick(); ++t) {
    for (const auto& c : channels) {
      double& target = c.field == DemandField::active
                           ? working.buses[static_cast<std::size_t>(c.bus_pos)].p_demand
                           : working.buses[static_cast<std::size_t>(c.bus_pos)].q_demand;
      target = schedule.level_at(grid, c.bus_id, c.field, t);
    }
    PowerFlowSolution sol;
    if (have_warm) {
      sol = solve_newton(working, y, solver, warm);
    } else {
      sol = solve_newton(working, y, solver);
    }
    if (!sol.converged) throw InfeasibleAt(t);
    warm.v_mag = sol.v_mag;
    warm.v_ang = sol.v_ang;
    have_warm = true;
    window.columns.push_back(sample_at_indices(sol.v_mag, sol.v_ang, idx, noise, rng));
  }
  return window;
}

}  // namespace vstab
