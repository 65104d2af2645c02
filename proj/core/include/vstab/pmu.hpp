#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "vstab/cpflow.hpp"
#include "vstab/grid.hpp"
#include "vstab/power_flow.hpp"
#include "vstab/random.hpp"

namespace vstab {

struct PmuPlacement {
  std::vector<int> observed_buses;

  void check_against(const GridCase& grid) const;
  std::vector<int> resolve(const GridCase& grid) const;
  std::vector<int> resolve(const std::vector<int>& bus_ids) const;
};

// Observed magnitudes followed by observed angles, placement order.
struct PhasorVector {
  Eigen::VectorXd values;
};

struct MeasurementWindow {
  std::vector<PhasorVector> columns;
  int first_tick = 0;
  double dt = 1.0 / 50.0;

  double t_start() const { return first_tick * dt; }
};

struct NoiseModel {
  double sigma_mag = 1e-3;  // pu
  double sigma_ang = 1e-3;  // rad
  std::uint64_t seed = 0;
};

PhasorVector sample_pmu(const PowerFlowSolution& sol, const GridCase& grid,
                        const PmuPlacement& placement, const NoiseModel& noise,
                        RandomStream& rng);

std::vector<PhasorVector> curve_to_windows(const PVCurve& curve, const PmuPlacement& placement,
                                           const NoiseModel& noise);

enum class SegmentKind { constant, step, ramp };
enum class DemandField { active, reactive };

struct ScheduleSegment {
  int t_from = 0;
  int t_to = 0;
  int bus = 0;
  DemandField field = DemandField::active;
  SegmentKind kind = SegmentKind::constant;
  double value = 0.0;  // level in MW / MVAr, or per-tick rate for ramps
};

struct LoadSchedule {
  std::vector<ScheduleSegment> segments;

  void validate() const;
  int first_tick() const;
  int last_tick() const;
  // Demand level for one bus/field at tick t; base-case demand outside the
  // scheduled range, ramps chained from the preceding segment's end level.
  double level_at(const GridCase& grid, int bus, DemandField field, int t) const;
};

LoadSchedule parse_schedule_json(const std::string& text);
std::string serialize_schedule_json(const LoadSchedule& schedule);

MeasurementWindow replay_schedule(const GridCase& grid, const LoadSchedule& schedule,
                                  const PmuPlacement& placement, const NoiseModel& noise,
                                  const SolverOptions& solver = {});

}  // namespace vstab
