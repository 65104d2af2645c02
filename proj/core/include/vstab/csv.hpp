#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vstab/cpflow.hpp"
#include "vstab/pmu.hpp"
#include "vstab/stability.hpp"

namespace vstab {

// Fixed "%.12g" rendering keeps repeated runs byte-identical.
std::string format_csv_double(double value);

void write_curve_csv(const std::filesystem::path& path, const PVCurve& curve);

struct CurveCsv {
  std::vector<double> lambda;
  std::vector<int> bus_ids;
  Eigen::MatrixXd v_mag;  // rows = samples, columns follow bus_ids
  Eigen::MatrixXd v_ang;
};

CurveCsv read_curve_csv(const std::filesystem::path& path);

void write_measurement_csv(const std::filesystem::path& path, const MeasurementWindow& window,
                           const PmuPlacement& placement);

struct MeasurementCsv {
  std::vector<PhasorVector> columns;
  std::vector<int> ticks;
  int channel_count = 0;  // observed buses (half the value columns)
};

MeasurementCsv read_measurement_csv(const std::filesystem::path& path);

void write_monitor_csv(const std::filesystem::path& path, const MonitorResult& result);

}  // namespace vstab
