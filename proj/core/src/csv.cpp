#include "vstab/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vstab/errors.hpp"

namespace vstab {

std::string format_csv_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  return buf;
}

void write_curve_csv(const std::filesystem::path& path, const PVCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "lambda";
  for (int id : curve.bus_ids) out << ",bus_" << id << "_vm";
  for (int id : curve.bus_ids) out << ",bus_" << id << "_va";
  out << "\n";
  for (const auto& pt : curve.points) {
    out << format_csv_double(pt.lambda);
    for (Eigen::Index i = 0; i < pt.solution.v_mag.size(); ++i) {
      out << ',' << format_csv_double(pt.solution.v_mag[i]);
    }
    for (Eigen::Index i = 0; i < pt.solution.v_ang.size(); ++i) {
      out << ',' << format_csv_double(pt.solution.v_ang[i]);
    }
    out << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

CurveCsv read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + " is empty");

  CurveCsv result;
  {
    std::istringstream header(line);
    std::string name;
    std::vector<std::string> names;
    while (std::getline(header, name, ',')) names.push_back(name);
    if (names.empty() || names.front() != "lambda" || names.size() % 2 == 0) {
      throw ParseError(path.string() + " header must be lambda plus vm/va column pairs");
    }
    const std::size_t buses = (names.size() - 1) / 2;
    for (std::size_t i = 0; i < buses; ++i) {
      const std::string& col = names[1 + i];
      if (col.rfind("bus_", 0) != 0) {
        throw ParseError(path.string() + ": unexpected column '" + col + "'");
      }
      result.bus_ids.push_back(std::atoi(col.c_str() + 4));
    }
  }

  const auto n = static_cast<Eigen::Index>(result.bus_ids.size());
  std::vector<double> flat;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string field;
    Eigen::Index k = 0;
    while (std::getline(fields, field, ',')) {
      char* end = nullptr;
      const double value = std::strtod(field.c_str(), &end);
      if (end == field.c_str()) {
        throw ParseError(path.string() + ":" + std::to_string(row) + ": bad number '" + field + "'");
      }
      if (k == 0) {
        result.lambda.push_back(value);
      } else {
        flat.push_back(value);
      }
      ++k;
    }
    if (k != 1 + 2 * n) {
      throw ParseError(path.string() + ":" + std::to_string(row) + ": wrong field count");
    }
  }

  const auto rows = static_cast<Eigen::Index>(result.lambda.size());
  result.v_mag.resize(rows, n);
  result.v_ang.resize(rows, n);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      result.v_mag(r, c) = flat[static_cast<std::size_t>(r * 2 * n + c)];
      result.v_ang(r, c) = flat[static_cast<std::size_t>(r * 2 * n + n + c)];
    }
  }
  return result;
}

void write_measurement_csv(const std::filesystem::path& path, const MeasurementWindow& window,
                           const PmuPlacement& placement) {
  const auto n = placement.observed_buses.size();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "t";
  for (int id : placement.observed_buses) out << ',' << id << "_vm";
  for (int id : placement.observed_buses) out << ',' << id << "_va";
  out << "\n";
  for (std::size_t i = 0; i < window.columns.size(); ++i) {
    const auto& v = window.columns[i].values;
    if (v.size() != static_cast<Eigen::Index>(2 * n)) {
      throw DimensionMismatch("measurement vector does not match the placement");
    }
    out << window.first_tick + static_cast<int>(i);
    for (Eigen::Index k = 0; k < v.size(); ++k) out << ',' << format_csv_double(v[k]);
    out << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

MeasurementCsv read_measurement_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + " is empty");

  std::size_t columns = 1;
  for (char ch : line) {
    if (ch == ',') ++columns;
  }
  if (columns < 3 || (columns - 1) % 2 != 0) {
    throw ParseError(path.string() + " header must be t plus vm/va column pairs");
  }

  MeasurementCsv result;
  result.channel_count = static_cast<int>((columns - 1) / 2);
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string field;
    PhasorVector v;
    v.values.resize(static_cast<Eigen::Index>(columns - 1));
    Eigen::Index k = -1;
    while (std::getline(fields, field, ',')) {
      char* end = nullptr;
      const double value = std::strtod(field.c_str(), &end);
      if (end == field.c_str()) {
        throw ParseError(path.string() + ":" + std::to_string(row) + ": bad number '" + field + "'");
      }
      if (k < 0) {
        result.ticks.push_back(static_cast<int>(value));
      } else if (k < v.values.size()) {
        v.values[k] = value;
      } else {
        throw ParseError(path.string() + ":" + std::to_string(row) + ": too many fields");
      }
      ++k;
    }
    if (k != v.values.size()) {
      throw ParseError(path.string() + ":" + std::to_string(row) + ": too few fields");
    }
    result.columns.push_back(std::move(v));
  }
  return result;
}

void write_monitor_csv(const std::filesystem::path& path, const MonitorResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "t,z1,z2,lambda_hat,v_hat\n";
  for (const auto& r : result.records) {
    out << r.t << ',' << format_csv_double(r.z1) << ',' << format_csv_double(r.z2) << ','
        << format_csv_double(r.lambda_hat) << ',' << format_csv_double(r.v_hat) << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace vstab
