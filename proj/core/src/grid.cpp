#include "vstab/grid.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "vstab/errors.hpp"

namespace vstab {

int GridCase::bus_index(int bus_id) const {
  if (index_cache_.size() != buses.size()) {
    index_cache_.clear();
    for (std::size_t i = 0; i < buses.size(); ++i) {
      index_cache_.emplace(buses[i].id, static_cast<int>(i));
    }
  }
  auto it = index_cache_.find(bus_id);
  if (it == index_cache_.end()) throw UnknownBus(bus_id);
  return it->second;
}

bool GridCase::has_bus(int bus_id) const {
  for (const auto& b : buses) {
    if (b.id == bus_id) return true;
  }
  return false;
}

int GridCase::slack_index() const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].kind == BusKind::Slack) return static_cast<int>(i);
  }
  throw ValidationError("case has no slack bus");
}

void GridCase::validate() const {
  if (buses.empty()) throw ValidationError("case has no buses");
  if (!(base_mva > 0.0)) throw ValidationError("base_mva must be positive");

  int slack_count = 0;
  std::unordered_map<int, int> seen;
  for (const auto& b : buses) {
    if (seen.count(b.id)) {
      throw ValidationError("duplicate bus id " + std::to_string(b.id));
    }
    seen.emplace(b.id, 1);
    if (b.kind == BusKind::Slack) ++slack_count;
    if (!(b.v_mag_init > 0.0)) {
      throw ValidationError("bus " + std::to_string(b.id) + " has non-positive initial voltage");
    }
  }
  if (slack_count != 1) {
    throw ValidationError("case must have exactly one slack bus, found " +
                          std::to_string(slack_count));
  }
  for (const auto& g : gens) {
    if (!seen.count(g.bus)) {
      throw ValidationError("generator references missing bus " + std::to_string(g.bus));
    }
    if (g.q_min > g.q_max) {
      throw ValidationError("generator at bus " + std::to_string(g.bus) + " has q_min > q_max");
    }
    if (!(g.v_set > 0.0)) {
      throw ValidationError("generator at bus " + std::to_string(g.bus) + " has non-positive v_set");
    }
  }
  for (const auto& br : branches) {
    if (!seen.count(br.from) || !seen.count(br.to)) {
      throw ValidationError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                            " references a missing bus");
    }
    if (br.status && br.r == 0.0 && br.x == 0.0) {
      throw ValidationError("in-service branch " + std::to_string(br.from) + "-" +
                            std::to_string(br.to) + " has zero series impedance");
    }
  }
}

Eigen::VectorXd net_active_injection(const GridCase& grid) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.buses.size()));
  for (std::size_t i = 0; i < grid.buses.size(); ++i) p[static_cast<Eigen::Index>(i)] = -grid.buses[i].p_demand;
  for (const auto& g : grid.gens) {
    if (!g.status) continue;
    p[grid.bus_index(g.bus)] += g.p_out;
  }
  return p / grid.base_mva;
}

Eigen::VectorXd net_reactive_injection(const GridCase& grid) {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.buses.size()));
  for (std::size_t i = 0; i < grid.buses.size(); ++i) q[static_cast<Eigen::Index>(i)] = -grid.buses[i].q_demand;
  for (const auto& g : grid.gens) {
    if (!g.status) continue;
    q[grid.bus_index(g.bus)] += g.q_out;
  }
  return q / grid.base_mva;
}

const char* to_string(BusKind kind) {
  switch (kind) {
    case BusKind::PQ: return "PQ";
    case BusKind::PV: return "PV";
    case BusKind::Slack: return "Slack";
  }
  return "?";
}

GridCase parse_case(std::string_view text, CaseFormat format) {
  GridCase parse_case_matpower(std::string_view);  // matpower.cpp
  GridCase grid = format == CaseFormat::matpower_m ? parse_case_matpower(text)
                                                   : parse_case_json(text);
  grid.validate();
  return grid;
}

GridCase load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open case file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto ext = path.extension().string();
  CaseFormat fmt;
  if (ext == ".m") {
    fmt = CaseFormat::matpower_m;
  } else if (ext == ".json") {
    fmt = CaseFormat::json;
  } else {
    throw IoError("unrecognized case extension '" + ext + "' (expected .m or .json)");
  }
  GridCase grid = parse_case(ss.str(), fmt);
  if (grid.name.empty()) grid.name = path.stem().string();
  return grid;
}

}  // namespace vstab
