#include <string>
#include <string_view>

#include <json.hpp>

#include "vstab/errors.hpp"
#include "vstab/grid.hpp"

namespace vstab {

namespace {

using nlohmann::json;

json bus_to_json(const Bus& b) {
  return json{{"id", b.id},
              {"kind", to_string(b.kind)},
              {"p_demand", b.p_demand},
              {"q_demand", b.q_demand},
              {"shunt_g", b.shunt_g},
              {"shunt_b", b.shunt_b},
              {"v_mag_init", b.v_mag_init},
              {"v_ang_init", b.v_ang_init}};
}

BusKind kind_from_string(const std::string& s) {
  if (s == "PQ") return BusKind::PQ;
  if (s == "PV") return BusKind::PV;
  if (s == "Slack") return BusKind::Slack;
  throw ParseError("unknown bus kind '" + s + "'");
}

}  // namespace

std::string serialize_case_json(const GridCase& grid) {
  json j;
  if (!grid.name.empty()) j["name"] = grid.name;
  j["base_mva"] = grid.base_mva;
  j["buses"] = json::array();
  for (const auto& b : grid.buses) j["buses"].push_back(bus_to_json(b));
  j["gens"] = json::array();
  for (const auto& g : grid.gens) {
    j["gens"].push_back(json{{"bus", g.bus},
                             {"p_out", g.p_out},
                             {"q_out", g.q_out},
                             {"q_max", g.q_max},
                             {"q_min", g.q_min},
                             {"v_set", g.v_set},
                             {"status", g.status}});
  }
  j["branches"] = json::array();
  for (const auto& br : grid.branches) {
    j["branches"].push_back(json{{"from", br.from},
                                 {"to", br.to},
                                 {"r", br.r},
                                 {"x", br.x},
                                 {"b_charging", br.b_charging},
                                 {"tap_ratio", br.tap_ratio},
                                 {"phase_shift", br.phase_shift},
                                 {"status", br.status}});
  }
  return j.dump(2);
}

GridCase parse_case_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid case JSON: ") + e.what());
  }
  try {
    GridCase grid;
    grid.name = j.value("name", "");
    if (!j.contains("base_mva")) throw ParseError("case JSON missing base_mva");
    grid.base_mva = j.at("base_mva").get<double>();
    if (!j.contains("buses")) throw ParseError("case JSON missing buses[]");
    for (const auto& jb : j.at("buses")) {
      Bus b;
      b.id = jb.at("id").get<int>();
      b.kind = kind_from_string(jb.at("kind").get<std::string>());
      b.p_demand = jb.at("p_demand").get<double>();
      b.q_demand = jb.at("q_demand").get<double>();
      b.shunt_g = jb.value("shunt_g", 0.0);
      b.shunt_b = jb.value("shunt_b", 0.0);
      b.v_mag_init = jb.value("v_mag_init", 1.0);
      b.v_ang_init = jb.value("v_ang_init", 0.0);
      grid.buses.push_back(b);
    }
    for (const auto& jg : j.value("gens", json::array())) {
      Gen g;
      g.bus = jg.at("bus").get<int>();
      g.p_out = jg.at("p_out").get<double>();
      g.q_out = jg.value("q_out", 0.0);
      g.q_max = jg.at("q_max").get<double>();
      g.q_min = jg.at("q_min").get<double>();
      g.v_set = jg.at("v_set").get<double>();
      g.status = jg.value("status", true);
      grid.gens.push_back(g);
    }
    for (const auto& jb : j.value("branches", json::array())) {
      Branch br;
      br.from = jb.at("from").get<int>();
      br.to = jb.at("to").get<int>();
      br.r = jb.at("r").get<double>();
      br.x = jb.at("x").get<double>();
      br.b_charging = jb.value("b_charging", 0.0);
      br.tap_ratio = jb.value("tap_ratio", 0.0);
      br.phase_shift = jb.value("phase_shift", 0.0);
      br.status = jb.value("status", true);
      grid.branches.push_back(br);
    }
    return grid;
  } catch (const json::exception& e) {
    throw ParseError(std::string("case JSON schema error: ") + e.what());
  }
}

}  // namespace vstab
