#include <algorithm>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vstab/errors.hpp"
#include "vstab/pmu.hpp"

namespace vstab {

namespace {

using json = nlohmann::json;

const char* to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::constant: return "constant";
    case SegmentKind::step: return "step";
    case SegmentKind::ramp: return "ramp";
  }
  return "?";
}

const char* to_string(DemandField f) {
  return f == DemandField::active ? "p" : "q";
}

SegmentKind kind_from_string(const std::string& s) {
  if (s == "constant") return SegmentKind::constant;
  if (s == "step") return SegmentKind::step;
  if (s == "ramp") return SegmentKind::ramp;
  throw ParseError("unknown schedule segment kind '" + s + "'");
}

DemandField field_from_string(const std::string& s) {
  if (s == "p") return DemandField::active;
  if (s == "q") return DemandField::reactive;
  throw ParseError("unknown schedule field '" + s + "' (expected p or q)");
}

// Segments grouped by (bus, field) and sorted by time.
using ChannelKey = std::pair<int, int>;
std::map<ChannelKey, std::vector<const ScheduleSegment*>> group_channels(
    const std::vector<ScheduleSegment>& segments) {
  std::map<ChannelKey, std::vector<const ScheduleSegment*>> channels;
  for (const auto& seg : segments) {
    channels[{seg.bus, static_cast<int>(seg.field)}].push_back(&seg);
  }
  for (auto& [key, list] : channels) {
    std::sort(list.begin(), list.end(),
              [](const ScheduleSegment* a, const ScheduleSegment* b) { return a->t_from < b->t_from; });
  }
  return channels;
}

}  // namespace

void LoadSchedule::validate() const {
  if (segments.empty()) throw ValidationError("schedule has no segments");
  for (const auto& seg : segments) {
    if (seg.t_from > seg.t_to) {
      throw ValidationError("schedule segment has t_from > t_to");
    }
  }
  for (const auto& [key, list] : group_channels(segments)) {
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i]->t_from != list[i - 1]->t_to + 1) {
        throw ValidationError("segments for bus " + std::to_string(key.first) +
                              " must be contiguous and non-overlapping");
      }
    }
  }
}

int LoadSchedule::first_tick() const {
  int t = std::numeric_limits<int>::max();
  for (const auto& seg : segments) t = std::min(t, seg.t_from);
  return t;
}

int LoadSchedule::last_tick() const {
  int t = std::numeric_limits<int>::min();
  for (const auto& seg : segments) t = std::max(t, seg.t_to);
  return t;
}

double LoadSchedule::level_at(const GridCase& grid, int bus, DemandField field, int t) const {
  const auto& b = grid.buses[static_cast<std::size_t>(grid.bus_index(bus))];
  double level = field == DemandField::active ? b.p_demand : b.q_demand;

  auto channels = group_channels(segments);
  auto it = channels.find({bus, static_cast<int>(field)});
  if (it == channels.end()) return level;

  // Walk segments in order so ramps chain from where the previous one ended.
  for (const ScheduleSegment* seg : it->second) {
    if (t < seg->t_from) break;
    const int end = std::min(t, seg->t_to);
    switch (seg->kind) {
      case SegmentKind::constant:
      case SegmentKind::step:
        level = seg->value;
        break;
      case SegmentKind::ramp:
        level += seg->value * (end - seg->t_from + 1);
        break;
    }
    if (t <= seg->t_to) break;
  }
  return level;
}

LoadSchedule parse_schedule_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("schedule JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ParseError("schedule JSON must be a list of segment objects");
  LoadSchedule schedule;
  try {
    for (const auto& item : doc) {
      ScheduleSegment seg;
      seg.t_from = item.at("t_from").get<int>();
      seg.t_to = item.at("t_to").get<int>();
      seg.bus = item.at("bus").get<int>();
      seg.field = field_from_string(item.at("field").get<std::string>());
      seg.kind = kind_from_string(item.at("kind").get<std::string>());
      seg.value = item.at("value").get<double>();
      schedule.segments.push_back(seg);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("schedule JSON: ") + e.what());
  }
  schedule.validate();
  return schedule;
}

std::string serialize_schedule_json(const LoadSchedule& schedule) {
  json doc = json::array();
  for (const auto& seg : schedule.segments) {
    doc.push_back({{"t_from", seg.t_from},
                   {"t_to", seg.t_to},
                   {"bus", seg.bus},
                   {"field", to_string(seg.field)},
                   {"kind", to_string(seg.kind)},
                   {"value", seg.value}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace vstab
