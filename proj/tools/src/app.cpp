#include "app.hpp"

#include <fstream>
#include <sstream>

namespace vstab::cli {

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

const json* config_find(const json& root, const std::string& dotted) {
  const json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (!node->is_object() || !node->contains(key)) return nullptr;
    node = &(*node)[key];
    if (dot == std::string::npos) return node;
    start = dot + 1;
  }
}

namespace {

PmuPlacement placement_from_json(const json& j, const std::string& origin) {
  const json* buses = &j;
  if (j.is_object()) {
    if (!j.contains("observed_buses")) {
      throw ParseError(origin + ": placement object needs \"observed_buses\"");
    }
    buses = &j["observed_buses"];
  }
  if (!buses->is_array()) throw ParseError(origin + ": placement must be an id array");
  PmuPlacement placement;
  for (const auto& id : *buses) {
    if (!id.is_number_integer()) throw ParseError(origin + ": bus ids must be integers");
    placement.observed_buses.push_back(id.get<int>());
  }
  return placement;
}

}  // namespace

PmuPlacement load_placement(const std::filesystem::path& path) {
  return placement_from_json(load_json_file(path), path.string());
}

PmuPlacement placement_from_context(const Context& ctx, const std::string& flag_path,
                                    const GridCase& grid) {
  PmuPlacement placement;
  if (!flag_path.empty()) {
    placement = load_placement(flag_path);
  } else if (const json* node = config_find(ctx.config, "placement")) {
    placement = node->is_string() ? load_placement(node->get<std::string>())
                                  : placement_from_json(*node, "config");
  } else {
    throw EmptyRequest("no placement given (flag --placement or config key \"placement\")");
  }
  placement.check_against(grid);
  return placement;
}

GridCase load_case_checked(const std::string& path) {
  if (path.empty()) {
    throw EmptyRequest("no case file given (flag --case or config key \"case\")");
  }
  return load_case(path);
}

std::string case_path_or_config(const Context& ctx, const std::string& flag_path) {
  if (!flag_path.empty()) return flag_path;
  return config_value<std::string>(ctx.config, "case", "");
}

std::filesystem::path out_path(const Context& ctx, const std::string& name) {
  std::filesystem::path p(name);
  if (!p.is_absolute() && ctx.out_dir != ".") p = std::filesystem::path(ctx.out_dir) / p;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  return p;
}

}  // namespace vstab::cli
