#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "vstab/cpflow.hpp"
#include "vstab/errors.hpp"
#include "vstab/grid.hpp"
#include "vstab/pmu.hpp"
#include "vstab/power_flow.hpp"

namespace CLI {
class App;
}

namespace vstab::cli {

using nlohmann::json;

// Global state shared by every subcommand: the loaded --config document and
// the root seed / output directory (flags override config values).
struct Context {
  json config = json::object();
  std::string out_dir = ".";
  std::uint64_t seed = 0;
};

json load_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Dotted-path lookup, e.g. "train.learning_rate". Null when absent.
const json* config_find(const json& root, const std::string& dotted);

template <typename T>
T config_value(const json& root, const std::string& dotted, T fallback) {
  const json* node = config_find(root, dotted);
  if (node == nullptr) return fallback;
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    throw ParseError("config key '" + dotted + "' has the wrong type");
  }
}

// Placement file: {"observed_buses": [...]} or a bare id array. The config
// key "placement" may hold a path or the array itself.
PmuPlacement load_placement(const std::filesystem::path& path);
PmuPlacement placement_from_context(const Context& ctx, const std::string& flag_path,
                                    const GridCase& grid);

// Case file resolved from flag or config key "case".
GridCase load_case_checked(const std::string& path);
std::string case_path_or_config(const Context& ctx, const std::string& flag_path);

// Joins out_dir unless the name is already absolute; creates directories.
std::filesystem::path out_path(const Context& ctx, const std::string& name);

// Shared option groups. Defaults come from the config document; the add_*
// functions bind flags that override them. The bound structs must outlive
// parse(), which holds because each command's callback owns its option block.
ContinuationOptions trace_defaults(const json& config);
void add_trace_options(CLI::App& cmd, ContinuationOptions& opts);

SolverOptions solver_defaults(const json& config);
void add_solver_options(CLI::App& cmd, SolverOptions& opts);

NoiseModel noise_defaults(const json& config);
void add_noise_options(CLI::App& cmd, NoiseModel& noise);

json noise_to_json(const NoiseModel& noise);
json trace_to_json(const ContinuationOptions& opts);
json solver_to_json(const SolverOptions& opts);

void register_grid_commands(CLI::App& app, Context& ctx);
void register_dataset_commands(CLI::App& app, Context& ctx);
void register_model_commands(CLI::App& app, Context& ctx);
void register_eval_commands(CLI::App& app, Context& ctx);

}  // namespace vstab::cli
