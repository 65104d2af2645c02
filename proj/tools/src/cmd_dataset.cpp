#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "app.hpp"
#include "vstab/csv.hpp"
#include "vstab/pipeline.hpp"

namespace vstab::cli {
namespace {

std::string indexed_name(const std::string& prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%03d.csv", index);
  return prefix + buf;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct DatasetGenOpts {
  std::string case_path;
  std::string placement_path;
  std::string schedule_path;
  std::string manifest = "manifest.json";
  std::string replay_out = "replay.csv";
  DatasetOptions dataset;
  SolverOptions solver;  // schedule mode
};

void run_schedule_mode(const Context& ctx, const DatasetGenOpts& o, const GridCase& grid,
                       const PmuPlacement& placement, const std::string& case_path) {
  const LoadSchedule schedule = parse_schedule_json(read_text_file(o.schedule_path));
  const MeasurementWindow window =
      replay_schedule(grid, schedule, placement, o.dataset.noise, o.solver);

  const auto csv_path = out_path(ctx, o.replay_out);
  write_measurement_csv(csv_path, window, placement);

  json manifest{{"mode", "schedule"},
                {"case", case_path},
                {"schedule", o.schedule_path},
                {"placement", placement.observed_buses},
                {"noise", noise_to_json(o.dataset.noise)},
                {"solver", solver_to_json(o.solver)},
                {"output", o.replay_out},
                {"first_tick", window.first_tick},
                {"ticks", window.columns.size()}};
  const auto manifest_path = out_path(ctx, o.manifest);
  write_text_file(manifest_path, manifest.dump(1) + "\n");

  std::printf("replayed %zu ticks (first tick %d)\n", window.columns.size(), window.first_tick);
  std::printf("measurements written to %s\nmanifest written to %s\n", csv_path.c_str(),
              manifest_path.c_str());
}

void run_dataset_gen(const Context& ctx, const DatasetGenOpts& opts) {
  DatasetGenOpts o = opts;
  const std::string case_path = case_path_or_config(ctx, o.case_path);
  const GridCase grid = load_case_checked(case_path);
  const PmuPlacement placement = placement_from_context(ctx, o.placement_path, grid);

  if (o.schedule_path.empty()) {
    if (const json* node = config_find(ctx.config, "schedule")) {
      if (node->is_string()) o.schedule_path = node->get<std::string>();
    }
  }
  if (!o.schedule_path.empty()) {
    run_schedule_mode(ctx, o, grid, placement, case_path);
    return;
  }

  if (o.dataset.n_curves <= 0) {
    throw EmptyRequest("no curves requested (flag --curves or config key \"dataset.curves\")");
  }
  o.dataset.seed = ctx.seed;
  const GeneratedDataset data = generate_dataset(grid, placement, o.dataset);

  json records = json::array();
  std::size_t curve_pos = 0;
  int ok_count = 0;
  for (const auto& rec : data.manifest) {
    json entry{{"index", rec.index}, {"ok", rec.ok}};
    if (rec.ok) {
      const std::string meas_name = indexed_name("curve", rec.index);
      const std::string pv_name = indexed_name("pv", rec.index);
      MeasurementWindow window;
      window.columns = data.windows[curve_pos];
      write_measurement_csv(out_path(ctx, meas_name), window, placement);
      write_curve_csv(out_path(ctx, pv_name), data.curves[curve_pos]);
      ++curve_pos;
      ++ok_count;
      entry["buses"] = rec.buses;
      entry["factors"] = rec.factors;
      entry["monitored_bus"] = rec.monitored_bus;
      entry["lambda_max"] = rec.lambda_max;
      entry["measurements"] = meas_name;
      entry["pv"] = pv_name;
    } else {
      entry["error"] = rec.error;
    }
    records.push_back(std::move(entry));
  }

  json manifest{{"mode", "random"},
                {"case", case_path},
                {"placement", placement.observed_buses},
                {"seed", data.seed},
                {"curves_requested", o.dataset.n_curves},
                {"min_nodes", o.dataset.min_nodes},
                {"max_nodes", o.dataset.max_nodes},
                {"factor_min", o.dataset.factor_min},
                {"factor_max", o.dataset.factor_max},
                {"noise", noise_to_json(o.dataset.noise)},
                {"trace", trace_to_json(o.dataset.trace)},
                {"records", std::move(records)}};
  const auto manifest_path = out_path(ctx, o.manifest);
  write_text_file(manifest_path, manifest.dump(1) + "\n");

  std::printf("generated %d curves (%d failed) with seed %llu\n", ok_count,
              o.dataset.n_curves - ok_count,
              static_cast<unsigned long long>(data.seed));
  std::printf("manifest written to %s\n", manifest_path.c_str());
}

}  // namespace

void register_dataset_commands(CLI::App& app, Context& ctx) {
  auto* ds_cmd = app.add_subcommand("dataset", "training data generation");
  ds_cmd->require_subcommand(1);
  ds_cmd->fallthrough();

  auto opts = std::make_shared<DatasetGenOpts>();
  opts->dataset.noise = noise_defaults(ctx.config);
  opts->dataset.trace = trace_defaults(ctx.config);
  opts->dataset.n_curves = config_value(ctx.config, "dataset.curves", 0);
  opts->dataset.min_nodes = config_value(ctx.config, "dataset.min_nodes", 1);
  opts->dataset.max_nodes = config_value(ctx.config, "dataset.max_nodes", 3);
  opts->dataset.factor_min = config_value(ctx.config, "dataset.factor_min", 0.5);
  opts->dataset.factor_max = config_value(ctx.config, "dataset.factor_max", 2.0);
  opts->dataset.max_failures = config_value(ctx.config, "dataset.max_failures", 10);
  opts->solver = solver_defaults(ctx.config);

  auto* gen = ds_cmd->add_subcommand(
      "gen", "trace random load-growth curves into PMU measurement files, or replay a "
             "demand schedule with --schedule");
  gen->fallthrough();
  gen->add_option("--case", opts->case_path, "case file (.m or .json)");
  gen->add_option("--placement", opts->placement_path, "PMU placement JSON");
  gen->add_option("--curves", opts->dataset.n_curves, "number of random curves");
  gen->add_option("--min-nodes", opts->dataset.min_nodes, "fewest scaled load buses per curve")
      ->capture_default_str();
  gen->add_option("--max-nodes", opts->dataset.max_nodes, "most scaled load buses per curve")
      ->capture_default_str();
  gen->add_option("--factor-min", opts->dataset.factor_min, "growth factor lower bound")
      ->capture_default_str();
  gen->add_option("--factor-max", opts->dataset.factor_max, "growth factor upper bound")
      ->capture_default_str();
  gen->add_option("--max-failures", opts->dataset.max_failures,
                  "abort after this many failed traces")
      ->capture_default_str();
  gen->add_option("--schedule", opts->schedule_path,
                  "replay this demand schedule instead of tracing random curves");
  gen->add_option("--manifest", opts->manifest, "manifest filename")->capture_default_str();
  gen->add_option("--replay-out", opts->replay_out,
                  "measurement CSV filename for schedule replays")
      ->capture_default_str();
  add_noise_options(*gen, opts->dataset.noise);
  add_trace_options(*gen, opts->dataset.trace);
  gen->callback([opts, &ctx] { run_dataset_gen(ctx, *opts); });
}

}  // namespace vstab::cli
