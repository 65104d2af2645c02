#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "app.hpp"
#include "vstab/checkpoint.hpp"
#include "vstab/csv.hpp"
#include "vstab/pipeline.hpp"
#include "vstab/random.hpp"
#include "vstab/stability.hpp"

namespace vstab::cli {
namespace {

struct VcpOpts {
  std::string case_path;
  std::string model;
  std::string placement_path;
  std::string mode = "sli";
  std::string report;
  std::string scatter;
  double phi = -1.0;  // negative: use the checkpoint's value
  NoiseModel noise;
  ContinuationOptions trace;
};

void run_eval_vcp(const Context& ctx, const VcpOpts& o) {
  const GridCase grid = load_case_checked(case_path_or_config(ctx, o.case_path));
  if (o.model.empty()) throw EmptyRequest("no model checkpoint given (--model)");
  const Checkpoint ckpt = load_checkpoint(o.model);
  if (!ckpt.alignment) {
    throw ValidationError("checkpoint has no alignment map; run fit-alignment first");
  }
  const PmuPlacement placement = placement_from_context(ctx, o.placement_path, grid);

  std::vector<std::vector<int>> directions;
  if (o.mode == "sli") {
    directions = single_load_directions(grid);
  } else if (o.mode == "dli") {
    directions = paired_load_directions(grid);
  } else {
    throw ParseError("unknown mode '" + o.mode + "' (sli or dli)");
  }

  VcpEvalOptions opts;
  opts.noise = o.noise;
  opts.trace = o.trace;
  opts.temp.phi = o.phi >= 0.0 ? o.phi : ckpt.phi.value_or(opts.temp.phi);
  opts.seed = ctx.seed;

  const VcpEvalResult result =
      evaluate_vcp(grid, ckpt.model, *ckpt.alignment, placement, directions, opts);

  json experiments = json::array();
  for (const auto& e : result.experiments) {
    json row{{"buses", e.buses}, {"ok", e.ok}};
    if (e.ok) {
      row["lambda_real"] = e.lambda_real;
      row["lambda_pre"] = e.lambda_pre;
      row["nose_sample_index"] = e.nose_sample_index;
    } else {
      row["error"] = e.error;
    }
    experiments.push_back(std::move(row));
  }
  json report{{"command", "eval vcp"},
              {"mode", o.mode},
              {"case", grid.name},
              {"seed", ctx.seed},
              {"phi", opts.temp.phi},
              {"noise", noise_to_json(o.noise)},
              {"trace", trace_to_json(o.trace)},
              {"experiments", std::move(experiments)},
              {"mape", result.mape_value},
              {"failures", result.failures}};

  const std::string report_name = o.report.empty() ? "vcp_" + o.mode + ".json" : o.report;
  const auto report_path = out_path(ctx, report_name);
  write_text_file(report_path, report.dump(1) + "\n");

  std::string scatter_text = "lambda_real,lambda_pre\n";
  for (const auto& e : result.experiments) {
    if (!e.ok) continue;
    scatter_text += format_csv_double(e.lambda_real) + ',' + format_csv_double(e.lambda_pre) + "\n";
  }
  const std::string scatter_name =
      o.scatter.empty() ? "vcp_" + o.mode + "_scatter.csv" : o.scatter;
  const auto scatter_path = out_path(ctx, scatter_name);
  write_text_file(scatter_path, scatter_text);

  std::printf("%s over %zu experiments (%d failed): MAPE %.6f\n", o.mode.c_str(),
              result.experiments.size(), result.failures, result.mape_value);
  std::printf("report written to %s\n", report_path.c_str());
  std::printf("scatter written to %s\n", scatter_path.c_str());
}

struct PlotOpts {
  std::string input;
  std::string x = "t";
  std::vector<std::string> y;
  std::string out = "plot.svg";
  std::string title;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;  // one vector per header entry
};

CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::stringstream head(line);
  std::string cell;
  while (std::getline(head, cell, ',')) table.header.push_back(cell);
  if (table.header.empty()) throw ParseError(path + ": empty header");
  table.columns.resize(table.header.size());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col >= table.header.size()) {
        throw ParseError(path + ": row " + std::to_string(row) + " has too many fields");
      }
      try {
        table.columns[col].push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError(path + ": row " + std::to_string(row) + " field '" + cell +
                         "' is not a number");
      }
      ++col;
    }
    if (col != table.header.size()) {
      throw ParseError(path + ": row " + std::to_string(row) + " has too few fields");
    }
  }
  if (table.columns.front().empty()) throw ParseError(path + ": no data rows");
  return table;
}

std::size_t column_index(const CsvTable& table, const std::string& name,
                         const std::string& path) {
  const auto it = std::find(table.header.begin(), table.header.end(), name);
  if (it == table.header.end()) {
    throw ValidationError(path + " has no column '" + name + "'");
  }
  return static_cast<std::size_t>(it - table.header.begin());
}

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void run_export_plot(const Context& ctx, const PlotOpts& o) {
  if (o.input.empty()) throw EmptyRequest("no input CSV given (--input)");
  const CsvTable table = read_csv_table(o.input);
  const std::size_t xi = column_index(table, o.x, o.input);

  std::vector<std::string> y_names = o.y;
  if (y_names.empty()) {
    // Prefer the monitoring pair when present, otherwise plot everything.
    for (const char* name : {"lambda_hat", "v_hat"}) {
      if (std::find(table.header.begin(), table.header.end(), name) != table.header.end()) {
        y_names.push_back(name);
      }
    }
    if (y_names.empty()) {
      for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i != xi) y_names.push_back(table.header[i]);
      }
    }
  }
  if (y_names.empty()) throw EmptyRequest("no y columns to plot");

  std::vector<std::size_t> y_cols;
  for (const auto& name : y_names) y_cols.push_back(column_index(table, name, o.input));

  const auto& xs = table.columns[xi];
  double x_min = *std::min_element(xs.begin(), xs.end());
  double x_max = *std::max_element(xs.begin(), xs.end());
  double y_min = std::numeric_limits<double>::infinity();
  double y_max = -std::numeric_limits<double>::infinity();
  for (std::size_t col : y_cols) {
    for (double v : table.columns[col]) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (x_max == x_min) {
    x_min -= 1.0;
    x_max += 1.0;
  }
  if (y_max == y_min) {
    y_min -= 1.0;
    y_max += 1.0;
  }

  const double width = 900.0;
  const double height = 480.0;
  const double ml = 70.0, mr = 160.0, mt = 40.0, mb = 50.0;
  const double pw = width - ml - mr;
  const double ph = height - mt - mb;
  const auto sx = [&](double v) { return ml + (v - x_min) / (x_max - x_min) * pw; };
  const auto sy = [&](double v) { return mt + ph - (v - y_min) / (y_max - y_min) * ph; };

  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  constexpr std::size_t kPaletteSize = 5;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"480\" "
         "viewBox=\"0 0 900 480\">\n";
  svg += "<rect width=\"900\" height=\"480\" fill=\"white\"/>\n";
  if (!o.title.empty()) {
    svg += "<text x=\"" + svg_num(ml + pw / 2) +
           "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">" +
           o.title + "</text>\n";
  }

  // Axes and ticks.
  svg += "<line x1=\"" + svg_num(ml) + "\" y1=\"" + svg_num(mt + ph) + "\" x2=\"" +
         svg_num(ml + pw) + "\" y2=\"" + svg_num(mt + ph) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + svg_num(ml) + "\" y1=\"" + svg_num(mt) + "\" x2=\"" + svg_num(ml) +
         "\" y2=\"" + svg_num(mt + ph) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double fx = x_min + (x_max - x_min) * i / kTicks;
    const double px = sx(fx);
    svg += "<line x1=\"" + svg_num(px) + "\" y1=\"" + svg_num(mt + ph) + "\" x2=\"" +
           svg_num(px) + "\" y2=\"" + svg_num(mt + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + svg_num(px) + "\" y=\"" + svg_num(mt + ph + 20) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           tick_label(fx) + "</text>\n";
    const double fy = y_min + (y_max - y_min) * i / kTicks;
    const double py = sy(fy);
    svg += "<line x1=\"" + svg_num(ml - 5) + "\" y1=\"" + svg_num(py) + "\" x2=\"" +
           svg_num(ml) + "\" y2=\"" + svg_num(py) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + svg_num(ml - 8) + "\" y=\"" + svg_num(py + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           tick_label(fy) + "</text>\n";
  }
  svg += "<text x=\"" + svg_num(ml + pw / 2) + "\" y=\"" + svg_num(height - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + o.x +
         "</text>\n";

  // Series.
  for (std::size_t s = 0; s < y_cols.size(); ++s) {
    const auto& ys = table.columns[y_cols[s]];
    const char* color = kPalette[s % kPaletteSize];
    std::string points;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!points.empty()) points += ' ';
      points += svg_num(sx(xs[i])) + ',' + svg_num(sy(ys[i]));
    }
    svg += "<polyline fill=\"none\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    const double ly = mt + 16.0 + 20.0 * static_cast<double>(s);
    svg += "<line x1=\"" + svg_num(ml + pw + 12) + "\" y1=\"" + svg_num(ly) + "\" x2=\"" +
           svg_num(ml + pw + 36) + "\" y2=\"" + svg_num(ly) + "\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + svg_num(ml + pw + 42) + "\" y=\"" + svg_num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + y_names[s] + "</text>\n";
  }
  svg += "</svg>\n";

  const auto out = out_path(ctx, o.out);
  write_text_file(out, svg);
  std::printf("plotted %zu series over %zu rows to %s\n", y_cols.size(), xs.size(),
              out.c_str());
}

struct BenchOpts {
  std::string model;
  std::string out;
  int repeats = 2000;
};

void run_bench(const Context& ctx, const BenchOpts& o) {
  if (o.model.empty()) throw EmptyRequest("no model checkpoint given (--model)");
  if (o.repeats <= 0) throw EmptyRequest("--repeats must be positive");
  const Checkpoint ckpt = load_checkpoint(o.model);

  TemperatureConfig temp;
  temp.phi = ckpt.phi.value_or(temp.phi);

  RandomStream rng(ctx.seed);
  PhasorVector input;
  input.values.resize(ckpt.model.input_dim());
  for (Eigen::Index i = 0; i < input.values.size(); ++i) input.values[i] = rng.uniform();

  const int warmup = std::min(100, o.repeats);
  double checksum = 0.0;
  for (int i = 0; i < warmup; ++i) {
    const Feature f = extract_feature(ckpt.model, input, temp, rng);
    checksum += ckpt.alignment ? align(*ckpt.alignment, f).first : f.z_hat.sum();
  }

  std::vector<double> us(static_cast<std::size_t>(o.repeats));
  for (int i = 0; i < o.repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Feature f = extract_feature(ckpt.model, input, temp, rng);
    checksum += ckpt.alignment ? align(*ckpt.alignment, f).first : f.z_hat.sum();
    const auto t1 = std::chrono::steady_clock::now();
    us[static_cast<std::size_t>(i)] =
        std::chrono::duration<double, std::micro>(t1 - t0).count();
  }

  std::vector<double> sorted = us;
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&](double q) {
    const auto pos = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1));
    return sorted[pos];
  };
  const double mean =
      std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());

  std::printf("inference over %d repeats (input dim %d, phi %g):\n", o.repeats,
              ckpt.model.input_dim(), temp.phi);
  std::printf("  median %8.3f us\n  p95    %8.3f us\n  mean   %8.3f us\n  min    %8.3f us\n"
              "  max    %8.3f us\n",
              quantile(0.5), quantile(0.95), mean, sorted.front(), sorted.back());
  std::printf("checksum %.6g\n", checksum);

  if (!o.out.empty()) {
    json report{{"command", "bench"},
                {"model", o.model},
                {"repeats", o.repeats},
                {"warmup", warmup},
                {"seed", ctx.seed},
                {"phi", temp.phi},
                {"input_dim", ckpt.model.input_dim()},
                {"median_us", quantile(0.5)},
                {"p95_us", quantile(0.95)},
                {"mean_us", mean},
                {"min_us", sorted.front()},
                {"max_us", sorted.back()}};
    const auto path = out_path(ctx, o.out);
    write_text_file(path, report.dump(1) + "\n");
    std::printf("report written to %s\n", path.c_str());
  }
}

}  // namespace

void register_eval_commands(CLI::App& app, Context& ctx) {
  auto* eval_cmd = app.add_subcommand("eval", "accuracy evaluation protocols");
  eval_cmd->require_subcommand(1);
  eval_cmd->fallthrough();

  auto vcp_opts = std::make_shared<VcpOpts>();
  vcp_opts->noise = noise_defaults(ctx.config);
  vcp_opts->trace = trace_defaults(ctx.config);
  auto* vcp_cmd = eval_cmd->add_subcommand(
      "vcp", "compare predicted collapse points against traced noses");
  vcp_cmd->fallthrough();
  vcp_cmd->add_option("--case", vcp_opts->case_path, "case file (.m or .json)");
  vcp_cmd->add_option("--model", vcp_opts->model, "aligned checkpoint");
  vcp_cmd->add_option("--placement", vcp_opts->placement_path, "placement JSON");
  vcp_cmd->add_option("--mode", vcp_opts->mode, "sli (single node) or dli (node pairs)")
      ->capture_default_str();
  vcp_cmd->add_option("--phi", vcp_opts->phi,
                      "sampling temperature (default: the checkpoint's stored value)");
  vcp_cmd->add_option("--report", vcp_opts->report, "report JSON filename");
  vcp_cmd->add_option("--scatter", vcp_opts->scatter, "scatter CSV filename");
  add_noise_options(*vcp_cmd, vcp_opts->noise);
  add_trace_options(*vcp_cmd, vcp_opts->trace);
  vcp_cmd->callback([vcp_opts, &ctx] { run_eval_vcp(ctx, *vcp_opts); });

  auto plot_opts = std::make_shared<PlotOpts>();
  auto* plot_cmd =
      app.add_subcommand("export-plot", "render columns of a CSV file as an SVG line plot");
  plot_cmd->fallthrough();
  plot_cmd->add_option("--input", plot_opts->input, "source CSV");
  plot_cmd->add_option("--x", plot_opts->x, "x-axis column")->capture_default_str();
  plot_cmd->add_option("--y", plot_opts->y, "y columns (repeatable; default lambda_hat,v_hat)")
      ->delimiter(',');
  plot_cmd->add_option("--out", plot_opts->out, "SVG filename")->capture_default_str();
  plot_cmd->add_option("--title", plot_opts->title, "plot title");
  plot_cmd->callback([plot_opts, &ctx] { run_export_plot(ctx, *plot_opts); });

  auto bench_opts = std::make_shared<BenchOpts>();
  auto* bench_cmd =
      app.add_subcommand("bench", "time single-vector feature extraction on a checkpoint");
  bench_cmd->fallthrough();
  bench_cmd->add_option("--model", bench_opts->model, "checkpoint to benchmark");
  bench_cmd->add_option("--repeats", bench_opts->repeats, "timed iterations")
      ->capture_default_str();
  bench_cmd->add_option("--out", bench_opts->out, "report JSON filename");
  bench_cmd->callback([bench_opts, &ctx] { run_bench(ctx, *bench_opts); });
}

}  // namespace vstab::cli
