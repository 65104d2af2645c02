#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <iostream>
#include <memory>

#include "app.hpp"
#include "vstab/checkpoint.hpp"
#include "vstab/csv.hpp"
#include "vstab/pipeline.hpp"
#include "vstab/random.hpp"
#include "vstab/stability.hpp"
#include "vstab/vae.hpp"

namespace vstab::cli {
namespace {

struct ManifestEntry {
  std::string measurements;
  std::string pv;
  int monitored_bus = 0;
};

// The list of ok records from a dataset manifest, with paths resolved
// relative to the manifest file. A schedule-mode manifest yields its single
// replay file (no pv reference).
std::vector<ManifestEntry> manifest_entries(const std::filesystem::path& manifest_path,
                                            const json& manifest) {
  const auto dir = manifest_path.parent_path();
  std::vector<ManifestEntry> entries;
  if (manifest.contains("records")) {
    for (const auto& rec : manifest["records"]) {
      if (!rec.value("ok", false)) continue;
      ManifestEntry e;
      e.measurements = (dir / rec.at("measurements").get<std::string>()).string();
      e.pv = (dir / rec.at("pv").get<std::string>()).string();
      e.monitored_bus = rec.at("monitored_bus").get<int>();
      entries.push_back(std::move(e));
    }
  } else if (manifest.contains("output")) {
    ManifestEntry e;
    e.measurements = (dir / manifest.at("output").get<std::string>()).string();
    entries.push_back(std::move(e));
  } else {
    throw ParseError(manifest_path.string() + ": not a dataset manifest");
  }
  if (entries.empty()) throw EmptyRequest(manifest_path.string() + " has no usable records");
  return entries;
}

struct TrainOpts {
  std::string data;
  std::string out = "model.json";
  std::string log_csv;
  std::vector<int> encoder_hidden;
  std::vector<int> decoder_hidden;
  int latent = 2;
  std::string likelihood = "gaussian";
  std::string init = "scaled";
  TrainConfig config;
};

ReconLikelihood parse_likelihood(const std::string& name) {
  if (name == "gaussian") return ReconLikelihood::gaussian;
  if (name == "bernoulli") return ReconLikelihood::bernoulli;
  throw ParseError("unknown likelihood '" + name + "' (gaussian or bernoulli)");
}

InitScheme parse_init(const std::string& name) {
  if (name == "scaled") return InitScheme::scaled;
  if (name == "paper") return InitScheme::paper_std_normal;
  throw ParseError("unknown init scheme '" + name + "' (scaled or paper)");
}

void run_train(const Context& ctx, const TrainOpts& o) {
  if (o.data.empty()) throw EmptyRequest("no dataset manifest given (--data)");
  const json manifest = load_json_file(o.data);
  const auto entries = manifest_entries(o.data, manifest);

  std::vector<PhasorVector> dataset;
  for (const auto& entry : entries) {
    MeasurementCsv csv = read_measurement_csv(entry.measurements);
    if (!dataset.empty() && !csv.columns.empty() &&
        csv.columns.front().values.size() != dataset.front().values.size()) {
      throw DimensionMismatch(entry.measurements + " has a different channel layout");
    }
    std::move(csv.columns.begin(), csv.columns.end(), std::back_inserter(dataset));
  }
  if (dataset.empty()) throw EmptyRequest("dataset is empty");

  VaeArchitecture arch;
  arch.input_dim = static_cast<int>(dataset.front().values.size());
  arch.encoder_hidden = o.encoder_hidden;
  arch.latent_dim = o.latent;
  arch.decoder_hidden = o.decoder_hidden;
  if (arch.decoder_hidden.empty()) {
    arch.decoder_hidden.assign(arch.encoder_hidden.rbegin(), arch.encoder_hidden.rend());
  }

  std::printf("training on %zu samples from %zu files: %d", dataset.size(), entries.size(),
              arch.input_dim);
  for (int width : arch.encoder_hidden) std::printf("-%d", width);
  std::printf("-%d latent, lr %g, batch %d, seed %llu\n", arch.latent_dim,
              o.config.learning_rate, o.config.batch_size,
              static_cast<unsigned long long>(o.config.seed));

  TrainConfig config = o.config;
  config.init_scheme = parse_init(o.init);

  TrainLog log;
  const VaeModel model = train(dataset, arch, config, parse_likelihood(o.likelihood), &log);

  const double final_loss = log.step_loss.empty() ? 0.0 : log.step_loss.back();
  std::printf("ran %d steps (%s), final batch loss %.6f\n", log.steps_run,
              log.stopped_early ? "stopped early" : "step cap", final_loss);

  Checkpoint ckpt;
  ckpt.model = model;
  const auto model_path = out_path(ctx, o.out);
  save_checkpoint(model_path, ckpt);
  std::printf("model written to %s\n", model_path.c_str());

  if (!o.log_csv.empty()) {
    std::string text = "step,loss\n";
    for (std::size_t i = 0; i < log.step_loss.size(); ++i) {
      text += std::to_string(i + 1) + ',' + format_csv_double(log.step_loss[i]) + "\n";
    }
    const auto log_path = out_path(ctx, o.log_csv);
    write_text_file(log_path, text);
    std::printf("loss log written to %s\n", log_path.c_str());
  }

  json meta{{"command", "train"},
            {"data", o.data},
            {"files", entries.size()},
            {"samples", dataset.size()},
            {"arch",
             json{{"input_dim", arch.input_dim},
                  {"encoder_hidden", arch.encoder_hidden},
                  {"latent", arch.latent_dim},
                  {"decoder_hidden", arch.decoder_hidden}}},
            {"likelihood", o.likelihood},
            {"init", o.init},
            {"learning_rate", o.config.learning_rate},
            {"batch_size", o.config.batch_size},
            {"max_steps", o.config.max_steps},
            {"seed", o.config.seed},
            {"steps_run", log.steps_run},
            {"stopped_early", log.stopped_early},
            {"final_loss", final_loss}};
  write_text_file(model_path.string() + ".meta.json", meta.dump(1) + "\n");
}

struct FitAlignmentOpts {
  std::string model;
  std::string data;
  std::string out = "model_aligned.json";
  double phi = 0.05;
};

void run_fit_alignment(const Context& ctx, const FitAlignmentOpts& o) {
  if (o.model.empty()) throw EmptyRequest("no model checkpoint given (--model)");
  if (o.data.empty()) throw EmptyRequest("no dataset manifest given (--data)");
  Checkpoint ckpt = load_checkpoint(o.model);
  if (ckpt.model.latent_dim != 2) {
    throw ValidationError("alignment needs a 2-dimensional latent space, model has " +
                          std::to_string(ckpt.model.latent_dim));
  }

  const json manifest = load_json_file(o.data);
  const auto entries = manifest_entries(o.data, manifest);

  const TemperatureConfig temp{o.phi};
  RandomStream rng(ctx.seed);

  std::vector<double> z_rows;
  std::vector<double> c_rows;
  for (const auto& entry : entries) {
    if (entry.pv.empty()) {
      throw ValidationError(entry.measurements +
                            " has no P-V reference; alignment needs curve-mode datasets");
    }
    const MeasurementCsv meas = read_measurement_csv(entry.measurements);
    const CurveCsv curve = read_curve_csv(entry.pv);
    if (meas.columns.size() != curve.lambda.size()) {
      throw DimensionMismatch(entry.measurements + " and " + entry.pv +
                              " have different sample counts");
    }
    const auto it =
        std::find(curve.bus_ids.begin(), curve.bus_ids.end(), entry.monitored_bus);
    if (it == curve.bus_ids.end()) throw UnknownBus(entry.monitored_bus);
    const auto v_col = static_cast<Eigen::Index>(it - curve.bus_ids.begin());

    for (std::size_t j = 0; j < meas.columns.size(); ++j) {
      const Feature f = extract_feature(ckpt.model, meas.columns[j], temp, rng);
      z_rows.push_back(f.z_hat[0]);
      z_rows.push_back(f.z_hat[1]);
      c_rows.push_back(curve.lambda[j]);
      c_rows.push_back(curve.v_mag(static_cast<Eigen::Index>(j), v_col));
    }
  }

  const auto rows = static_cast<Eigen::Index>(z_rows.size() / 2);
  Eigen::MatrixXd z(rows, 2);
  Eigen::MatrixXd c(rows, 2);
  for (Eigen::Index r = 0; r < rows; ++r) {
    z(r, 0) = z_rows[static_cast<std::size_t>(2 * r)];
    z(r, 1) = z_rows[static_cast<std::size_t>(2 * r) + 1];
    c(r, 0) = c_rows[static_cast<std::size_t>(2 * r)];
    c(r, 1) = c_rows[static_cast<std::size_t>(2 * r) + 1];
  }

  const AlignmentMap map = fit_alignment(z, c);
  const double residual = (z.transpose() * (z * map.beta - c)).lpNorm<Eigen::Infinity>();

  ckpt.alignment = map;
  ckpt.phi = o.phi;
  const auto model_path = out_path(ctx, o.out);
  save_checkpoint(model_path, ckpt);

  std::printf("fit alignment on %lld samples; normal-equation residual %.3e\n",
              static_cast<long long>(rows), residual);
  std::printf("beta = [[%.6f, %.6f], [%.6f, %.6f]]\n", map.beta(0, 0), map.beta(0, 1),
              map.beta(1, 0), map.beta(1, 1));
  std::printf("aligned model written to %s\n", model_path.c_str());

  json meta{{"command", "fit-alignment"},
            {"model_in", o.model},
            {"data", o.data},
            {"phi", o.phi},
            {"seed", ctx.seed},
            {"rows", rows},
            {"normal_residual", residual},
            {"beta",
             json::array({json::array({map.beta(0, 0), map.beta(0, 1)}),
                          json::array({map.beta(1, 0), map.beta(1, 1)})})}};
  write_text_file(model_path.string() + ".meta.json", meta.dump(1) + "\n");
}

struct MonitorOpts {
  std::string model;
  std::string input;
  std::string out = "monitor.csv";
  double phi = -1.0;  // negative: use the checkpoint's value
};

void run_monitor(const Context& ctx, const MonitorOpts& o) {
  if (o.model.empty()) throw EmptyRequest("no model checkpoint given (--model)");
  if (o.input.empty()) throw EmptyRequest("no measurement CSV given (--input)");
  const Checkpoint ckpt = load_checkpoint(o.model);
  if (!ckpt.alignment) {
    throw ValidationError("checkpoint has no alignment map; run fit-alignment first");
  }

  TemperatureConfig temp;
  temp.phi = o.phi >= 0.0 ? o.phi : ckpt.phi.value_or(temp.phi);

  const MeasurementCsv csv = read_measurement_csv(o.input);
  RandomStream rng(ctx.seed);
  const MonitorResult result =
      monitor_stream(ckpt.model, *ckpt.alignment, temp, csv.columns, rng,
                     csv.ticks.empty() ? 0 : csv.ticks.front());

  for (std::size_t i = 0; i < result.errors.size(); ++i) {
    if (i == 5) {
      std::cerr << "... " << result.errors.size() - 5 << " more tick errors suppressed\n";
      break;
    }
    std::cerr << "tick " << result.errors[i].first << ": " << result.errors[i].second << "\n";
  }

  const auto csv_path = out_path(ctx, o.out);
  write_monitor_csv(csv_path, result);
  std::printf("monitored %zu ticks (%zu errors) at phi %g\n", result.records.size(),
              result.errors.size(), temp.phi);
  std::printf("output written to %s\n", csv_path.c_str());

  json meta{{"command", "monitor"}, {"model", o.model},        {"input", o.input},
            {"phi", temp.phi},      {"seed", ctx.seed},        {"ticks", result.records.size()},
            {"errors", result.errors.size()}};
  write_text_file(csv_path.string() + ".meta.json", meta.dump(1) + "\n");
}

}  // namespace

void register_model_commands(CLI::App& app, Context& ctx) {
  auto train_opts = std::make_shared<TrainOpts>();
  train_opts->encoder_hidden =
      config_value(ctx.config, "train.encoder_hidden", std::vector<int>{100, 100});
  train_opts->decoder_hidden =
      config_value(ctx.config, "train.decoder_hidden", std::vector<int>{});
  train_opts->latent = config_value(ctx.config, "train.latent", 2);
  train_opts->likelihood =
      config_value<std::string>(ctx.config, "train.likelihood", "gaussian");
  train_opts->init = config_value<std::string>(ctx.config, "train.init", "scaled");
  train_opts->config.learning_rate =
      config_value(ctx.config, "train.learning_rate", train_opts->config.learning_rate);
  train_opts->config.batch_size =
      config_value(ctx.config, "train.batch_size", train_opts->config.batch_size);
  train_opts->config.max_steps =
      config_value(ctx.config, "train.max_steps", train_opts->config.max_steps);
  train_opts->config.stop_window =
      config_value(ctx.config, "train.stop_window", train_opts->config.stop_window);
  train_opts->config.log_every =
      config_value(ctx.config, "train.log_every", train_opts->config.log_every);
  train_opts->config.stop_rel_improvement = config_value(
      ctx.config, "train.stop_rel_improvement", train_opts->config.stop_rel_improvement);

  auto* train_cmd =
      app.add_subcommand("train", "train the latent-feature model on measurement files");
  train_cmd->fallthrough();
  train_cmd->add_option("--data", train_opts->data, "dataset manifest JSON");
  train_cmd->add_option("--out", train_opts->out, "checkpoint filename")->capture_default_str();
  train_cmd->add_option("--log", train_opts->log_csv, "write per-step loss CSV");
  train_cmd->add_option("--encoder-hidden", train_opts->encoder_hidden,
                        "encoder hidden widths (comma separated)")
      ->delimiter(',');
  train_cmd->add_option("--decoder-hidden", train_opts->decoder_hidden,
                        "decoder hidden widths (default: mirrored encoder)")
      ->delimiter(',');
  train_cmd->add_option("--latent", train_opts->latent, "latent dimension")
      ->capture_default_str();
  train_cmd->add_option("--likelihood", train_opts->likelihood, "gaussian or bernoulli")
      ->capture_default_str();
  train_cmd->add_option("--init", train_opts->init, "weight init: scaled or paper")
      ->capture_default_str();
  train_cmd->add_option("--lr", train_opts->config.learning_rate, "Adam learning rate")
      ->capture_default_str();
  train_cmd->add_option("--batch", train_opts->config.batch_size, "batch size")
      ->capture_default_str();
  train_cmd->add_option("--max-steps", train_opts->config.max_steps, "training step cap")
      ->capture_default_str();
  train_cmd->add_option("--stop-window", train_opts->config.stop_window,
                        "early-stop comparison window (in logged means)")
      ->capture_default_str();
  train_cmd->add_option("--log-every", train_opts->config.log_every,
                        "steps per logged loss mean")
      ->capture_default_str();
  train_cmd->callback([train_opts, &ctx] {
    train_opts->config.seed = config_value(ctx.config, "train.seed", ctx.seed);
    run_train(ctx, *train_opts);
  });

  auto fit_opts = std::make_shared<FitAlignmentOpts>();
  fit_opts->phi = config_value(ctx.config, "temperature.phi", fit_opts->phi);
  auto* fit_cmd = app.add_subcommand(
      "fit-alignment", "fit the least-squares map from latent features to (lambda, V)");
  fit_cmd->fallthrough();
  fit_cmd->add_option("--model", fit_opts->model, "trained checkpoint");
  fit_cmd->add_option("--data", fit_opts->data, "dataset manifest JSON");
  fit_cmd->add_option("--out", fit_opts->out, "aligned checkpoint filename")
      ->capture_default_str();
  fit_cmd->add_option("--phi", fit_opts->phi, "sampling temperature stored with the map")
      ->capture_default_str();
  fit_cmd->callback([fit_opts, &ctx] { run_fit_alignment(ctx, *fit_opts); });

  auto mon_opts = std::make_shared<MonitorOpts>();
  auto* mon_cmd = app.add_subcommand(
      "monitor", "stream a measurement CSV through the model into index estimates");
  mon_cmd->fallthrough();
  mon_cmd->add_option("--model", mon_opts->model, "aligned checkpoint");
  mon_cmd->add_option("--input", mon_opts->input, "measurement CSV");
  mon_cmd->add_option("--out", mon_opts->out, "monitoring CSV filename")
      ->capture_default_str();
  mon_cmd->add_option("--phi", mon_opts->phi,
                      "sampling temperature (default: the checkpoint's stored value)");
  mon_cmd->callback([mon_opts, &ctx] { run_monitor(ctx, *mon_opts); });
}

}  // namespace vstab::cli
