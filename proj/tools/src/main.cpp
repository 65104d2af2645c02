#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "app.hpp"
#include "vstab/errors.hpp"

namespace {

// --config must be known before CLI11 parses, so option defaults can come
// from the file itself.
std::string scan_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voltage stability toolkit: power flow, continuation tracing, "
               "synthetic PMU data, latent-feature training and monitoring"};
  app.require_subcommand(1);

  vstab::cli::Context ctx;
  try {
    const std::string config_path = scan_config_path(argc, argv);
    if (!config_path.empty()) ctx.config = vstab::cli::load_json_file(config_path);
    ctx.out_dir = vstab::cli::config_value<std::string>(ctx.config, "out_dir", ".");
    ctx.seed = vstab::cli::config_value<std::uint64_t>(ctx.config, "seed", 0);

    std::string config_flag;
    app.add_option("--config", config_flag, "JSON run configuration; flags override its values");
    app.add_option("--seed", ctx.seed, "root random seed")->capture_default_str();
    app.add_option("--out-dir", ctx.out_dir, "directory for output files")
        ->capture_default_str();

    vstab::cli::register_grid_commands(app, ctx);
    vstab::cli::register_dataset_commands(app, ctx);
    vstab::cli::register_model_commands(app, ctx);
    vstab::cli::register_eval_commands(app, ctx);

    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const vstab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
