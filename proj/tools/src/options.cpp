#include <CLI11.hpp>

#include "app.hpp"

namespace vstab::cli {

ContinuationOptions trace_defaults(const json& config) {
  ContinuationOptions opts;
  opts.initial_step = config_value(config, "trace.initial_step", opts.initial_step);
  opts.min_step = config_value(config, "trace.min_step", opts.min_step);
  opts.max_points = config_value(config, "trace.max_points", opts.max_points);
  opts.trace_lower_branch = config_value(config, "trace.lower_branch", opts.trace_lower_branch);
  opts.lower_branch_stop_fraction =
      config_value(config, "trace.stop_fraction", opts.lower_branch_stop_fraction);
  opts.solver = solver_defaults(config);
  return opts;
}

void add_trace_options(CLI::App& cmd, ContinuationOptions& opts) {
  cmd.add_option("--initial-step", opts.initial_step, "predictor step size")
      ->capture_default_str();
  cmd.add_option("--min-step", opts.min_step, "smallest step before the trace gives up")
      ->capture_default_str();
  cmd.add_option("--max-points", opts.max_points, "cap on accepted curve points")
      ->capture_default_str();
  cmd.add_flag("--lower-branch,!--no-lower-branch", opts.trace_lower_branch,
               "continue past the nose down the lower branch");
  cmd.add_option("--stop-fraction", opts.lower_branch_stop_fraction,
                 "stop the lower branch when lambda falls below this fraction of the nose")
      ->capture_default_str();
}

SolverOptions solver_defaults(const json& config) {
  SolverOptions opts;
  opts.tolerance = config_value(config, "solver.tolerance", opts.tolerance);
  opts.max_iterations = config_value(config, "solver.max_iterations", opts.max_iterations);
  opts.enforce_q_limits = config_value(config, "solver.q_limits", opts.enforce_q_limits);
  opts.flat_start = config_value(config, "solver.flat_start", opts.flat_start);
  opts.max_q_limit_rounds =
      config_value(config, "solver.max_q_limit_rounds", opts.max_q_limit_rounds);
  return opts;
}

void add_solver_options(CLI::App& cmd, SolverOptions& opts) {
  cmd.add_option("--tolerance", opts.tolerance, "mismatch convergence tolerance (pu)")
      ->capture_default_str();
  cmd.add_option("--max-iterations", opts.max_iterations, "Newton iteration cap")
      ->capture_default_str();
  cmd.add_flag("--q-limits,!--no-q-limits", opts.enforce_q_limits,
               "enforce generator reactive limits");
  cmd.add_flag("--flat-start", opts.flat_start, "start from 1.0 pu / 0 rad instead of the case profile");
}

NoiseModel noise_defaults(const json& config) {
  NoiseModel noise;
  noise.sigma_mag = config_value(config, "noise.sigma_mag", noise.sigma_mag);
  noise.sigma_ang = config_value(config, "noise.sigma_ang", noise.sigma_ang);
  noise.seed = config_value(config, "noise.seed", noise.seed);
  return noise;
}

void add_noise_options(CLI::App& cmd, NoiseModel& noise) {
  cmd.add_option("--noise-mag", noise.sigma_mag, "magnitude noise sigma (pu)")
      ->capture_default_str();
  cmd.add_option("--noise-ang", noise.sigma_ang, "angle noise sigma (rad)")
      ->capture_default_str();
  cmd.add_option("--noise-seed", noise.seed, "measurement noise seed")->capture_default_str();
}

json noise_to_json(const NoiseModel& noise) {
  return json{{"sigma_mag", noise.sigma_mag},
              {"sigma_ang", noise.sigma_ang},
              {"seed", noise.seed}};
}

json trace_to_json(const ContinuationOptions& opts) {
  return json{{"initial_step", opts.initial_step},
              {"min_step", opts.min_step},
              {"max_points", opts.max_points},
              {"lower_branch", opts.trace_lower_branch},
              {"stop_fraction", opts.lower_branch_stop_fraction},
              {"solver", solver_to_json(opts.solver)}};
}

json solver_to_json(const SolverOptions& opts) {
  return json{{"tolerance", opts.tolerance},
              {"max_iterations", opts.max_iterations},
              {"q_limits", opts.enforce_q_limits},
              {"flat_start", opts.flat_start},
              {"max_q_limit_rounds", opts.max_q_limit_rounds}};
}

}  // namespace vstab::cli
