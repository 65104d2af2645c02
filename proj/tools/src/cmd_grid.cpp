#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <memory>

#include "app.hpp"
#include "vstab/csv.hpp"
#include "vstab/pipeline.hpp"

namespace vstab::cli {
namespace {

constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;

struct CaseInfoOpts {
  std::string case_path;
  bool as_json = false;
};

void run_case_info(const Context& ctx, const CaseInfoOpts& o) {
  const GridCase grid = load_case_checked(case_path_or_config(ctx, o.case_path));
  int pq = 0;
  int pv = 0;
  double pd = 0.0;
  double qd = 0.0;
  for (const auto& bus : grid.buses) {
    pq += bus.kind == BusKind::PQ;
    pv += bus.kind == BusKind::PV;
    pd += bus.p_demand;
    qd += bus.q_demand;
  }
  double pg = 0.0;
  int in_service = 0;
  for (const auto& gen : grid.gens) {
    if (!gen.status) continue;
    ++in_service;
    pg += gen.p_out;
  }
  const int slack_id = grid.buses[grid.slack_index()].id;
  const auto loads = load_buses(grid);

  if (o.as_json) {
    json j{{"name", grid.name},
           {"base_mva", grid.base_mva},
           {"buses", grid.buses.size()},
           {"pq_buses", pq},
           {"pv_buses", pv},
           {"slack_bus", slack_id},
           {"generators", grid.gens.size()},
           {"generators_in_service", in_service},
           {"branches", grid.branches.size()},
           {"total_p_demand_mw", pd},
           {"total_q_demand_mvar", qd},
           {"scheduled_generation_mw", pg},
           {"load_buses", loads}};
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::printf("case %s\n", grid.name.c_str());
  std::printf("  base        %g MVA\n", grid.base_mva);
  std::printf("  buses       %zu (%d PQ, %d PV, slack at bus %d)\n", grid.buses.size(), pq, pv,
              slack_id);
  std::printf("  generators  %zu (%d in service, %g MW scheduled)\n", grid.gens.size(),
              in_service, pg);
  std::printf("  branches    %zu\n", grid.branches.size());
  std::printf("  demand      %g MW, %g MVAr across %zu load buses\n", pd, qd, loads.size());
}

struct PfRunOpts {
  std::string case_path;
  std::string out;
  SolverOptions solver;
};

void run_pf(const Context& ctx, const PfRunOpts& o) {
  const GridCase grid = load_case_checked(case_path_or_config(ctx, o.case_path));
  const AdmittanceMatrix ybus = build_ybus(grid);
  const PowerFlowSolution sol = solve_newton(grid, ybus, o.solver);

  if (!sol.converged) {
    std::cerr << "did not converge after " << sol.iterations
              << " iterations; max mismatch " << sol.max_mismatch << "\n";
    throw NotConverged(std::string("power flow did not converge: ") + to_string(sol.status));
  }
  std::printf("converged in %d iterations, max mismatch %.3e pu\n", sol.iterations,
              sol.max_mismatch);
  if (!sol.q_limited_buses.empty()) {
    std::printf("reactive limits pinned at:");
    for (int id : sol.q_limited_buses) std::printf(" %d", id);
    std::printf("\n");
  }
  std::printf("%5s %-6s %9s %9s %10s %10s\n", "bus", "kind", "vm_pu", "va_deg", "p_mw", "q_mvar");
  for (std::size_t i = 0; i < grid.buses.size(); ++i) {
    std::printf("%5d %-6s %9.5f %9.4f %10.3f %10.3f\n", grid.buses[i].id,
                to_string(sol.kinds[i]), sol.v_mag[static_cast<Eigen::Index>(i)],
                sol.v_ang[static_cast<Eigen::Index>(i)] * kRadToDeg,
                sol.p_inj[static_cast<Eigen::Index>(i)] * grid.base_mva,
                sol.q_inj[static_cast<Eigen::Index>(i)] * grid.base_mva);
  }

  if (!o.out.empty()) {
    json buses = json::array();
    for (std::size_t i = 0; i < grid.buses.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      buses.push_back(json{{"id", grid.buses[i].id},
                           {"kind", to_string(sol.kinds[i])},
                           {"v_mag_pu", sol.v_mag[k]},
                           {"v_ang_rad", sol.v_ang[k]},
                           {"p_mw", sol.p_inj[k] * grid.base_mva},
                           {"q_mvar", sol.q_inj[k] * grid.base_mva}});
    }
    json report{{"command", "pf run"},
                {"case", case_path_or_config(ctx, o.case_path)},
                {"solver", solver_to_json(o.solver)},
                {"converged", sol.converged},
                {"iterations", sol.iterations},
                {"max_mismatch", sol.max_mismatch},
                {"q_limited_buses", sol.q_limited_buses},
                {"buses", buses}};
    const auto path = out_path(ctx, o.out);
    write_text_file(path, report.dump(1) + "\n");
    std::printf("solution written to %s\n", path.c_str());
  }
}

struct TraceOpts {
  std::string case_path;
  std::vector<int> buses;
  std::vector<double> factors;
  std::string out = "curve.csv";
  std::string summary;
  ContinuationOptions trace;
};

void run_trace(const Context& ctx, const TraceOpts& o) {
  const std::string case_path = case_path_or_config(ctx, o.case_path);
  const GridCase grid = load_case_checked(case_path);

  std::vector<int> buses = o.buses;
  std::vector<double> factors = o.factors;
  if (buses.empty()) {
    if (const json* node = config_find(ctx.config, "direction.buses")) {
      buses = node->get<std::vector<int>>();
    }
    if (const json* node = config_find(ctx.config, "direction.factors")) {
      factors = node->get<std::vector<double>>();
    }
  }
  if (buses.empty()) {
    throw EmptyRequest("no direction given (flag --bus or config key \"direction.buses\")");
  }

  const LoadDirection dir = factors.empty() ? active_direction(grid, buses)
                                            : demand_direction(grid, buses, factors);
  const PVCurve curve = trace_pv_curve(grid, dir, o.trace);

  int monitored = buses.front();
  for (int id : buses) {
    if (grid.buses[grid.bus_index(id)].p_demand >
        grid.buses[grid.bus_index(monitored)].p_demand) {
      monitored = id;
    }
  }
  const auto [lambda_max, v_nose] = nose_point(curve, monitored);

  int q_events = 0;
  for (const auto& pt : curve.points) q_events += pt.q_limit_event;
  std::printf("traced %zu points (%d reactive-limit events)\n", curve.points.size(), q_events);
  std::printf("lambda_max %.6f at point %zu; V(bus %d) at the nose %.5f pu\n", lambda_max,
              curve.nose_index, monitored, v_nose);

  const auto csv_path = out_path(ctx, o.out);
  write_curve_csv(csv_path, curve);
  std::printf("curve written to %s\n", csv_path.c_str());

  if (!o.summary.empty()) {
    json j{{"command", "cpflow trace"},
           {"case", case_path},
           {"buses", buses},
           {"factors", factors},
           {"trace", trace_to_json(o.trace)},
           {"lambda_max", lambda_max},
           {"nose_index", curve.nose_index},
           {"nose_bus", monitored},
           {"nose_v_pu", v_nose},
           {"points", curve.points.size()},
           {"q_limit_events", q_events},
           {"curve_csv", o.out}};
    const auto path = out_path(ctx, o.summary);
    write_text_file(path, j.dump(1) + "\n");
    std::printf("summary written to %s\n", path.c_str());
  }
}

}  // namespace

void register_grid_commands(CLI::App& app, Context& ctx) {
  auto* case_cmd = app.add_subcommand("case", "case file inspection");
  case_cmd->require_subcommand(1);
  case_cmd->fallthrough();

  auto info_opts = std::make_shared<CaseInfoOpts>();
  auto* info = case_cmd->add_subcommand("info", "summarize a case file");
  info->fallthrough();
  info->add_option("--case", info_opts->case_path, "case file (.m or .json)");
  info->add_flag("--json", info_opts->as_json, "machine-readable summary");
  info->callback([info_opts, &ctx] { run_case_info(ctx, *info_opts); });

  auto* pf_cmd = app.add_subcommand("pf", "power flow");
  pf_cmd->require_subcommand(1);
  pf_cmd->fallthrough();

  auto pf_opts = std::make_shared<PfRunOpts>();
  pf_opts->solver = solver_defaults(ctx.config);
  auto* pf_run = pf_cmd->add_subcommand("run", "solve the AC power flow");
  pf_run->fallthrough();
  pf_run->add_option("--case", pf_opts->case_path, "case file (.m or .json)");
  pf_run->add_option("--out", pf_opts->out, "write the solution as JSON");
  add_solver_options(*pf_run, pf_opts->solver);
  pf_run->callback([pf_opts, &ctx] { run_pf(ctx, *pf_opts); });

  auto* cp_cmd = app.add_subcommand("cpflow", "continuation power flow");
  cp_cmd->require_subcommand(1);
  cp_cmd->fallthrough();

  auto tr_opts = std::make_shared<TraceOpts>();
  tr_opts->trace = trace_defaults(ctx.config);
  auto* trace = cp_cmd->add_subcommand("trace", "trace a P-V curve along a load direction");
  trace->fallthrough();
  trace->add_option("--case", tr_opts->case_path, "case file (.m or .json)");
  trace->add_option("--bus", tr_opts->buses, "bus whose load grows (repeatable)")
      ->delimiter(',');
  trace
      ->add_option("--factor", tr_opts->factors,
                   "per-bus growth factor; scales P and Q together (default: active power "
                   "only, unit rate)")
      ->delimiter(',');
  trace->add_option("--out", tr_opts->out, "curve CSV filename")->capture_default_str();
  trace->add_option("--summary", tr_opts->summary, "write a JSON trace summary");
  add_trace_options(*trace, tr_opts->trace);
  trace->callback([tr_opts, &ctx] { run_trace(ctx, *tr_opts); });
}

}  // namespace vstab::cli
