#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "vstab/grid.hpp"

namespace vstab {

struct SolverOptions {
  double tolerance = 1e-8;  // pu mismatch
  int max_iterations = 30;
  bool enforce_q_limits = true;
  bool flat_start = false;
  int max_q_limit_rounds = 10;
};

enum class SolveStatus {
  converged,
  iteration_limit,
  singular_jacobian,
  non_finite,
};

const char* to_string(SolveStatus s);

struct PowerFlowSolution {
  Eigen::VectorXd v_mag;  // pu, by bus position
  Eigen::VectorXd v_ang;  // rad
  Eigen::VectorXd p_inj;  // pu net injections computed from (V, theta)
  Eigen::VectorXd q_inj;
  bool converged = false;
  int iterations = 0;        // mismatch evaluations across all q-limit rounds
  double max_mismatch = 0.0; // pu, at the returned point
  SolveStatus status = SolveStatus::iteration_limit;
  std::vector<BusKind> kinds;        // effective kinds after q-limit switching
  std::vector<int> q_limited_buses;  // bus ids pinned at a reactive limit
};

/// Specified injections and bus roles for the mismatch equations, all in
/// per-unit. Solvers mutate copies of this when enforcing reactive limits.
struct InjectionSpec {
  Eigen::VectorXd p;  // target net active injection per bus
  Eigen::VectorXd q;  // target net reactive injection (meaningful at PQ buses)
  std::vector<BusKind> kinds;
  Eigen::VectorXd v_setpoint;  // PV/slack magnitude targets
};

InjectionSpec injection_spec(const GridCase& grid);

/// Net injections implied by a voltage profile: S = diag(V) conj(Y V).
void compute_injections(const AdmittanceMatrix& y, const Eigen::VectorXd& v_mag,
                        const Eigen::VectorXd& v_ang, Eigen::VectorXd& p_out,
                        Eigen::VectorXd& q_out);

/// Mismatch residual [dP at non-slack buses; dQ at PQ buses], computed minus
/// specified, in the solver ordering (bus position order within each block).
Eigen::VectorXd mismatch_vector(const AdmittanceMatrix& y, const InjectionSpec& spec,
                                const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang);

/// Analytic Jacobian of mismatch_vector with respect to
/// [theta at non-slack buses; V at PQ buses], same ordering as the residual.
Eigen::MatrixXd mismatch_jacobian(const AdmittanceMatrix& y, const InjectionSpec& spec,
                                  const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang);

struct StartPoint {
  Eigen::VectorXd v_mag;
  Eigen::VectorXd v_ang;
};

/// Full Newton-Raphson in polar coordinates. With enforce_q_limits, PV buses
/// whose aggregated generator reactive output leaves [q_min, q_max] are
/// switched to PQ pinned at the violated limit and the solve repeats; a
/// switched bus recovers PV status only when its voltage set-point becomes
/// feasible again. Non-convergence is reported in the solution status, not
/// thrown: near the nose it is an expected outcome.
PowerFlowSolution solve_newton(const GridCase& grid, const AdmittanceMatrix& y,
                               const SolverOptions& opts = {},
                               const std::optional<StartPoint>& warm = std::nullopt);

/// Aggregated in-service generator reactive range per bus, per-unit.
struct BusQRange {
  Eigen::VectorXd q_min;
  Eigen::VectorXd q_max;
  std::vector<bool> has_gen;
};
BusQRange bus_q_ranges(const GridCase& grid);

}  // namespace vstab
