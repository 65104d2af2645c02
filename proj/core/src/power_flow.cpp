#include "vstab/power_flow.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <complex>

#include "vstab/errors.hpp"

namespace vstab {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::iteration_limit: return "iteration limit";
    case SolveStatus::singular_jacobian: return "singular jacobian";
    case SolveStatus::non_finite: return "non-finite values";
  }
  return "?";
}

InjectionSpec injection_spec(const GridCase& grid) {
  InjectionSpec spec;
  spec.p = net_active_injection(grid);
  spec.q = net_reactive_injection(grid);
  spec.kinds.reserve(grid.buses.size());
  for (const auto& b : grid.buses) spec.kinds.push_back(b.kind);
  spec.v_setpoint = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.buses.size()));
  for (std::size_t i = 0; i < grid.buses.size(); ++i) {
    spec.v_setpoint[static_cast<Eigen::Index>(i)] = grid.buses[i].v_mag_init;
  }
  // A regulating generator overrides the bus voltage target.
  for (const auto& g : grid.gens) {
    if (!g.status) continue;
    const int i = grid.bus_index(g.bus);
    if (spec.kinds[static_cast<std::size_t>(i)] != BusKind::PQ) spec.v_setpoint[i] = g.v_set;
  }
  return spec;
}

BusQRange bus_q_ranges(const GridCase& grid) {
  const auto n = static_cast<Eigen::Index>(grid.buses.size());
  BusQRange r;
  r.q_min = Eigen::VectorXd::Zero(n);
  r.q_max = Eigen::VectorXd::Zero(n);
  r.has_gen.assign(grid.buses.size(), false);
  for (const auto& g : grid.gens) {
    if (!g.status) continue;
    const int i = grid.bus_index(g.bus);
    r.q_min[i] += g.q_min / grid.base_mva;
    r.q_max[i] += g.q_max / grid.base_mva;
    r.has_gen[static_cast<std::size_t>(i)] = true;
  }
  return r;
}

void compute_injections(const AdmittanceMatrix& y, const Eigen::VectorXd& v_mag,
                        const Eigen::VectorXd& v_ang, Eigen::VectorXd& p_out,
                        Eigen::VectorXd& q_out) {
  const auto n = y.size();
  Eigen::VectorXcd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = std::polar(v_mag[i], v_ang[i]);
  const Eigen::VectorXcd s = v.cwiseProduct((y.y * v).conjugate());
  p_out = s.real();
  q_out = s.imag();
}

namespace {

struct Partition {
  std::vector<int> ang_buses;  // non-slack, solver order
  std::vector<int> vm_buses;   // PQ, solver order
};

Partition make_partition(const std::vector<BusKind>& kinds) {
  Partition part;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (kinds[i] != BusKind::Slack) part.ang_buses.push_back(static_cast<int>(i));
    if (kinds[i] == BusKind::PQ) part.vm_buses.push_back(static_cast<int>(i));
  }
  return part;
}

}  // namespace

Eigen::VectorXd mismatch_vector(const AdmittanceMatrix& y, const InjectionSpec& spec,
                                const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang) {
  Eigen::VectorXd p, q;
  compute_injections(y, v_mag, v_ang, p, q);
  const Partition part = make_partition(spec.kinds);
  Eigen::VectorXd f(part.ang_buses.size() + part.vm_buses.size());
  Eigen::Index r = 0;
  for (int i : part.ang_buses) f[r++] = p[i] - spec.p[i];
  for (int i : part.vm_buses) f[r++] = q[i] - spec.q[i];
  return f;
}

Eigen::MatrixXd mismatch_jacobian(const AdmittanceMatrix& y, const InjectionSpec& spec,
                                  const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang) {
  const auto n = y.size();
  Eigen::VectorXd p, q;
  compute_injections(y, v_mag, v_ang, p, q);
  const Partition part = make_partition(spec.kinds);
  const auto na = static_cast<Eigen::Index>(part.ang_buses.size());
  const auto nv = static_cast<Eigen::Index>(part.vm_buses.size());
  Eigen::MatrixXd jac(na + nv, na + nv);

  const Eigen::MatrixXd g = y.y.real();
  const Eigen::MatrixXd b = y.y.imag();

  auto dp_dang = [&](int i, int j) {
    if (i == j) return -q[i] - b(i, i) * v_mag[i] * v_mag[i];
    const double t = v_ang[i] - v_ang[j];
    return v_mag[i] * v_mag[j] * (g(i, j) * std::sin(t) - b(i, j) * std::cos(t));
  };
  auto dp_dvm = [&](int i, int j) {
    if (i == j) return p[i] / v_mag[i] + g(i, i) * v_mag[i];
    const double t = v_ang[i] - v_ang[j];
    return v_mag[i] * (g(i, j) * std::cos(t) + b(i, j) * std::sin(t));
  };
  auto dq_dang = [&](int i, int j) {
    if (i == j) return p[i] - g(i, i) * v_mag[i] * v_mag[i];
    const double t = v_ang[i] - v_ang[j];
    return -v_mag[i] * v_mag[j] * (g(i, j) * std::cos(t) + b(i, j) * std::sin(t));
  };
  auto dq_dvm = [&](int i, int j) {
    if (i == j) return q[i] / v_mag[i] - b(i, i) * v_mag[i];
    const double t = v_ang[i] - v_ang[j];
    return v_mag[i] * (g(i, j) * std::sin(t) - b(i, j) * std::cos(t));
  };

  for (Eigen::Index r = 0; r < na; ++r) {
    const int i = part.ang_buses[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < na; ++c) jac(r, c) = dp_dang(i, part.ang_buses[static_cast<std::size_t>(c)]);
    for (Eigen::Index c = 0; c < nv; ++c) jac(r, na + c) = dp_dvm(i, part.vm_buses[static_cast<std::size_t>(c)]);
  }
  for (Eigen::Index r = 0; r < nv; ++r) {
    const int i = part.vm_buses[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < na; ++c) jac(na + r, c) = dq_dang(i, part.ang_buses[static_cast<std::size_t>(c)]);
    for (Eigen::Index c = 0; c < nv; ++c) jac(na + r, na + c) = dq_dvm(i, part.vm_buses[static_cast<std::size_t>(c)]);
  }
  (void)n;
  return jac;
}

namespace {

struct NewtonResult {
  SolveStatus status = SolveStatus::iteration_limit;
  int iterations = 0;
  double max_mismatch = 0.0;
};

// Core Newton iteration for a fixed bus-type partition. Mutates (v_mag, v_ang).
NewtonResult newton_iterate(const AdmittanceMatrix& y, const InjectionSpec& spec,
                            Eigen::VectorXd& v_mag, Eigen::VectorXd& v_ang, double tol,
                            int max_iterations) {
  const Partition part = make_partition(spec.kinds);
  NewtonResult res;
  for (int it = 1; it <= max_iterations; ++it) {
    res.iterations = it;
    const Eigen::VectorXd f = mismatch_vector(y, spec, v_mag, v_ang);
    res.max_mismatch = f.size() > 0 ? f.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(res.max_mismatch)) {
      res.status = SolveStatus::non_finite;
      return res;
    }
    if (res.max_mismatch <= tol) {
      res.status = SolveStatus::converged;
      return res;
    }
    if (it == max_iterations) break;

    const Eigen::MatrixXd jac = mismatch_jacobian(y, spec, v_mag, v_ang);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    if (lu.rcond() < 1e-14) {
      res.status = SolveStatus::singular_jacobian;
      return res;
    }
    const Eigen::VectorXd du = lu.solve(-f);
    if (!du.allFinite()) {
      res.status = SolveStatus::singular_jacobian;
      return res;
    }
    const auto na = static_cast<Eigen::Index>(part.ang_buses.size());
    for (Eigen::Index k = 0; k < na; ++k) v_ang[part.ang_buses[static_cast<std::size_t>(k)]] += du[k];
    for (std::size_t k = 0; k < part.vm_buses.size(); ++k) {
      v_mag[part.vm_buses[k]] += du[na + static_cast<Eigen::Index>(k)];
    }
  }
  res.status = SolveStatus::iteration_limit;
  return res;
}

}  // namespace

PowerFlowSolution solve_newton(const GridCase& grid, const AdmittanceMatrix& y,
                               const SolverOptions& opts, const std::optional<StartPoint>& warm) {
  const auto n = static_cast<Eigen::Index>(grid.buses.size());
  InjectionSpec spec = injection_spec(grid);
  const BusQRange qr = bus_q_ranges(grid);
  const Eigen::VectorXd q_load = [&] {
    Eigen::VectorXd q(n);
    for (Eigen::Index i = 0; i < n; ++i) q[i] = grid.buses[static_cast<std::size_t>(i)].q_demand / grid.base_mva;
    return q;
  }();

  Eigen::VectorXd v_mag(n), v_ang(n);
  if (warm) {
    if (warm->v_mag.size() != n || warm->v_ang.size() != n) {
      throw DimensionMismatch("warm start size does not match bus count");
    }
    v_mag = warm->v_mag;
    v_ang = warm->v_ang;
  } else if (opts.flat_start) {
    v_mag.setOnes();
    const double slack_ang = grid.buses[static_cast<std::size_t>(grid.slack_index())].v_ang_init;
    v_ang.setConstant(slack_ang);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      v_mag[i] = grid.buses[static_cast<std::size_t>(i)].v_mag_init;
      v_ang[i] = grid.buses[static_cast<std::size_t>(i)].v_ang_init;
    }
  }
  // PV and slack magnitudes start at their targets.
  for (Eigen::Index i = 0; i < n; ++i) {
    if (spec.kinds[static_cast<std::size_t>(i)] != BusKind::PQ) v_mag[i] = spec.v_setpoint[i];
  }

  PowerFlowSolution sol;
  sol.kinds = spec.kinds;

  // Limit state per bus: 0 free, +1 pinned at q_max, -1 pinned at q_min.
  std::vector<int> pinned(static_cast<std::size_t>(n), 0);
  const double limit_tol = 1e-9;

  int total_iterations = 0;
  NewtonResult nr;
  for (int round = 0; round <= opts.max_q_limit_rounds; ++round) {
    nr = newton_iterate(y, spec, v_mag, v_ang, opts.tolerance, opts.max_iterations);
    total_iterations += nr.iterations;
    if (nr.status != SolveStatus::converged || !opts.enforce_q_limits) break;

    Eigen::VectorXd p, q;
    compute_injections(y, v_mag, v_ang, p, q);
    bool switched = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (grid.buses[ui].kind != BusKind::PV) continue;  // slack never limited
      if (pinned[ui] == 0) {
        if (spec.kinds[ui] != BusKind::PV) continue;
        const double q_gen = q[i] + q_load[i];
        if (q_gen > qr.q_max[i] + limit_tol) {
          spec.kinds[ui] = BusKind::PQ;
          spec.q[i] = qr.q_max[i] - q_load[i];
          pinned[ui] = +1;
          switched = true;
        } else if (q_gen < qr.q_min[i] - limit_tol) {
          spec.kinds[ui] = BusKind::PQ;
          spec.q[i] = qr.q_min[i] - q_load[i];
          pinned[ui] = -1;
          switched = true;
        }
      } else {
        // Pinned at q_max the bus sits below its set-point; if the solved
        // voltage has risen above it, the generator could hold the set-point
        // with less reactive output, so PV status is feasible again.
        const bool recover = (pinned[ui] == +1 && v_mag[i] > spec.v_setpoint[i] + limit_tol) ||
                             (pinned[ui] == -1 && v_mag[i] < spec.v_setpoint[i] - limit_tol);
        if (recover) {
          spec.kinds[ui] = BusKind::PV;
          v_mag[i] = spec.v_setpoint[i];
          spec.q[i] = net_reactive_injection(grid)[i];
          pinned[ui] = 0;
          switched = true;
        }
      }
    }
    if (!switched) break;
  }

  sol.v_mag = v_mag;
  sol.v_ang = v_ang;
  compute_injections(y, v_mag, v_ang, sol.p_inj, sol.q_inj);
  sol.converged = nr.status == SolveStatus::converged;
  sol.status = nr.status;
  sol.iterations = total_iterations;
  sol.max_mismatch = nr.max_mismatch;
  sol.kinds = spec.kinds;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (pinned[static_cast<std::size_t>(i)] != 0) {
      sol.q_limited_buses.push_back(grid.buses[static_cast<std::size_t>(i)].id);
    }
  }
  return sol;
}

}  // namespace vstab
