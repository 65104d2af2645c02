#include "vstab/cpflow.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "vstab/errors.hpp"

namespace vstab {

LoadDirection LoadDirection::zeros(const GridCase& grid) {
  LoadDirection d;
  d.k_p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.buses.size()));
  d.k_q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.buses.size()));
  d.k_g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.gens.size()));
  return d;
}

LoadDirection LoadDirection::single_active(const GridCase& grid, int bus_id, double k) {
  LoadDirection d = zeros(grid);
  d.k_p[grid.bus_index(bus_id)] = k;
  return d;
}

bool LoadDirection::is_zero() const {
  auto nz = [](const Eigen::VectorXd& v) { return v.size() > 0 && v.cwiseAbs().maxCoeff() > 0.0; };
  return !(nz(k_p) || nz(k_q) || nz(k_g));
}

void LoadDirection::check_against(const GridCase& grid) const {
  const auto nb = static_cast<Eigen::Index>(grid.buses.size());
  const auto ng = static_cast<Eigen::Index>(grid.gens.size());
  if (k_p.size() != nb || k_q.size() != nb || k_g.size() != ng) {
    throw DimensionMismatch("load direction does not match case dimensions");
  }
  if (!k_p.allFinite() || !k_q.allFinite() || !k_g.allFinite()) {
    throw ValidationError("load direction factors must be finite");
  }
  if (is_zero()) throw ValidationError("load direction has no nonzero factor");
}

GridCase apply_lambda(const GridCase& grid, const LoadDirection& dir, double lambda) {
  dir.check_against(grid);
  if (!std::isfinite(lambda)) throw ValidationError("lambda must be finite");
  GridCase scaled = grid;
  for (std::size_t i = 0; i < scaled.buses.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    scaled.buses[i].p_demand *= (1.0 + lambda * dir.k_p[k]);
    scaled.buses[i].q_demand *= (1.0 + lambda * dir.k_q[k]);
  }
  for (std::size_t j = 0; j < scaled.gens.size(); ++j) {
    scaled.gens[j].p_out *= (1.0 + lambda * dir.k_g[static_cast<Eigen::Index>(j)]);
  }
  return scaled;
}

namespace {

// Continuation parameter: the loading factor or one PQ voltage magnitude.
struct Pin {
  bool is_lambda = true;
  int bus = -1;
};

// Trace state in full bus coordinates plus lambda; the solver-ordered views
// are assembled per step from the current bus kinds.
struct TraceState {
  Eigen::VectorXd v_mag;
  Eigen::VectorXd v_ang;
  double lambda = 0.0;
  std::vector<BusKind> kinds;
  std::vector<int> pinned;  // 0 free, +1 at q_max, -1 at q_min
};

struct Tangent {
  Eigen::VectorXd d_ang;  // full bus size, zero at slack
  Eigen::VectorXd d_vm;   // full bus size, zero outside PQ
  double d_lambda = 0.0;
};

class Tracer {
 public:
  Tracer(const GridCase& grid, const LoadDirection& dir, const ContinuationOptions& opts)
      : grid_(grid), dir_(dir), opts_(opts), y_(build_ybus(grid)), qr_(bus_q_ranges(grid)) {
    const auto n = static_cast<Eigen::Index>(grid.buses.size());
    base_spec_ = injection_spec(grid);
    p_rate_ = Eigen::VectorXd::Zero(n);
    q_rate_ = Eigen::VectorXd::Zero(n);
    q_load0_ = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& bus = grid.buses[static_cast<std::size_t>(i)];
      p_rate_[i] -= bus.p_demand * dir.k_p[i] / grid.base_mva;
      q_rate_[i] -= bus.q_demand * dir.k_q[i] / grid.base_mva;
      q_load0_[i] = bus.q_demand / grid.base_mva;
    }
    for (std::size_t j = 0; j < grid.gens.size(); ++j) {
      const auto& g = grid.gens[j];
      if (!g.status) continue;
      p_rate_[grid.bus_index(g.bus)] += g.p_out * dir.k_g[static_cast<Eigen::Index>(j)] / grid.base_mva;
    }
  }

  PVCurve run();

 private:
  InjectionSpec spec_at(const TraceState& s) const {
    InjectionSpec spec = base_spec_;
    spec.kinds = s.kinds;
    spec.p += s.lambda * p_rate_;
    spec.q += s.lambda * q_rate_;
    for (std::size_t i = 0; i < s.pinned.size(); ++i) {
      if (s.pinned[i] == 0) continue;
      const auto k = static_cast<Eigen::Index>(i);
      const double limit = s.pinned[i] > 0 ? qr_.q_max[k] : qr_.q_min[k];
      // Generator pinned at its limit; the load share still follows lambda.
      spec.q[k] = limit - q_load0_[k] * (1.0 + s.lambda * dir_.k_q[k]);
    }
    return spec;
  }

  // Rows of d(mismatch)/d(lambda) in solver order for the given kinds.
  Eigen::VectorXd dmismatch_dlambda(const std::vector<BusKind>& kinds) const {
    std::vector<double> rows;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      if (kinds[i] != BusKind::Slack) rows.push_back(-p_rate_[static_cast<Eigen::Index>(i)]);
    }
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      if (kinds[i] == BusKind::PQ) rows.push_back(-q_rate_[static_cast<Eigen::Index>(i)]);
    }
    return Eigen::Map<Eigen::VectorXd>(rows.data(), static_cast<Eigen::Index>(rows.size()));
  }

  std::vector<int> ang_buses(const std::vector<BusKind>& kinds) const {
    std::vector<int> v;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      if (kinds[i] != BusKind::Slack) v.push_back(static_cast<int>(i));
    }
    return v;
  }
  std::vector<int> vm_buses(const std::vector<BusKind>& kinds) const {
    std::vector<int> v;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      if (kinds[i] == BusKind::PQ) v.push_back(static_cast<int>(i));
    }
    return v;
  }

  int pin_position(const Pin& pin, const std::vector<int>& angs, const std::vector<int>& vms) const {
    if (pin.is_lambda) return static_cast<int>(angs.size() + vms.size());
    auto it = std::find(vms.begin(), vms.end(), pin.bus);
    if (it == vms.end()) return -1;
    return static_cast<int>(angs.size()) + static_cast<int>(it - vms.begin());
  }

  bool tangent_at(const TraceState& s, const Pin& pin, Tangent& out) const;
  bool correct(TraceState& s, const Pin& pin, double target, int& iters) const;
  bool enforce_limits_at_point(TraceState& s, bool& switched) const;
  CurvePoint make_point(const TraceState& s, int corrector_iters, bool event) const;

  const GridCase& grid_;
  const LoadDirection& dir_;
  const ContinuationOptions& opts_;
  AdmittanceMatrix y_;
  BusQRange qr_;
  InjectionSpec base_spec_;
  Eigen::VectorXd p_rate_, q_rate_, q_load0_;
};

bool Tracer::tangent_at(const TraceState& s, const Pin& pin, Tangent& out) const {
  const InjectionSpec spec = spec_at(s);
  const auto angs = ang_buses(s.kinds);
  const auto vms = vm_buses(s.kinds);
  const auto m = static_cast<Eigen::Index>(angs.size() + vms.size());
  const int pin_pos = pin_position(pin, angs, vms);
  if (pin_pos < 0) return false;

  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(m + 1, m + 1);
  aug.topLeftCorner(m, m) = mismatch_jacobian(y_, spec, s.v_mag, s.v_ang);
  aug.block(0, m, m, 1) = dmismatch_dlambda(s.kinds);
  aug(m, pin_pos) = 1.0;

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
  rhs[m] = 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(aug);
  if (lu.rcond() < 1e-14) return false;
  const Eigen::VectorXd t = lu.solve(rhs);
  if (!t.allFinite()) return false;

  out.d_ang = Eigen::VectorXd::Zero(s.v_ang.size());
  out.d_vm = Eigen::VectorXd::Zero(s.v_mag.size());
  for (std::size_t k = 0; k < angs.size(); ++k) out.d_ang[angs[k]] = t[static_cast<Eigen::Index>(k)];
  for (std::size_t k = 0; k < vms.size(); ++k) {
    out.d_vm[vms[k]] = t[static_cast<Eigen::Index>(angs.size() + k)];
  }
  out.d_lambda = t[m];
  return true;
}

bool Tracer::correct(TraceState& s, const Pin& pin, double target, int& iters) const {
  const auto angs = ang_buses(s.kinds);
  const auto vms = vm_buses(s.kinds);
  const auto m = static_cast<Eigen::Index>(angs.size() + vms.size());
  const int pin_pos = pin_position(pin, angs, vms);
  if (pin_pos < 0) return false;

  // Seed the pinned component exactly at its target.
  if (pin.is_lambda) {
    s.lambda = target;
  } else {
    s.v_mag[pin.bus] = target;
  }

  for (iters = 1; iters <= opts_.solver.max_iterations; ++iters) {
    const InjectionSpec spec = spec_at(s);
    const Eigen::VectorXd f = mismatch_vector(y_, spec, s.v_mag, s.v_ang);
    const double worst = f.size() > 0 ? f.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(worst)) return false;
    if (worst <= opts_.solver.tolerance) return true;
    if (iters == opts_.solver.max_iterations) return false;

    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(m + 1, m + 1);
    aug.topLeftCorner(m, m) = mismatch_jacobian(y_, spec, s.v_mag, s.v_ang);
    aug.block(0, m, m, 1) = dmismatch_dlambda(s.kinds);
    aug(m, pin_pos) = 1.0;
    Eigen::VectorXd rhs(m + 1);
    rhs.head(m) = -f;
    rhs[m] = 0.0;

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(aug);
    if (lu.rcond() < 1e-14) return false;
    const Eigen::VectorXd dw = lu.solve(rhs);
    if (!dw.allFinite()) return false;
    for (std::size_t k = 0; k < angs.size(); ++k) s.v_ang[angs[k]] += dw[static_cast<Eigen::Index>(k)];
    for (std::size_t k = 0; k < vms.size(); ++k) {
      s.v_mag[vms[k]] += dw[static_cast<Eigen::Index>(angs.size() + k)];
    }
    s.lambda += dw[m];
    // Collapsed magnitudes mean the corrector left the physical branch.
    for (int b : vms) {
      if (s.v_mag[b] < 0.01) return false;
    }
  }
  return false;
}

// Applies the same discrete switching rule as solve_newton at a corrected
// point. Returns false only on bookkeeping failure (never expected).
bool Tracer::enforce_limits_at_point(TraceState& s, bool& switched) const {
  switched = false;
  Eigen::VectorXd p, q;
  compute_injections(y_, s.v_mag, s.v_ang, p, q);
  const double limit_tol = 1e-9;
  for (std::size_t i = 0; i < s.kinds.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (grid_.buses[i].kind != BusKind::PV) continue;
    if (s.pinned[i] == 0 && s.kinds[i] == BusKind::PV) {
      const double q_gen = q[k] + q_load0_[k] * (1.0 + s.lambda * dir_.k_q[k]);
      if (q_gen > qr_.q_max[k] + limit_tol) {
        s.kinds[i] = BusKind::PQ;
        s.pinned[i] = +1;
        switched = true;
      } else if (q_gen < qr_.q_min[k] - limit_tol) {
        s.kinds[i] = BusKind::PQ;
        s.pinned[i] = -1;
        switched = true;
      }
    } else if (s.pinned[i] != 0) {
      const double setpoint = base_spec_.v_setpoint[k];
      const bool recover = (s.pinned[i] > 0 && s.v_mag[k] > setpoint + limit_tol) ||
                           (s.pinned[i] < 0 && s.v_mag[k] < setpoint - limit_tol);
      if (recover) {
        s.kinds[i] = BusKind::PV;
        s.pinned[i] = 0;
        s.v_mag[k] = setpoint;
        switched = true;
      }
    }
  }
  return true;
}

CurvePoint Tracer::make_point(const TraceState& s, int corrector_iters, bool event) const {
  CurvePoint pt;
  pt.lambda = s.lambda;
  pt.q_limit_event = event;
  PowerFlowSolution& sol = pt.solution;
  sol.v_mag = s.v_mag;
  sol.v_ang = s.v_ang;
  compute_injections(y_, s.v_mag, s.v_ang, sol.p_inj, sol.q_inj);
  const InjectionSpec spec = spec_at(s);
  const Eigen::VectorXd f = mismatch_vector(y_, spec, s.v_mag, s.v_ang);
  sol.max_mismatch = f.size() > 0 ? f.cwiseAbs().maxCoeff() : 0.0;
  sol.converged = true;
  sol.status = SolveStatus::converged;
  sol.iterations = corrector_iters;
  sol.kinds = s.kinds;
  for (std::size_t i = 0; i < s.pinned.size(); ++i) {
    if (s.pinned[i] != 0) sol.q_limited_buses.push_back(grid_.buses[i].id);
  }
  return pt;
}

PVCurve Tracer::run() {
  PVCurve curve;
  curve.direction = dir_;
  for (const auto& b : grid_.buses) curve.bus_ids.push_back(b.id);

  // Base point from the plain solver, adopting its q-limit outcome.
  const PowerFlowSolution base = solve_newton(grid_, y_, opts_.solver);
  if (!base.converged) throw BaseCaseInfeasible();

  TraceState s;
  s.v_mag = base.v_mag;
  s.v_ang = base.v_ang;
  s.lambda = 0.0;
  s.kinds = base.kinds;
  s.pinned.assign(grid_.buses.size(), 0);
  for (std::size_t i = 0; i < grid_.buses.size(); ++i) {
    if (grid_.buses[i].kind == BusKind::PV && s.kinds[i] == BusKind::PQ) {
      // solve_newton reports which buses it pinned but not the side; recover
      // it from the spec it converged against.
      Eigen::VectorXd p, q;
      compute_injections(y_, s.v_mag, s.v_ang, p, q);
      const auto k = static_cast<Eigen::Index>(i);
      const double q_gen = q[k] + q_load0_[k];
      s.pinned[i] = std::abs(q_gen - qr_.q_max[k]) <= std::abs(q_gen - qr_.q_min[k]) ? +1 : -1;
    }
  }

  {
    CurvePoint p0 = make_point(s, base.iterations, !base.q_limited_buses.empty());
    p0.lambda = 0.0;
    curve.points.push_back(std::move(p0));
  }

  Pin pin;  // lambda-pinned to start
  Tangent t;
  if (!tangent_at(s, pin, t)) {
    throw TraceStalled("tangent is singular at the base point");
  }
  if (t.d_lambda < 0.0) {  // orient towards increasing load
    t.d_ang = -t.d_ang;
    t.d_vm = -t.d_vm;
    t.d_lambda = -t.d_lambda;
  }

  double step = opts_.initial_step;
  bool past_nose = false;
  double lambda_max = 0.0;
  int easy_corrections = 0;

  while (static_cast<int>(curve.points.size()) < opts_.max_points) {
    // Choose the continuation parameter from the tangent: lambda while its
    // component dominates, else the fastest-moving PQ voltage magnitude.
    Pin next_pin;
    double best = std::abs(t.d_lambda);
    const auto vms = vm_buses(s.kinds);
    for (int b : vms) {
      if (std::abs(t.d_vm[b]) > best) {
        best = std::abs(t.d_vm[b]);
        next_pin.is_lambda = false;
        next_pin.bus = b;
      }
    }
    if (best <= 0.0) break;

    // Normalize so the pinned component advances by exactly `step`.
    const double pin_component = next_pin.is_lambda ? t.d_lambda : t.d_vm[next_pin.bus];
    const double scale = 1.0 / std::abs(pin_component);

    bool accepted = false;
    TraceState trial;
    int corrector_iters = 0;
    bool event = false;
    while (!accepted) {
      trial = s;
      trial.v_ang += step * scale * t.d_ang;
      trial.v_mag += step * scale * t.d_vm;
      trial.lambda += step * scale * t.d_lambda;
      const double target = next_pin.is_lambda ? trial.lambda : trial.v_mag[next_pin.bus];

      bool ok = correct(trial, next_pin, target, corrector_iters);
      if (ok) {
        // Settle reactive limits before accepting; each switch changes the
        // partition, so re-correct at the same pinned target.
        event = false;
        for (int guard = 0; ok && guard < 10; ++guard) {
          bool switched = false;
          enforce_limits_at_point(trial, switched);
          if (!switched) break;
          event = true;
          Pin repin = next_pin;
          if (!repin.is_lambda && trial.kinds[static_cast<std::size_t>(repin.bus)] != BusKind::PQ) {
            repin = Pin{};  // pinned bus left PQ; fall back to lambda
          }
          const double retarget = repin.is_lambda ? trial.lambda : trial.v_mag[repin.bus];
          int extra = 0;
          ok = correct(trial, repin, retarget, extra);
          corrector_iters += extra;
        }
      }
      if (ok) {
        accepted = true;
        break;
      }
      step /= 2.0;
      easy_corrections = 0;
      if (step < opts_.min_step) break;
    }
    if (!accepted) {
      if (past_nose) break;  // nose already bracketed; end of traceable branch
      throw TraceStalled("continuation step fell below min_step before the nose was bracketed");
    }

    const double prev_lambda = s.lambda;
    s = trial;
    curve.points.push_back(make_point(s, corrector_iters, event));
    lambda_max = std::max(lambda_max, s.lambda);
    if (!past_nose && s.lambda <= prev_lambda) past_nose = true;

    // Step control: grow after two consecutive easy corrections.
    if (corrector_iters <= 4) {
      if (++easy_corrections >= 2) {
        step = std::min(step * 1.5, opts_.initial_step);
        easy_corrections = 0;
      }
    } else {
      easy_corrections = 0;
    }

    Tangent t_new;
    if (!tangent_at(s, next_pin, t_new)) {
      if (past_nose) break;
      throw TraceStalled("tangent became singular before the nose was bracketed");
    }
    // Orient along the direction of travel. The angle block plus lambda is
    // partition-independent, so the inner product stays meaningful across
    // q-limit switches.
    const double along = t_new.d_ang.dot(t.d_ang) + t_new.d_lambda * t.d_lambda +
                         t_new.d_vm.dot(t.d_vm);
    if (along < 0.0) {
      t_new.d_ang = -t_new.d_ang;
      t_new.d_vm = -t_new.d_vm;
      t_new.d_lambda = -t_new.d_lambda;
    }
    t = t_new;
    if (!past_nose && t.d_lambda < 0.0) past_nose = true;

    if (past_nose) {
      if (!opts_.trace_lower_branch) break;
      if (s.lambda <= opts_.lower_branch_stop_fraction * lambda_max) break;
    }
  }

  // Nose = first occurrence of the maximum loading factor.
  std::size_t nose = 0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    if (curve.points[i].lambda > curve.points[nose].lambda) nose = i;
  }
  curve.nose_index = nose;
  return curve;
}

}  // namespace

PVCurve trace_pv_curve(const GridCase& grid, const LoadDirection& dir,
                       const ContinuationOptions& opts) {
  dir.check_against(grid);
  if (!(opts.min_step > 0.0) || opts.min_step > opts.initial_step) {
    throw ValidationError("continuation options require 0 < min_step <= initial_step");
  }
  Tracer tracer(grid, dir, opts);
  return tracer.run();
}

std::pair<double, double> nose_point(const PVCurve& curve, int bus_id) {
  if (curve.points.empty()) throw ValidationError("curve has no points");
  auto it = std::find(curve.bus_ids.begin(), curve.bus_ids.end(), bus_id);
  if (it == curve.bus_ids.end()) throw UnknownBus(bus_id);
  const auto pos = static_cast<Eigen::Index>(it - curve.bus_ids.begin());
  const CurvePoint& nose = curve.points[curve.nose_index];
  return {nose.lambda, nose.solution.v_mag[pos]};
}

}  // namespace vstab
