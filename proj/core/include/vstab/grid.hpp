#pragma once

#include <Eigen/Core>
#include <complex>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vstab {

enum class BusKind { PQ, PV, Slack };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::PQ;
  double p_demand = 0.0;  // MW
  double q_demand = 0.0;  // MVAr
  double shunt_g = 0.0;   // pu admittance at 1.0 pu voltage
  double shunt_b = 0.0;
  double v_mag_init = 1.0;  // pu
  double v_ang_init = 0.0;  // rad
};

struct Gen {
  int bus = 0;
  double p_out = 0.0;  // MW
  double q_out = 0.0;  // MVAr
  double q_max = 0.0;  // MVAr
  double q_min = 0.0;  // MVAr
  double v_set = 1.0;  // pu
  bool status = true;
};

struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;  // pu
  double x = 0.0;  // pu
  double b_charging = 0.0;  // pu, total line charging
  double tap_ratio = 0.0;   // 0 means no transformer
  double phase_shift = 0.0; // rad
  bool status = true;
};

/// Static network model. Immutable by convention once validated; the solvers
/// take it by const reference and copy when they need to modify demand.
struct GridCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Gen> gens;
  std::vector<Branch> branches;

  /// Position of a bus id in `buses`. Throws UnknownBus.
  int bus_index(int bus_id) const;
  bool has_bus(int bus_id) const;
  int slack_index() const;

  /// Checks all type invariants (exactly one slack, unique ids, branch
  /// endpoints exist, base_mva > 0, in-service branches have impedance).
  /// Throws ValidationError with a description of the first failure.
  void validate() const;

 private:
  mutable std::unordered_map<int, int> index_cache_;
};

enum class CaseFormat { matpower_m, json };

/// Parse case text in the given format. MATPOWER parsing covers the
/// baseMVA/bus/gen/branch matrix assignments; gencost and comments are
/// ignored. The returned case is validated.
GridCase parse_case(std::string_view text, CaseFormat format);

/// Load from file, picking the format by extension (.m or .json).
GridCase load_case(const std::filesystem::path& path);

/// JSON case format: {"base_mva":..., "buses":[...], "gens":[...],
/// "branches":[...]} with field names matching the structs above.
std::string serialize_case_json(const GridCase& grid);
GridCase parse_case_json(std::string_view text);

/// Bus admittance matrix in per-unit, indexed by bus position (not id).
struct AdmittanceMatrix {
  Eigen::MatrixXcd y;
  Eigen::Index size() const { return y.rows(); }
};

/// Standard Ybus assembly: series admittance adjusted for off-nominal tap and
/// phase shift on off-diagonals, series + half charging + bus shunt on the
/// diagonal. Out-of-service branches contribute nothing.
AdmittanceMatrix build_ybus(const GridCase& grid);

/// Net specified injection at each bus in per-unit: generation minus demand.
/// Aggregates in-service generators per bus.
Eigen::VectorXd net_active_injection(const GridCase& grid);
Eigen::VectorXd net_reactive_injection(const GridCase& grid);

const char* to_string(BusKind kind);

}  // namespace vstab
