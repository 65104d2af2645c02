#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vstab/errors.hpp"
#include "vstab/grid.hpp"

// Reader for the MATPOWER case subset: the baseMVA scalar and the bus, gen
// and branch matrix literals. Everything else in the file (function header,
// version string, gencost, comments) is skipped.

namespace vstab {

namespace {

// MATPOWER column positions.
enum BusCol { BUS_I = 0, BUS_TYPE, PD, QD, GS, BS, AREA, VM, VA, BASE_KV, ZONE, VMAX, VMIN };
enum GenCol { GEN_BUS = 0, PG, QG, QMAX, QMIN, VG, MBASE, GEN_STATUS, PMAX, PMIN };
enum BranchCol { F_BUS = 0, T_BUS, BR_R, BR_X, BR_B, RATE_A, RATE_B, RATE_C, TAP, SHIFT, BR_STATUS };

std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  bool in_quote = false;
  for (char c : text) {
    if (c == '\n') {
      in_comment = false;
      in_quote = false;
      out += c;
      continue;
    }
    if (in_comment) continue;
    if (c == '\'') in_quote = !in_quote;
    if (c == '%' && !in_quote) {
      in_comment = true;
      continue;
    }
    out += c;
  }
  return out;
}

// Locates "<ident>.<field>" followed by '=' and returns the text after '='.
std::optional<std::string_view> find_assignment(std::string_view text, std::string_view field) {
  std::size_t pos = 0;
  const std::string needle = "." + std::string(field);
  while ((pos = text.find(needle, pos)) != std::string_view::npos) {
    std::size_t after = pos + needle.size();
    // Reject partial matches like ".busnames".
    if (after < text.size() && (std::isalnum(static_cast<unsigned char>(text[after])) || text[after] == '_')) {
      pos = after;
      continue;
    }
    std::size_t eq = text.find_first_not_of(" \t", after);
    if (eq != std::string_view::npos && text[eq] == '=') {
      return text.substr(eq + 1);
    }
    pos = after;
  }
  return std::nullopt;
}

using Matrix = std::vector<std::vector<double>>;

Matrix parse_matrix(std::string_view body, std::string_view what) {
  std::size_t open = body.find('[');
  if (open == std::string_view::npos) {
    throw ParseError(std::string(what) + ": expected '[' to open the matrix literal");
  }
  std::size_t close = body.find(']', open);
  if (close == std::string_view::npos) {
    throw ParseError(std::string(what) + ": matrix literal is not closed with ']'");
  }
  std::string_view inner = body.substr(open + 1, close - open - 1);

  Matrix rows;
  std::vector<double> row;
  std::size_t i = 0;
  auto end_row = [&] {
    if (!row.empty()) {
      if (!rows.empty() && rows.front().size() != row.size()) {
        throw ParseError(std::string(what) + ": ragged matrix row " + std::to_string(rows.size() + 1));
      }
      rows.push_back(std::move(row));
      row.clear();
    }
  };
  while (i < inner.size()) {
    char c = inner[i];
    if (c == ';' || c == '\n') {
      end_row();
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      ++i;
      continue;
    }
    const char* start = inner.data() + i;
    char* endp = nullptr;
    double v = std::strtod(start, &endp);
    if (endp == start) {
      throw ParseError(std::string(what) + ": malformed numeric literal near '" +
                       std::string(inner.substr(i, 12)) + "'");
    }
    row.push_back(v);
    i += static_cast<std::size_t>(endp - start);
  }
  end_row();
  return rows;
}

double parse_scalar(std::string_view body, std::string_view what) {
  const char* start = body.data();
  char* endp = nullptr;
  // Skip whitespace manually so strtod's end pointer check is meaningful.
  std::size_t k = 0;
  while (k < body.size() && std::isspace(static_cast<unsigned char>(body[k]))) ++k;
  start += k;
  double v = std::strtod(start, &endp);
  if (endp == start) throw ParseError(std::string(what) + ": expected a numeric value");
  return v;
}

double col(const std::vector<double>& row, std::size_t c, std::string_view what) {
  if (c >= row.size()) {
    throw ParseError(std::string(what) + ": row has only " + std::to_string(row.size()) +
                     " columns, need at least " + std::to_string(c + 1));
  }
  return row[c];
}

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

GridCase parse_case_matpower(std::string_view raw) {
  const std::string text = strip_comments(raw);

  GridCase grid;
  auto base = find_assignment(text, "baseMVA");
  if (!base) throw ParseError("missing baseMVA assignment");
  grid.base_mva = parse_scalar(*base, "baseMVA");

  auto bus_body = find_assignment(text, "bus");
  if (!bus_body) throw ParseError("missing bus matrix");
  auto gen_body = find_assignment(text, "gen");
  auto branch_body = find_assignment(text, "branch");

  for (const auto& row : parse_matrix(*bus_body, "bus")) {
    Bus b;
    b.id = static_cast<int>(col(row, BUS_I, "bus"));
    const int type = static_cast<int>(col(row, BUS_TYPE, "bus"));
    switch (type) {
      case 1: b.kind = BusKind::PQ; break;
      case 2: b.kind = BusKind::PV; break;
      case 3: b.kind = BusKind::Slack; break;
      default:
        throw ParseError("bus " + std::to_string(b.id) + ": unsupported bus type " +
                         std::to_string(type));
    }
    b.p_demand = col(row, PD, "bus");
    b.q_demand = col(row, QD, "bus");
    // MATPOWER stores shunts as MW/MVAr injected at V = 1 pu.
    b.shunt_g = col(row, GS, "bus") / grid.base_mva;
    b.shunt_b = col(row, BS, "bus") / grid.base_mva;
    b.v_mag_init = col(row, VM, "bus");
    b.v_ang_init = col(row, VA, "bus") * kDegToRad;
    grid.buses.push_back(b);
  }

  if (gen_body) {
    for (const auto& row : parse_matrix(*gen_body, "gen")) {
      Gen g;
      g.bus = static_cast<int>(col(row, GEN_BUS, "gen"));
      g.p_out = col(row, PG, "gen");
      g.q_out = col(row, QG, "gen");
      g.q_max = col(row, QMAX, "gen");
      g.q_min = col(row, QMIN, "gen");
      g.v_set = col(row, VG, "gen");
      g.status = col(row, GEN_STATUS, "gen") > 0.5;
      grid.gens.push_back(g);
    }
  }

  if (branch_body) {
    for (const auto& row : parse_matrix(*branch_body, "branch")) {
      Branch br;
      br.from = static_cast<int>(col(row, F_BUS, "branch"));
      br.to = static_cast<int>(col(row, T_BUS, "branch"));
      br.r = col(row, BR_R, "branch");
      br.x = col(row, BR_X, "branch");
      br.b_charging = col(row, BR_B, "branch");
      br.tap_ratio = col(row, TAP, "branch");
      br.phase_shift = col(row, SHIFT, "branch") * kDegToRad;
      br.status = col(row, BR_STATUS, "branch") > 0.5;
      grid.branches.push_back(br);
    }
  }

  return grid;
}

}  // namespace vstab
