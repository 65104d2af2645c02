#include <complex>

#include "vstab/errors.hpp"
#include "vstab/grid.hpp"

namespace vstab {

AdmittanceMatrix build_ybus(const GridCase& grid) {
  using cd = std::complex<double>;
  const auto n = static_cast<Eigen::Index>(grid.buses.size());
  AdmittanceMatrix out;
  out.y = Eigen::MatrixXcd::Zero(n, n);

  for (const auto& br : grid.branches) {
    if (!br.status) continue;
    const int i = grid.bus_index(br.from);
    const int j = grid.bus_index(br.to);
    const cd z(br.r, br.x);
    const cd ys = 1.0 / z;
    const cd half_charging(0.0, br.b_charging / 2.0);
    // Off-nominal tap t * e^{j*shift} sits on the 'from' side.
    const double t = br.tap_ratio == 0.0 ? 1.0 : br.tap_ratio;
    const cd tap = std::polar(t, br.phase_shift);

    out.y(i, i) += (ys + half_charging) / (t * t);
    out.y(j, j) += ys + half_charging;
    out.y(i, j) += -ys / std::conj(tap);
    out.y(j, i) += -ys / tap;
  }

  for (const auto& bus : grid.buses) {
    const int i = grid.bus_index(bus.id);
    out.y(i, i) += cd(bus.shunt_g, bus.shunt_b);
  }
  return out;
}

}  // namespace vstab
