#include "vstab/random.hpp"

#include <cmath>

namespace vstab {

namespace {

// splitmix64; used to decorrelate forked seeds.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

double RandomStream::uniform() {
  // 53-bit mantissa, uniform in [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomStream::below(std::uint64_t n) {
  // Rejection-free modulo is fine here: n is tiny compared to 2^64 in every
  // call site (bus counts, curve counts), the bias is < n / 2^64.
  return engine_() % n;
}

double RandomStream::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

RandomStream RandomStream::fork(std::uint64_t salt) const {
  return RandomStream(mix(seed_ ^ mix(salt + 0x517cc1b727220a95ULL)));
}

}  // namespace vstab
