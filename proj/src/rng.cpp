#include "domst/rng.hpp"

#include <cmath>

#include "domst/tensor.hpp"

namespace domst {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t z) {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix64(seed)) {}

std::uint64_t Rng::mix(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (mix64(b) + kGolden + (a << 6) + (a >> 2)));
}

std::uint64_t Rng::hash_string(std::string_view s) {
  // FNV-1a, then finalized
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return mix64(h);
}

Rng Rng::split(std::uint64_t salt) const {
  Rng out(0);
  out.key_ = mix(key_, salt);
  out.counter_ = 0;
  return out;
}

Rng Rng::split(std::string_view label) const { return split(hash_string(label)); }

std::uint64_t Rng::next_u64() { return mix64(key_ + (++counter_) * kGolden); }

double Rng::uniform() {
  // top 53 bits -> [0,1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (have_spare_normal_) {
    have_spare_normal_ = false;
    return spare_normal_;
  }
  // Box-Muller; u1 nudged away from zero so log() is finite.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_normal_ = r * std::sin(a);
  have_spare_normal_ = true;
  return r * std::cos(a);
}

double Rng::gamma(double shape, double scale) {
  require(shape > 0.0 && scale > 0.0, "gamma: shape and scale must be > 0");
  if (shape < 1.0) {
    // boost via gamma(shape+1) * U^{1/shape}
    const double g = gamma(shape + 1.0, 1.0);
    double u = uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    return scale * g * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
      return scale * d * v;
  }
}

int Rng::uniform_int(int n) {
  require(n > 0, "uniform_int: n must be positive");
  // rejection-free modulo is fine here; n is tiny relative to 2^64
  return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
}

void Rng::shuffle(std::vector<int>& v) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    const int j = uniform_int(i + 1);
    std::swap(v[i], v[j]);
  }
}

}  // namespace domst
