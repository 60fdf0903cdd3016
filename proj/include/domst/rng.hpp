#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace domst {

// Counter-based splittable RNG. A stream is (key, counter); substreams are
// derived by hashing a label into the key, so the same (seed, label path)
// always yields the same draws regardless of draw order elsewhere. All
// arithmetic is exact 64-bit, identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent substream; does not advance this stream.
  Rng split(std::uint64_t salt) const;
  Rng split(std::string_view label) const;

  std::uint64_t next_u64();
  double uniform();                         // [0, 1)
  double uniform(double lo, double hi);     // [lo, hi)
  double normal();                          // standard normal, Box-Muller
  double gamma(double shape, double scale); // Marsaglia-Tsang
  int uniform_int(int n);                   // [0, n)
  void shuffle(std::vector<int>& v);        // Fisher-Yates

  static std::uint64_t hash_string(std::string_view s);
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace domst
