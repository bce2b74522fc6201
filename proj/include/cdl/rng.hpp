#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cdl {

// Seeded random source with a fully specified algorithm, so streams are
// identical across platforms and standard libraries:
//   engine   std::mt19937_64 (bit-exact by the standard)
//   uniform  top 53 bits of one draw scaled by 2^-53, in [0, 1)
//   normal   Box-Muller on two uniforms, cosine branch only
//   index    rejection sampling on one draw per attempt
// The <random> distributions are avoided because their output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream derived from a root seed and a name.
  static Rng substream(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double normal();
  std::size_t index(std::size_t n);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 1469598103934665603ull);

}  // namespace cdl
