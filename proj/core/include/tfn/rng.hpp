#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace tfn {

// Sub-seed offsets: every consumer of randomness derives its stream from the
// single run seed plus a fixed offset.
namespace seed_offset {
inline constexpr std::uint64_t init = 0;
inline constexpr std::uint64_t shuffle = 1;
inline constexpr std::uint64_t dropout = 2;
inline constexpr std::uint64_t split = 3;
} // namespace seed_offset

// mt19937_64 with hand-written distributions. The standard engine output is
// fully specified; the standard distributions are not, so the sampling
// routines below keep streams identical across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  void reseed(std::uint64_t seed) {
    engine_.seed(seed);
    has_spare_ = false;
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller (one value per call, spare cached).
  double normal();

  template <typename Idx>
  void shuffle(std::vector<Idx> &v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

} // namespace tfn
