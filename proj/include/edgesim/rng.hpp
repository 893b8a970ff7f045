#pragma once

#include <cstdint>
#include <random>

namespace edgesim {

using Rng = std::mt19937_64;

/// Independent randomness sources of one trial. Each stream is derived from
/// the trial's root seed and its own id, so consuming more of one stream never
/// shifts the values another stream produces.
enum class Stream : std::uint32_t {
  fading = 1,
  noise = 2,
  shuffle = 3,
  split = 4,
  sgd = 5,
  subset = 6,
  data = 7,
};

inline Rng make_stream(std::uint64_t root_seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(root_seed & 0xffffffffu),
                    static_cast<std::uint32_t>(root_seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x65646765u};
  return Rng(seq);
}

}  // namespace edgesim
