#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <utility>
#include <vector>

namespace byzsim {

// Deterministic, platform-independent random streams.
//
// Every consumer of randomness owns a named stream identified by
// (master_seed, role, worker). The generator is xoshiro256** whose state is
// expanded from the three identifiers with a SplitMix64 chain, so a stream's
// output depends only on its name and on how many values it has drawn --
// never on thread scheduling or on draws made by other streams. This is what
// makes simulated runs reproducible bit for bit regardless of parallelism.
enum class StreamRole : std::uint64_t {
  WorkerSampling = 1,    // mini-batch index draws, one stream per worker
  WorkerCompression = 2, // sparsifier coordinate draws, one stream per worker
  ServerCoin = 3,        // the per-round synchronization coin
  ServerBucketing = 4,   // bucketing permutations
  DataShuffle = 5,       // dataset partitioning
  Synthetic = 6,         // synthetic dataset generation
  Replay = 7,            // Monte-Carlo replay machinery in diagnostics
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

class RngStream {
 public:
  RngStream(std::uint64_t master_seed, StreamRole role, std::uint64_t worker) {
    // Fold the three identifiers into the SplitMix64 chain one at a time,
    // then draw four words for the xoshiro state.
    std::uint64_t chain = master_seed;
    (void)detail::splitmix64(chain);
    chain ^= 0xA3C59AC2ULL * static_cast<std::uint64_t>(role);
    (void)detail::splitmix64(chain);
    chain ^= 0x9E6C63D0ULL * (worker + 1);
    s_[0] = detail::splitmix64(chain);
    s_[1] = detail::splitmix64(chain);
    s_[2] = detail::splitmix64(chain);
    s_[3] = detail::splitmix64(chain);
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl64(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl64(s_[3], 45);
    return result;
  }

  // Uniform on [0,1) with 53-bit resolution; exactly one draw.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1), never returning an endpoint; exactly one draw.
  double uniform01_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform on {0, ..., n-1} via the multiply-high reduction; exactly one
  // draw, no rejection loop (the modulo bias of 2^-64 is irrelevant here and
  // a fixed draw count keeps streams replayable).
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Exactly one draw.
  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Box-Muller; draws two uniforms per antithetic pair.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform01_open();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t s_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// In-place Fisher-Yates shuffle; consumes exactly n-1 draws for n > 1.
template <typename T>
void shuffle(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace byzsim
