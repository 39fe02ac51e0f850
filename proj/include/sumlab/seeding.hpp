#pragma once

#include <cstdint>
#include <random>

namespace sumlab {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Purposes a seed can be spent on. Each role owns an independent stream.
enum class SeedRole : std::uint64_t {
  dataset = 0xD47A5E7000000001ULL,
  test_set = 0x7E575E7000000002ULL,
  index_stream = 0x1D3E5A3000000003ULL,
  init = 0x1A17000000000004ULL,
  neighbor_index = 0x2E16B0A000000005ULL,
  neighbor_draw = 0x2E16B0D000000006ULL,
  estimate = 0xE571A7E000000007ULL,
  equiv = 0xE901700000000008ULL,
};

/// Seed for (role, replica) under a master seed:
///   mix64(mix64(master ^ role) ^ replica)
/// Replica streams are independent of the replica count.
constexpr std::uint64_t derive_seed(std::uint64_t master, SeedRole role,
                                    std::uint64_t replica = 0) noexcept {
  return mix64(mix64(master ^ static_cast<std::uint64_t>(role)) ^ replica);
}

inline Rng make_rng(std::uint64_t master, SeedRole role, std::uint64_t replica = 0) {
  return Rng(derive_seed(master, role, replica));
}

/// Uniform single-index sampler over {0, ..., n-1}.
class IndexSampler {
 public:
  IndexSampler(std::size_t n, std::uint64_t seed) : rng_(seed), dist_(0, n - 1) {}
  std::size_t operator()() { return dist_(rng_); }

 private:
  Rng rng_;
  std::uniform_int_distribution<std::size_t> dist_;
};

}  // namespace sumlab
