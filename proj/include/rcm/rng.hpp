#pragma once

#include <cstdint>

// Counter-based randomness: every random quantity is a pure function of
// (key, stream, counter), so results never depend on evaluation order or on
// how work is split across threads.
namespace rcm::rng {

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash(std::uint64_t key, std::uint64_t stream, std::uint64_t counter) {
  const std::uint64_t k = mix64(key + 0x9e3779b97f4a7c15ULL * (stream + 1));
  return mix64(k ^ mix64(counter + 0xd1b54a32d192ed03ULL));
}

// 53-bit uniform in [0, 1).
constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

constexpr double uniform(std::uint64_t key, std::uint64_t stream, std::uint64_t counter) {
  return to_unit(hash(key, stream, counter));
}

// Stream domains, so that edge draws, site draws and walker substreams keyed
// on the same master seed never collide.
enum Domain : std::uint64_t {
  kEdge = 1,
  kSite = 2,
  kWalker = 3,
  kTask = 4,
  kConfig = 5,
  kSample = 6,
};

// Derives a child seed from a master seed and an index.
constexpr std::uint64_t derive(std::uint64_t master, std::uint64_t index, std::uint64_t domain = kTask) {
  return hash(master, domain, index);
}

// xoshiro256** seeded from a counter hash; used for sequential draws inside
// one independent unit of work (one walker, one configuration).
class Stream {
 public:
  Stream(std::uint64_t key, std::uint64_t stream, std::uint64_t counter) {
    std::uint64_t x = hash(key, stream, counter);
    for (auto& w : s_) {
      x += 0x9e3779b97f4a7c15ULL;
      w = mix64(x);
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  double uniform() { return to_unit(next()); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

}  // namespace rcm::rng
