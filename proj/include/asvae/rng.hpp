#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace asvae {

// Reproducible random stream keyed by (seed, stream id). Two streams built
// from the same pair produce the same sequence; different ids are
// independent for all practical purposes.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32),
                      0x61737661u};
    engine_.seed(seq);
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_(engine_); }

  double exponential() { return -std::log(uniform()); }

  std::uint64_t next_u64() { return engine_(); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  friend bool operator==(const RngStream& a, const RngStream& b) {
    return a.engine_ == b.engine_ && a.normal_ == b.normal_;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace asvae
