#pragma once

#include <cstdint>

#include "fusioniv/stats.hpp"

namespace fusioniv {

// Splittable counter-based generator (splitmix64 finalizer over a keyed
// counter). Stream (seed, stream_id) pairs give statistically independent
// sequences, so parallel replicates are reproducible regardless of
// scheduling: replicate k always draws from stream hash(seed, k).
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(derive_key(seed, stream)), counter_(0) {}

  std::uint64_t next_u64() {
    counter_ += 0x9E3779B97F4A7C15ULL;
    return mix(counter_ ^ key_);
  }

  // uniform on [0,1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform on (0,1); safe to feed into inverse CDFs
  double uniform_open() {
    double u = uniform();
    if (u < 1e-12) u = 1e-12;
    if (u > 1.0 - 1e-12) u = 1.0 - 1e-12;
    return u;
  }

  int bernoulli(double p) { return uniform() < p ? 1 : 0; }

  double normal(double mu = 0.0, double sd = 1.0) {
    return mu + sd * norm_quantile(uniform_open());
  }

  // independent child stream, deterministic in (parent key, substream)
  SplitRng split(std::uint64_t substream) const {
    return SplitRng(key_ ^ 0xA5A5A5A55A5A5A5AULL, mix(substream + 0x632BE59BD9B4E019ULL));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t k = mix(seed + 0x9E3779B97F4A7C15ULL);
    k = mix(k ^ (stream + 0xD1B54A32D192ED03ULL));
    return k == 0 ? 0x6A09E667F3BCC909ULL : k;
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace fusioniv
