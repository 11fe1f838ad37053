#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace poisonbench {

// 64-bit mixing hash (FNV-1a with a murmur-style finalizer). Used for
// content addressing (datasets, configs, model weights) and for deriving
// per-sample trigger seeds from pixel bytes.
uint64_t hash64(const void* data, size_t len, uint64_t seed = 0);
uint64_t hash64_combine(uint64_t a, uint64_t b);
std::string hash_hex(uint64_t h);

// Streaming variant for large blobs.
class Hasher {
 public:
  explicit Hasher(uint64_t seed = 0);
  void update(const void* data, size_t len);
  void update_u64(uint64_t v);
  uint64_t digest() const;

 private:
  uint64_t state_;
};

// Deterministic xoshiro256++ generator. std::mt19937 would do, but the
// standard distributions are implementation-defined; this keeps every
// sampled value reproducible across compilers.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n);
  // Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform01() < p; }

  // Independent child stream; deterministic in (parent seed, id).
  Rng fork(uint64_t id) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
  uint64_t seed_;
};

}  // namespace poisonbench
