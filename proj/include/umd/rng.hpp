#ifndef UMD_RNG_HPP_
#define UMD_RNG_HPP_

#include <cmath>
#include <cstdint>

#include "umd/tensor.hpp"

namespace umd {

// Counter-based deterministic RNG (splitmix64). State is (seed, stream,
// counter), so a draw position can be serialized and restored exactly and the
// sequence is identical across platforms. Substreams are decorrelated by
// hashing the stream id into the seed.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : seed_(seed), stream_(stream), counter_(0) {
    base_ = mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ull));
  }

  Rng stream(uint64_t k) const { return Rng(seed_, stream_ * 0x100000001b3ull + k + 1); }

  uint64_t next_u64() {
    uint64_t z = base_ + (++counter_) * 0x9e3779b97f4a7c15ull;
    return mix(z);
  }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes two draws per call so the counter advances evenly.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  int uniform_int(int n) { return int(next_u64() % uint64_t(n)); }

  Tensor uniform_tensor(const Shape& shape, double lo, double hi) {
    Tensor t(shape);
    for (size_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    return t;
  }
  Tensor normal_tensor(const Shape& shape, double sigma) {
    Tensor t(shape);
    for (size_t i = 0; i < t.numel(); ++i) t[i] = sigma * normal();
    return t;
  }

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }
  void set_counter(uint64_t c) { counter_ = c; }

 private:
  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  uint64_t seed_, stream_, counter_, base_;
};

}  // namespace umd

#endif  // UMD_RNG_HPP_
