#pragma once

#include <cstdint>

namespace snco {

// Counter-based splitmix64 stream (Steele, Lea & Flood 2014). Output i of a
// stream with key k is mix64(k + (i+1) * 2^64/phi), a pure function of
// (key, counter), so sequences are identical on every platform and child
// streams derived with split() can be replayed independently of how far the
// parent has advanced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(seed), counter_(0) {}

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGamma); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool coin() { return (next_u64() >> 63) != 0; }

  // Uniform integer in [0, n). Lemire multiply-shift; bias is O(n / 2^64).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Child stream addressed by tag. Pure function of the key: does not advance
  // this stream and is independent of how much of it has been consumed.
  // Callers must use distinct tags for distinct purposes.
  Rng split(std::uint64_t tag) const { return Rng(derive(tag)); }

  std::uint64_t derive(std::uint64_t tag) const {
    return mix64(key_ ^ mix64(tag + kGamma));
  }

  std::uint64_t key() const { return key_; }

 private:
  static std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace snco
