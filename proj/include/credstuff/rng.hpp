#pragma once

#include <cstdint>
#include <random>

#include "credstuff/bytes.hpp"

namespace credstuff {

// Byte-oriented randomness source.  Protocol code takes an Rng& so tests can
// substitute a seeded deterministic stream; production paths use SystemRng.
class Rng {
 public:
  virtual ~Rng() = default;
  virtual void fill(void* out, std::size_t n) = 0;

  std::uint64_t u64() {
    std::uint8_t buf[8];
    fill(buf, sizeof buf);
    return load_u64(buf);
  }

  // Uniform in [0, bound) by rejection; bound must be nonzero.
  std::uint64_t below(std::uint64_t bound);

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }
};

// Process CSPRNG (OpenSSL RAND_bytes).
class SystemRng final : public Rng {
 public:
  void fill(void* out, std::size_t n) override;
};

// Deterministic stream for tests and seeded simulations.
class SeededRng final : public Rng {
 public:
  explicit SeededRng(std::uint64_t seed) : gen_(seed) {}
  void fill(void* out, std::size_t n) override;

 private:
  std::mt19937_64 gen_;
};

// Shared thread-local system RNG for call sites without an injected source.
Rng& system_rng();

}  // namespace credstuff
