#include "credstuff/rng.hpp"

#include <openssl/rand.h>

#include <stdexcept>

namespace credstuff {

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("rng below: zero bound");
  // Rejection sampling over the smallest masked range covering bound.
  std::uint64_t mask = ~0ull;
  if (std::uint64_t b = bound - 1) {
    mask = b;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
  } else {
    return 0;
  }
  for (;;) {
    std::uint64_t v = u64() & mask;
    if (v < bound) return v;
  }
}

void SystemRng::fill(void* out, std::size_t n) {
  if (RAND_bytes(static_cast<unsigned char*>(out), static_cast<int>(n)) != 1)
    throw std::runtime_error("system rng failure");
}

void SeededRng::fill(void* out, std::size_t n) {
  auto* p = static_cast<std::uint8_t*>(out);
  while (n >= 8) {
    std::uint64_t v = gen_();
    for (int i = 7; i >= 0; --i) {
      *p++ = static_cast<std::uint8_t>(v >> (i * 8));
    }
    n -= 8;
  }
  if (n) {
    std::uint64_t v = gen_();
    for (std::size_t i = 0; i < n; ++i) *p++ = static_cast<std::uint8_t>(v >> (i * 8));
  }
}

Rng& system_rng() {
  thread_local SystemRng rng;
  return rng;
}

}  // namespace credstuff
