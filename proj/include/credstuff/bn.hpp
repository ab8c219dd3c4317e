#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "credstuff/bytes.hpp"
#include "credstuff/rng.hpp"

typedef struct bignum_st BIGNUM;

namespace credstuff {

// Value-semantic arbitrary-precision integer over OpenSSL BIGNUM.
// Scalars serialize as 32-byte big-endian strings.
class Bn {
 public:
  static constexpr std::size_t kWireSize = 32;

  Bn();  // zero
  explicit Bn(std::uint64_t v);
  Bn(const Bn& o);
  Bn(Bn&& o) noexcept;
  Bn& operator=(Bn o) noexcept;
  ~Bn();

  static Bn from_be(ByteView bytes);
  static std::optional<Bn> from_wire(ByteView bytes);  // exactly 32 bytes
  static Bn from_dec(const std::string& dec);

  Bytes to_be(std::size_t width = kWireSize) const;  // throws if value does not fit

  bool is_zero() const;
  bool is_odd() const;
  bool operator==(const Bn& o) const;
  bool operator<(const Bn& o) const;

  // Fits-check plus extraction for small values.
  std::optional<std::uint64_t> to_u64() const;

  Bn add_mod(const Bn& o, const Bn& m) const;
  Bn sub_mod(const Bn& o, const Bn& m) const;
  Bn mul_mod(const Bn& o, const Bn& m) const;
  Bn exp_mod(const Bn& e, const Bn& m) const;
  Bn inv_mod(const Bn& m) const;  // throws std::domain_error if not invertible
  Bn mod(const Bn& m) const;

  // Uniform in [0, bound) driven by the supplied Rng (rejection sampling).
  static Bn rand_below(const Bn& bound, Rng& rng);

  // Marks the value constant-time for OpenSSL exponentiation paths.
  void set_consttime();

  const BIGNUM* raw() const { return v_; }
  BIGNUM* raw() { return v_; }

  std::string to_dec() const;
  int bit_count() const;

 private:
  BIGNUM* v_;
};

}  // namespace credstuff
