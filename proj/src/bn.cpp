#include "credstuff/bn.hpp"

#include <openssl/bn.h>

#include <stdexcept>
#include <utility>

namespace credstuff {

namespace {

BN_CTX* ctx() {
  thread_local BN_CTX* c = BN_CTX_new();
  return c;
}

void check(int ok, const char* what) {
  if (!ok) throw std::runtime_error(std::string("bignum operation failed: ") + what);
}

}  // namespace

Bn::Bn() : v_(BN_new()) {
  check(v_ != nullptr, "alloc");
  BN_zero(v_);
}

Bn::Bn(std::uint64_t v) : v_(BN_new()) {
  check(v_ != nullptr, "alloc");
  check(BN_set_word(v_, v), "set_word");
}

Bn::Bn(const Bn& o) : v_(BN_dup(o.v_)) { check(v_ != nullptr, "dup"); }

Bn::Bn(Bn&& o) noexcept : v_(o.v_) { o.v_ = nullptr; }

Bn& Bn::operator=(Bn o) noexcept {
  std::swap(v_, o.v_);
  return *this;
}

Bn::~Bn() {
  if (v_) BN_clear_free(v_);
}

Bn Bn::from_be(ByteView bytes) {
  Bn r;
  check(BN_bin2bn(bytes.data(), static_cast<int>(bytes.size()), r.v_) != nullptr, "bin2bn");
  return r;
}

std::optional<Bn> Bn::from_wire(ByteView bytes) {
  if (bytes.size() != kWireSize) return std::nullopt;
  return from_be(bytes);
}

Bn Bn::from_dec(const std::string& dec) {
  Bn r;
  BIGNUM* p = r.v_;
  check(BN_dec2bn(&p, dec.c_str()), "dec2bn");
  return r;
}

Bytes Bn::to_be(std::size_t width) const {
  Bytes out(width, 0);
  if (BN_bn2binpad(v_, out.data(), static_cast<int>(width)) < 0)
    throw std::length_error("scalar does not fit requested width");
  return out;
}

bool Bn::is_zero() const { return BN_is_zero(v_); }
bool Bn::is_odd() const { return BN_is_odd(v_); }
bool Bn::operator==(const Bn& o) const { return BN_cmp(v_, o.v_) == 0; }
bool Bn::operator<(const Bn& o) const { return BN_cmp(v_, o.v_) < 0; }

std::optional<std::uint64_t> Bn::to_u64() const {
  if (BN_num_bytes(v_) > 8) return std::nullopt;
  std::uint8_t buf[8] = {0};
  check(BN_bn2binpad(v_, buf, 8) >= 0, "bn2binpad");
  return load_u64(buf);
}

Bn Bn::add_mod(const Bn& o, const Bn& m) const {
  Bn r;
  check(BN_mod_add(r.v_, v_, o.v_, m.v_, ctx()), "mod_add");
  return r;
}

Bn Bn::sub_mod(const Bn& o, const Bn& m) const {
  Bn r;
  check(BN_mod_sub(r.v_, v_, o.v_, m.v_, ctx()), "mod_sub");
  return r;
}

Bn Bn::mul_mod(const Bn& o, const Bn& m) const {
  Bn r;
  check(BN_mod_mul(r.v_, v_, o.v_, m.v_, ctx()), "mod_mul");
  return r;
}

Bn Bn::exp_mod(const Bn& e, const Bn& m) const {
  Bn r;
  check(BN_mod_exp(r.v_, v_, e.v_, m.v_, ctx()), "mod_exp");
  return r;
}

Bn Bn::inv_mod(const Bn& m) const {
  Bn r;
  if (BN_mod_inverse(r.v_, v_, m.v_, ctx()) == nullptr)
    throw std::domain_error("value not invertible modulo m");
  return r;
}

Bn Bn::mod(const Bn& m) const {
  Bn r;
  check(BN_nnmod(r.v_, v_, m.v_, ctx()), "nnmod");
  return r;
}

Bn Bn::rand_below(const Bn& bound, Rng& rng) {
  if (BN_is_zero(bound.v_)) throw std::invalid_argument("rand_below: zero bound");
  const int bits = BN_num_bits(bound.v_);
  const std::size_t nbytes = static_cast<std::size_t>((bits + 7) / 8);
  const std::uint8_t top_mask =
      static_cast<std::uint8_t>(bits % 8 == 0 ? 0xff : (1u << (bits % 8)) - 1);
  Bytes buf(nbytes);
  for (;;) {
    rng.fill(buf.data(), buf.size());
    buf[0] &= top_mask;
    Bn candidate = Bn::from_be(buf);
    if (candidate < bound) return candidate;
  }
}

void Bn::set_consttime() { BN_set_flags(v_, BN_FLG_CONSTTIME); }

std::string Bn::to_dec() const {
  char* s = BN_bn2dec(v_);
  check(s != nullptr, "bn2dec");
  std::string out(s);
  OPENSSL_free(s);
  return out;
}

int Bn::bit_count() const { return BN_num_bits(v_); }

}  // namespace credstuff
