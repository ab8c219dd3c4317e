#include "credstuff/elgamal.hpp"

namespace credstuff::crypto {

KeyPair gen(const Group& g, Rng& rng) {
  Bn u = g.rand_scalar(rng);
  u.set_consttime();
  Elt U = g.exp_sec(g.generator(), u);
  return KeyPair{PublicKey{g.id(), U}, SecretKey{std::move(u)}};
}

Ciphertext encrypt(const PublicKey& pk, const Bn& m, Rng& rng) {
  const Group& g = pk.group();
  const Bn y = g.rand_scalar(rng);
  Elt V = g.exp_gen(y);
  Elt W = g.mul(g.exp_gen(m), g.exp(pk.U, y));
  return Ciphertext{std::move(V), std::move(W)};
}

Ciphertext encrypt_u64(const PublicKey& pk, std::uint64_t m, Rng& rng) {
  return encrypt(pk, Bn(m), rng);
}

bool validate(const PublicKey& pk, const Ciphertext& c) {
  const Group& g = pk.group();
  return g.is_member(c.V) && g.is_member(c.W);
}

static void require_valid(const PublicKey& pk, const Ciphertext& c, const char* what) {
  if (!validate(pk, c)) throw InvalidCiphertext(what);
}

Ciphertext add(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b, Rng& rng) {
  require_valid(pk, a, "add: left operand outside ciphertext space");
  require_valid(pk, b, "add: right operand outside ciphertext space");
  return rerandomize(pk, add_raw(pk, a, b), rng);
}

Ciphertext scalar_mul(const PublicKey& pk, const Bn& k, const Ciphertext& c, Rng& rng) {
  require_valid(pk, c, "scalar_mul: operand outside ciphertext space");
  return rerandomize(pk, exp_raw(pk, k, c), rng);
}

Ciphertext rerandomize(const PublicKey& pk, const Ciphertext& c, Rng& rng) {
  const Group& g = pk.group();
  const Bn y = g.rand_scalar(rng);
  return Ciphertext{g.mul(c.V, g.exp_gen(y)), g.mul(c.W, g.exp(pk.U, y))};
}

bool zero_test(const SecretKey& sk, const PublicKey& pk, const Ciphertext& c) {
  const Group& g = pk.group();
  if (!g.is_member(c.V) || !g.is_member(c.W)) return false;
  return g.eq(c.W, g.exp_sec(c.V, sk.u));
}

Ciphertext add_raw(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  const Group& g = pk.group();
  return Ciphertext{g.mul(a.V, b.V), g.mul(a.W, b.W)};
}

Ciphertext exp_raw(const PublicKey& pk, const Bn& k, const Ciphertext& c) {
  const Group& g = pk.group();
  return Ciphertext{g.exp(c.V, k), g.exp(c.W, k)};
}

Bytes encode(const Group& g, const Ciphertext& c) {
  Bytes out = g.encode(c.V);
  Bytes w = g.encode(c.W);
  out.insert(out.end(), w.begin(), w.end());
  return out;
}

std::optional<Ciphertext> decode_ciphertext(const Group& g, ByteView bytes) {
  const std::size_t n = g.elt_size();
  if (bytes.size() != 2 * n) return std::nullopt;
  auto v = g.decode(bytes.subspan(0, n));
  auto w = g.decode(bytes.subspan(n, n));
  if (!v || !w) return std::nullopt;
  return Ciphertext{std::move(*v), std::move(*w)};
}

std::uint32_t decrypt_dlog(const SecretKey& sk, const Ciphertext& c) {
  const TinyGroup& g = TinyGroup::instance();
  // g^m = W * (V^u)^-1
  Elt mask = g.exp(c.V, sk.u);
  Elt gm = g.mul(c.W, g.inverse(mask));
  return g.dlog(gm);
}

}  // namespace credstuff::crypto
