#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "credstuff/elgamal.hpp"
#include "test_util.hpp"

using namespace credstuff;
using namespace credstuff::crypto;

namespace {

const TinyGroup& tiny() { return TinyGroup::instance(); }
const P256Group& p256() { return P256Group::instance(); }

SeededRng& rng() {
  static SeededRng r(0x5eed1);
  return r;
}

std::uint32_t find_non_member_residue() {
  for (std::uint32_t v = 2; v < TinyGroup::kModulus; ++v)
    if (!TinyGroup::is_subgroup_residue(v)) return v;
  throw std::logic_error("no non-member residue");
}

}  // namespace

TEST_CASE("tiny group basics") {
  const auto& g = tiny();
  CHECK(*g.order().to_u64() == 65537);
  CHECK(g.is_member(g.generator()));
  CHECK(g.is_member(g.identity()));
  CHECK(g.eq(g.mul(g.generator(), g.identity()), g.generator()));
  // generator has the full subgroup order
  CHECK(g.is_identity(g.exp(g.generator(), Bn(65537))));
  CHECK_FALSE(g.is_identity(g.exp(g.generator(), Bn(1))));
  // exp matches repeated multiplication
  Elt acc = g.identity();
  for (int i = 0; i < 7; ++i) acc = g.mul(acc, g.generator());
  CHECK(g.eq(acc, g.exp_gen(Bn(7))));
  // inverse
  CHECK(g.is_identity(g.mul(acc, g.inverse(acc))));
  // dlog oracle inverts exp_gen
  CHECK(g.dlog(g.exp_gen(Bn(12345))) == 12345);
  CHECK(g.dlog(g.identity()) == 0);
}

TEST_CASE("tiny group element encoding") {
  const auto& g = tiny();
  Elt a = g.exp_gen(Bn(4242));
  Bytes enc = g.encode(a);
  CHECK(enc.size() == 4);
  auto back = g.decode(enc);
  REQUIRE(back.has_value());
  CHECK(g.eq(*back, a));
  // residues outside the order-65537 subgroup are rejected
  std::uint32_t bad = find_non_member_residue();
  Bytes badbytes;
  put_u32(badbytes, bad);
  CHECK_FALSE(g.decode(badbytes).has_value());
  // zero is not a group element
  Bytes zero(4, 0);
  CHECK_FALSE(g.decode(zero).has_value());
  // wrong width rejected
  CHECK_FALSE(g.decode(Bytes(3, 1)).has_value());
}

TEST_CASE("p256 group basics and encoding") {
  const auto& g = p256();
  // 256-bit prime-order group, matching the standard curve order.
  CHECK(g.order().bit_count() == 256);
  CHECK(g.order().to_dec() ==
        "115792089210356248762697446949407573529996955224135760342422259061068512044369");
  Elt a = g.exp_gen(Bn(987654321));
  Bytes enc = g.encode(a);
  CHECK(enc.size() == 33);
  auto back = g.decode(enc);
  REQUIRE(back.has_value());
  CHECK(g.eq(*back, a));
  // identity round-trips through the all-zero encoding
  Bytes ident = g.encode(g.identity());
  CHECK(ident == Bytes(33, 0));
  auto identity_back = g.decode(ident);
  REQUIRE(identity_back.has_value());
  CHECK(g.is_identity(*identity_back));
  // x >= field prime can not be on the curve
  Bytes bad(33, 0xff);
  bad[0] = 0x02;
  CHECK_FALSE(g.decode(bad).has_value());
  // group law sanity: g^2 = g * g
  CHECK(g.eq(g.exp_gen(Bn(2)), g.mul(g.generator(), g.generator())));
  CHECK(g.is_identity(g.mul(a, g.inverse(a))));
}

TEST_CASE("keypair generation") {
  auto kp1 = gen(p256(), rng());
  auto kp2 = gen(p256(), rng());
  CHECK(kp1.pk.gid == GroupId::p256);
  CHECK_FALSE(kp1.sk.u == kp2.sk.u);
  CHECK(p256().is_member(kp1.pk.U));
  CHECK(p256().eq(kp1.pk.U, p256().exp_gen(kp1.sk.u)));

  // tiny group: draws land in [0, r) and are not all equal
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 3; ++i) {
    auto kp = gen(tiny(), rng());
    CHECK(kp.sk.u < tiny().order());
    seen.insert(*kp.sk.u.to_u64());
  }
  CHECK(seen.size() >= 2);
}

TEST_CASE("encrypt and dlog decode") {
  auto kp = gen(tiny(), rng());
  auto c = encrypt_u64(kp.pk, 42, rng());
  CHECK(decrypt_dlog(kp.sk, c) == 42);
  CHECK(validate(kp.pk, c));
}

TEST_CASE("homomorphic add") {
  auto kp = gen(tiny(), rng());
  auto a = encrypt_u64(kp.pk, 3, rng());
  auto b = encrypt_u64(kp.pk, 5, rng());
  auto sum = add(kp.pk, a, b, rng());
  CHECK(decrypt_dlog(kp.sk, sum) == 8);

  // property: random plaintexts, sum mod r
  const std::uint64_t r = *tiny().order().to_u64();
  for (int i = 0; i < 50; ++i) {
    std::uint64_t m1 = rng().below(r), m2 = rng().below(r);
    auto s = add(kp.pk, encrypt_u64(kp.pk, m1, rng()), encrypt_u64(kp.pk, m2, rng()), rng());
    CHECK(decrypt_dlog(kp.sk, s) == (m1 + m2) % r);
  }
}

TEST_CASE("scalar multiplication") {
  auto kp = gen(tiny(), rng());
  auto c = encrypt_u64(kp.pk, 6, rng());
  CHECK(decrypt_dlog(kp.sk, scalar_mul(kp.pk, Bn(7), c, rng())) == 42);

  const std::uint64_t r = *tiny().order().to_u64();
  for (int i = 0; i < 50; ++i) {
    std::uint64_t m = rng().below(r), k = rng().below(r);
    auto s = scalar_mul(kp.pk, Bn(k), encrypt_u64(kp.pk, m, rng()), rng());
    CHECK(decrypt_dlog(kp.sk, s) == static_cast<std::uint64_t>(
                                        (static_cast<unsigned __int128>(m) * k) % r));
  }

  // k = 0 yields a fresh encryption of zero
  auto z = scalar_mul(kp.pk, Bn(0), encrypt_u64(kp.pk, 123, rng()), rng());
  CHECK(zero_test(kp.sk, kp.pk, z));
  CHECK(decrypt_dlog(kp.sk, z) == 0);
}

TEST_CASE("zero test") {
  auto kp = gen(tiny(), rng());
  CHECK(zero_test(kp.sk, kp.pk, encrypt_u64(kp.pk, 0, rng())));
  for (std::uint64_t m : {1ull, 2ull, 65536ull})
    CHECK_FALSE(zero_test(kp.sk, kp.pk, encrypt_u64(kp.pk, m, rng())));

  // adversarial W != V^u
  auto c = encrypt_u64(kp.pk, 0, rng());
  Ciphertext tampered{c.V, tiny().mul(c.W, tiny().generator())};
  CHECK_FALSE(zero_test(kp.sk, kp.pk, tampered));

  // invalid component: false, not an error
  Ciphertext invalid{tiny().from_residue_unchecked(find_non_member_residue()), c.W};
  CHECK_FALSE(zero_test(kp.sk, kp.pk, invalid));
}

TEST_CASE("add rejects non-group components") {
  auto kp = gen(tiny(), rng());
  auto good = encrypt_u64(kp.pk, 1, rng());
  Ciphertext bad{tiny().from_residue_unchecked(find_non_member_residue()), good.W};
  CHECK_THROWS_AS(add(kp.pk, good, bad, rng()), InvalidCiphertext);
  CHECK_THROWS_AS(add(kp.pk, bad, good, rng()), InvalidCiphertext);
  CHECK_THROWS_AS(scalar_mul(kp.pk, Bn(2), bad, rng()), InvalidCiphertext);
}

TEST_CASE("ciphertext space is all of G x G") {
  // Any pair of group elements validates, and the zero test is total on it.
  auto kp = gen(tiny(), rng());
  for (int i = 0; i < 200; ++i) {
    Ciphertext c{tiny().exp_gen(tiny().rand_scalar(rng())),
                 tiny().exp_gen(tiny().rand_scalar(rng()))};
    CHECK(validate(kp.pk, c));
    (void)zero_test(kp.sk, kp.pk, c);  // defined, no throw
    (void)decrypt_dlog(kp.sk, c);      // some plaintext exists
  }
  // identity pair is a valid ciphertext (of zero, under any key)
  Ciphertext ident{tiny().identity(), tiny().identity()};
  CHECK(validate(kp.pk, ident));
  CHECK(zero_test(kp.sk, kp.pk, ident));

  auto kp2 = gen(p256(), rng());
  Ciphertext ident2{p256().identity(), p256().identity()};
  CHECK(validate(kp2.pk, ident2));
  CHECK(zero_test(kp2.sk, kp2.pk, ident2));
}

TEST_CASE("re-randomization makes outputs uniform over the class") {
  auto kp = gen(tiny(), rng());
  auto a = encrypt_u64(kp.pk, 3, rng());
  auto b = encrypt_u64(kp.pk, 5, rng());

  // The class of plaintext 8 is parameterized by y = dlog(V); a fresh add
  // must draw y uniformly from Z_r.
  const int samples = 1 << 15;
  std::vector<std::uint64_t> bins(256, 0);
  for (int i = 0; i < samples; ++i) {
    auto s = add(kp.pk, a, b, rng());
    std::uint32_t y = tiny().dlog(s.V);
    bins[y % 256]++;
    if (i < 64) CHECK(decrypt_dlog(kp.sk, s) == 8);
  }
  // residue classes mod 256 of Z_65537: class 0 has 257 members, others 256
  std::vector<double> expected(256);
  for (int c = 0; c < 256; ++c)
    expected[c] = static_cast<double>(samples) * (c == 0 ? 257.0 : 256.0) / 65537.0;
  double p = testutil::chi2_sf(testutil::chi2_stat(bins, expected), 255.0);
  CHECK(p > 0.001);
}

TEST_CASE("ciphertext serialization") {
  auto kp = gen(tiny(), rng());
  auto c = encrypt_u64(kp.pk, 77, rng());
  Bytes wire = encode(tiny(), c);
  CHECK(wire.size() == 8);
  auto back = decode_ciphertext(tiny(), wire);
  REQUIRE(back.has_value());
  CHECK(decrypt_dlog(kp.sk, *back) == 77);

  auto kp2 = gen(p256(), rng());
  auto c2 = encrypt_u64(kp2.pk, 5, rng());
  Bytes wire2 = encode(p256(), c2);
  CHECK(wire2.size() == 66);
  auto back2 = decode_ciphertext(p256(), wire2);
  REQUIRE(back2.has_value());
  // decoded copy still sums with Enc(-5) to an encryption of zero
  Bn neg5 = Bn(0).sub_mod(Bn(5), p256().order());
  CHECK(zero_test(kp2.sk, kp2.pk, add_raw(kp2.pk, *back2, encrypt(kp2.pk, neg5, rng()))));

  // truncated and corrupt encodings are rejected
  wire2.pop_back();
  CHECK_FALSE(decode_ciphertext(p256(), wire2).has_value());
  Bytes corrupt(66, 0xff);
  corrupt[0] = 0x02;
  CHECK_FALSE(decode_ciphertext(p256(), corrupt).has_value());
}

TEST_CASE("scalar wire form") {
  Bn k(123456789);
  Bytes wire = k.to_be();
  CHECK(wire.size() == 32);
  auto back = Bn::from_wire(wire);
  REQUIRE(back.has_value());
  CHECK(*back == k);
  CHECK_FALSE(Bn::from_wire(Bytes(31, 0)).has_value());
}

TEST_CASE("p256 homomorphism via zero test") {
  // Without a decode oracle, verify Enc(m) + Enc(-m) is an encryption of zero.
  auto kp = gen(p256(), rng());
  const Bn& r = p256().order();
  for (int i = 0; i < 8; ++i) {
    Bn m = p256().rand_scalar(rng());
    Bn neg = Bn(0).sub_mod(m, r);
    auto s = add(kp.pk, encrypt(kp.pk, m, rng()), encrypt(kp.pk, neg, rng()), rng());
    CHECK(zero_test(kp.sk, kp.pk, s));
    // off-by-one plaintext fails the zero test
    auto off = add(kp.pk, encrypt(kp.pk, m, rng()), encrypt(kp.pk, neg.add_mod(Bn(1), r), rng()),
                   rng());
    CHECK_FALSE(zero_test(kp.sk, kp.pk, off));
  }
}
