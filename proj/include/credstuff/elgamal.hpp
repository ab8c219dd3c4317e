#pragma once

#include <optional>
#include <stdexcept>

#include "credstuff/group.hpp"

namespace credstuff::crypto {

// Additively homomorphic encryption in the exponent: Enc(m) = (g^y, g^m U^y).
// There is no general decryption; the scheme supports homomorphic addition,
// plaintext-scalar multiplication, and a secret-key zero test.  Every pair of
// group elements is a valid ciphertext of some plaintext.

struct PublicKey {
  GroupId gid;
  Elt U;
  const Group& group() const { return Group::by_id(gid); }
};

struct SecretKey {
  Bn u;
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
};

struct Ciphertext {
  Elt V, W;
};

struct InvalidCiphertext : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

KeyPair gen(const Group& g, Rng& rng);

Ciphertext encrypt(const PublicKey& pk, const Bn& m, Rng& rng);
Ciphertext encrypt_u64(const PublicKey& pk, std::uint64_t m, Rng& rng);

// True iff both components are members of the group (the identity pair
// included): the ciphertext space is exactly G x G.
bool validate(const PublicKey& pk, const Ciphertext& c);

// Homomorphic sum with a fresh re-randomizer; throws InvalidCiphertext if any
// component is outside the group.
Ciphertext add(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b, Rng& rng);

// Plaintext-scalar multiply: componentwise exponentiation by k (mod r) plus
// one trailing re-randomization; k = 0 yields a fresh encryption of zero.
Ciphertext scalar_mul(const PublicKey& pk, const Bn& k, const Ciphertext& c, Rng& rng);

// Multiplies in a fresh encryption of zero, making the output uniform over
// the ciphertext class of its plaintext.
Ciphertext rerandomize(const PublicKey& pk, const Ciphertext& c, Rng& rng);

// True iff the components are group members and W = V^u.  Invalid input is
// simply "not an encryption of zero": returns false, never throws.
bool zero_test(const SecretKey& sk, const PublicKey& pk, const Ciphertext& c);

// Composition steps without re-randomization, for pipelines that apply one
// final re-randomization to each transmitted output.
Ciphertext add_raw(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b);
Ciphertext exp_raw(const PublicKey& pk, const Bn& k, const Ciphertext& c);

// Wire form: encode(V) || encode(W).
Bytes encode(const Group& g, const Ciphertext& c);
std::optional<Ciphertext> decode_ciphertext(const Group& g, ByteView bytes);

// Tiny-group plaintext oracle for tests: recovers m via the discrete-log
// table.  Requires the ciphertext to be valid under the tiny group.
std::uint32_t decrypt_dlog(const SecretKey& sk, const Ciphertext& c);

}  // namespace credstuff::crypto
