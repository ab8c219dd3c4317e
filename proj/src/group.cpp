#include "credstuff/group.hpp"

#include <openssl/ec.h>
#include <openssl/obj_mac.h>

#include <mutex>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace credstuff::crypto {

namespace {

BN_CTX* ctx() {
  thread_local BN_CTX* c = BN_CTX_new();
  return c;
}

// 64-bit modular helpers; kModulus < 2^20 so products fit in uint64_t.
std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) { return a * b % m; }

std::uint64_t powmod(std::uint64_t base, std::uint64_t e, std::uint64_t m) {
  std::uint64_t acc = 1 % m;
  base %= m;
  while (e) {
    if (e & 1) acc = mulmod(acc, base, m);
    base = mulmod(base, base, m);
    e >>= 1;
  }
  return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// TinyGroup

TinyGroup::TinyGroup() : order_(kOrder) {}

const TinyGroup& TinyGroup::instance() {
  static TinyGroup g;
  return g;
}

bool TinyGroup::is_subgroup_residue(std::uint32_t v) {
  if (v == 0 || v >= kModulus) return false;
  return powmod(v, kOrder, kModulus) == 1;
}

Elt TinyGroup::from_residue(std::uint32_t v) const {
  if (!is_subgroup_residue(v)) throw std::invalid_argument("residue outside subgroup");
  return Elt(v);
}

Elt TinyGroup::mul(const Elt& a, const Elt& b) const {
  return Elt(static_cast<std::uint32_t>(mulmod(a.residue(), b.residue(), kModulus)));
}

Elt TinyGroup::exp(const Elt& a, const Bn& k) const {
  const Bn reduced = k.mod(order_);
  const std::uint64_t e = *reduced.to_u64();
  return Elt(static_cast<std::uint32_t>(powmod(a.residue(), e, kModulus)));
}

Elt TinyGroup::inverse(const Elt& a) const {
  // a^(r-1) = a^-1 within the order-r subgroup.
  return Elt(static_cast<std::uint32_t>(powmod(a.residue(), kOrder - 1, kModulus)));
}

Bytes TinyGroup::encode(const Elt& a) const {
  Bytes out;
  put_u32(out, a.residue());
  return out;
}

std::optional<Elt> TinyGroup::decode(ByteView bytes) const {
  if (bytes.size() != 4) return std::nullopt;
  const std::uint32_t v = load_u32(bytes.data());
  if (!is_subgroup_residue(v)) return std::nullopt;
  return Elt(v);
}

std::uint32_t TinyGroup::dlog(const Elt& a) const {
  // Table of g^m -> m over the whole subgroup, built on first use.
  static std::unordered_map<std::uint32_t, std::uint32_t> table;
  static std::once_flag once;
  std::call_once(once, [] {
    table.reserve(kOrder);
    std::uint64_t acc = 1;
    for (std::uint32_t m = 0; m < kOrder; ++m) {
      table.emplace(static_cast<std::uint32_t>(acc), m);
      acc = mulmod(acc, kGenerator, kModulus);
    }
  });
  auto it = table.find(a.residue());
  if (it == table.end()) throw std::invalid_argument("dlog of non-member");
  return it->second;
}

// ---------------------------------------------------------------------------
// P256Group

P256Group::P256Group() {
  grp_ = EC_GROUP_new_by_curve_name(NID_X9_62_prime256v1);
  if (!grp_) throw std::runtime_error("P-256 group unavailable");
  Bn n;
  if (EC_GROUP_get_order(grp_, n.raw(), ctx()) != 1)
    throw std::runtime_error("P-256 order unavailable");
  order_ = n;
}

const P256Group& P256Group::instance() {
  static P256Group g;
  return g;
}

Elt P256Group::wrap(EC_POINT* p) const {
  if (!p) throw std::runtime_error("point allocation failed");
  return Elt(Elt::PointPtr(p, [](const EC_POINT* q) { EC_POINT_free(const_cast<EC_POINT*>(q)); }));
}

Elt P256Group::identity() const {
  EC_POINT* p = EC_POINT_new(grp_);
  if (!p || EC_POINT_set_to_infinity(grp_, p) != 1) throw std::runtime_error("identity failed");
  return wrap(p);
}

Elt P256Group::generator() const {
  EC_POINT* p = EC_POINT_dup(EC_GROUP_get0_generator(grp_), grp_);
  return wrap(p);
}

Elt P256Group::mul(const Elt& a, const Elt& b) const {
  EC_POINT* p = EC_POINT_new(grp_);
  if (!p || EC_POINT_add(grp_, p, a.point(), b.point(), ctx()) != 1)
    throw std::runtime_error("point add failed");
  return wrap(p);
}

Elt P256Group::exp(const Elt& a, const Bn& k) const {
  EC_POINT* p = EC_POINT_new(grp_);
  if (!p || EC_POINT_mul(grp_, p, nullptr, a.point(), k.raw(), ctx()) != 1)
    throw std::runtime_error("point mul failed");
  return wrap(p);
}

Elt P256Group::exp_sec(const Elt& a, const Bn& k) const {
  Bn kk = k;
  kk.set_consttime();
  EC_POINT* p = EC_POINT_new(grp_);
  if (!p || EC_POINT_mul(grp_, p, nullptr, a.point(), kk.raw(), ctx()) != 1)
    throw std::runtime_error("point mul failed");
  return wrap(p);
}

Elt P256Group::inverse(const Elt& a) const {
  EC_POINT* p = EC_POINT_dup(a.point(), grp_);
  if (!p || EC_POINT_invert(grp_, p, ctx()) != 1) throw std::runtime_error("point invert failed");
  return wrap(p);
}

bool P256Group::eq(const Elt& a, const Elt& b) const {
  int c = EC_POINT_cmp(grp_, a.point(), b.point(), ctx());
  if (c < 0) throw std::runtime_error("point cmp failed");
  return c == 0;
}

bool P256Group::is_identity(const Elt& a) const {
  return EC_POINT_is_at_infinity(grp_, a.point()) == 1;
}

bool P256Group::is_member(const Elt& a) const {
  // Cofactor 1: on-curve (or infinity) is the complete subgroup condition.
  if (is_identity(a)) return true;
  return EC_POINT_is_on_curve(grp_, a.point(), ctx()) == 1;
}

Bytes P256Group::encode(const Elt& a) const {
  Bytes out(33, 0);
  if (is_identity(a)) return out;  // identity encodes as 33 zero bytes
  if (EC_POINT_point2oct(grp_, a.point(), POINT_CONVERSION_COMPRESSED, out.data(), out.size(),
                         ctx()) != out.size())
    throw std::runtime_error("point encode failed");
  return out;
}

std::optional<Elt> P256Group::decode(ByteView bytes) const {
  if (bytes.size() != 33) return std::nullopt;
  bool all_zero = true;
  for (std::uint8_t b : bytes)
    if (b) {
      all_zero = false;
      break;
    }
  if (all_zero) return identity();
  EC_POINT* p = EC_POINT_new(grp_);
  if (!p) throw std::runtime_error("point allocation failed");
  // oct2point verifies curve membership; cofactor 1 makes that the full
  // subgroup check.
  if (EC_POINT_oct2point(grp_, p, bytes.data(), bytes.size(), ctx()) != 1) {
    EC_POINT_free(p);
    return std::nullopt;
  }
  return wrap(p);
}

// ---------------------------------------------------------------------------

const Group& Group::by_id(GroupId id) {
  switch (id) {
    case GroupId::tiny:
      return TinyGroup::instance();
    case GroupId::p256:
      return P256Group::instance();
  }
  throw std::invalid_argument("unknown group id");
}

}  // namespace credstuff::crypto
