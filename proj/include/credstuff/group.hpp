#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <variant>

#include "credstuff/bn.hpp"
#include "credstuff/bytes.hpp"
#include "credstuff/rng.hpp"

typedef struct ec_group_st EC_GROUP;
typedef struct ec_point_st EC_POINT;

namespace credstuff::crypto {

enum class GroupId : std::uint8_t {
  // Order-65537 subgroup of Z_p^* with a full discrete-log table; 4-byte
  // big-endian element encoding.  For tests and simulations only.
  tiny = 1,
  // NIST P-256 (prime order, cofactor 1); 33-byte compressed encoding.
  p256 = 2,
};

// Opaque immutable group element.  Cheap to copy: tiny-group elements are a
// residue, curve points are shared const handles.
class Elt {
 public:
  Elt() = default;

  std::uint32_t residue() const { return std::get<std::uint32_t>(rep_); }
  const EC_POINT* point() const { return std::get<PointPtr>(rep_).get(); }

 private:
  friend class TinyGroup;
  friend class P256Group;
  using PointPtr = std::shared_ptr<const EC_POINT>;
  explicit Elt(std::uint32_t r) : rep_(r) {}
  explicit Elt(PointPtr p) : rep_(std::move(p)) {}
  std::variant<std::uint32_t, PointPtr> rep_;
};

// Multiplicatively-written prime-order group with fixed-width element
// encoding.  Every element handle produced by a Group is a member of it;
// decode() rejects byte strings that are not.
class Group {
 public:
  virtual ~Group() = default;

  virtual GroupId id() const = 0;
  virtual const Bn& order() const = 0;  // r, prime
  virtual std::size_t elt_size() const = 0;

  virtual Elt identity() const = 0;
  virtual Elt generator() const = 0;
  virtual Elt mul(const Elt& a, const Elt& b) const = 0;
  virtual Elt exp(const Elt& a, const Bn& k) const = 0;
  // Exponentiation for secret exponents; takes the constant-time path.
  virtual Elt exp_sec(const Elt& a, const Bn& k) const = 0;
  virtual Elt inverse(const Elt& a) const = 0;
  virtual bool eq(const Elt& a, const Elt& b) const = 0;
  virtual bool is_identity(const Elt& a) const = 0;
  // Membership check for possibly-hostile handles; decode() enforces the same
  // predicate on byte strings.
  virtual bool is_member(const Elt& a) const = 0;

  virtual Bytes encode(const Elt& a) const = 0;
  virtual std::optional<Elt> decode(ByteView bytes) const = 0;

  Elt exp_gen(const Bn& k) const { return exp(generator(), k); }
  Bn rand_scalar(Rng& rng) const { return Bn::rand_below(order(), rng); }

  static const Group& by_id(GroupId id);  // process-wide singletons
};

class TinyGroup final : public Group {
 public:
  static constexpr std::uint32_t kModulus = 917519;  // 65537 * 14 + 1, prime
  static constexpr std::uint32_t kOrder = 65537;
  static constexpr std::uint32_t kGenerator = 16384;  // 2^14, order 65537

  static const TinyGroup& instance();

  GroupId id() const override { return GroupId::tiny; }
  const Bn& order() const override { return order_; }
  std::size_t elt_size() const override { return 4; }

  Elt identity() const override { return Elt(1u); }
  Elt generator() const override { return Elt(kGenerator); }
  Elt mul(const Elt& a, const Elt& b) const override;
  Elt exp(const Elt& a, const Bn& k) const override;
  Elt exp_sec(const Elt& a, const Bn& k) const override { return exp(a, k); }
  Elt inverse(const Elt& a) const override;
  bool eq(const Elt& a, const Elt& b) const override { return a.residue() == b.residue(); }
  bool is_identity(const Elt& a) const override { return a.residue() == 1; }
  bool is_member(const Elt& a) const override { return is_subgroup_residue(a.residue()); }

  Bytes encode(const Elt& a) const override;
  std::optional<Elt> decode(ByteView bytes) const override;

  // Full discrete-log oracle: log_g of any subgroup element.
  std::uint32_t dlog(const Elt& a) const;

  Elt from_residue(std::uint32_t v) const;  // throws if not a subgroup member
  // Builds a handle without the membership check, for adversarial-input tests.
  Elt from_residue_unchecked(std::uint32_t v) const { return Elt(v); }
  static bool is_subgroup_residue(std::uint32_t v);

 private:
  TinyGroup();
  Bn order_;
};

class P256Group final : public Group {
 public:
  static const P256Group& instance();

  GroupId id() const override { return GroupId::p256; }
  const Bn& order() const override { return order_; }
  std::size_t elt_size() const override { return 33; }

  Elt identity() const override;
  Elt generator() const override;
  Elt mul(const Elt& a, const Elt& b) const override;
  Elt exp(const Elt& a, const Bn& k) const override;
  Elt exp_sec(const Elt& a, const Bn& k) const override;
  Elt inverse(const Elt& a) const override;
  bool eq(const Elt& a, const Elt& b) const override;
  bool is_identity(const Elt& a) const override;
  bool is_member(const Elt& a) const override;

  Bytes encode(const Elt& a) const override;
  std::optional<Elt> decode(ByteView bytes) const override;

 private:
  P256Group();
  Elt wrap(EC_POINT* p) const;
  EC_GROUP* grp_;
  Bn order_;
};

}  // namespace credstuff::crypto
