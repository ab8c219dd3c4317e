#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "credstuff/bn.hpp"
#include "credstuff/hash.hpp"
#include "credstuff/rng.hpp"

namespace credstuff::cuckoo {

// Cuckoo filter stored as a b x beta matrix over Z_r.  Occupied slots hold
// fingerprints drawn from F = { odd residues in [1, 2|F|) }; free slots hold
// uniform residues from Z_r \ F, so a slot's type is decidable only by the
// public predicate "odd and below 2|F|".

struct FilterParams {
  std::uint32_t buckets = 16;       // beta, power of two, <= 2^16
  std::uint32_t bucket_size = 16;   // b
  std::uint64_t fprint_space = 1ull << 32;  // |F|
  std::uint32_t max_kicks = 500;
  Key128 hash_key{};

  // Expected false-positive rate at high occupancy.
  double fp_rate() const {
    return 2.0 * static_cast<double>(bucket_size) / static_cast<double>(fprint_space);
  }

  // Smallest power-of-two bucket count whose 98%-occupancy capacity covers
  // the requested element count.
  static std::uint32_t buckets_for_capacity(std::uint32_t capacity, std::uint32_t bucket_size);

  void check() const;  // throws std::invalid_argument on malformed parameters
};

struct FingerprintEntry {
  std::uint16_t bucket;
  std::uint64_t fprint;
  std::int64_t stamp;  // inserted-at time, caller-defined clock
};

struct FilterFull : std::runtime_error {
  FilterFull() : std::runtime_error("cuckoo filter full") {}
};

using Residue = std::array<std::uint8_t, 32>;  // 32-byte big-endian residue

class CuckooFilter {
 public:
  // Fresh empty filter; every slot is filled with a uniform non-fingerprint
  // residue of Z_order.
  CuckooFilter(FilterParams params, Bn order, Rng& rng);

  const FilterParams& params() const { return params_; }
  const Bn& order() const { return order_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t slot_count() const { return slots_.size(); }

  std::uint64_t fprint(ByteView element) const;
  // (i1, i2): primary bucket and its fingerprint-derived alternate.
  std::pair<std::uint32_t, std::uint32_t> indices_for(ByteView element) const;
  // The partner bucket of `bucket` for a given fingerprint; an involution.
  std::uint32_t alt_bucket(std::uint32_t bucket, std::uint64_t fp) const;

  bool contains(ByteView element) const;
  void insert(ByteView element, std::int64_t stamp, Rng& rng);  // throws FilterFull
  bool remove(ByteView element, Rng& rng);  // false if no matching entry

  // Independently permutes the slots within every column; membership is
  // unchanged.
  void permute_columns(Rng& rng);

  const Residue& slot(std::uint32_t row, std::uint32_t col) const {
    return slots_.at(index(row, col));
  }
  bool occupied(std::uint32_t row, std::uint32_t col) const { return occupied_.at(index(row, col)); }
  const std::vector<FingerprintEntry>& entries() const { return entries_; }

  // True iff the residue lies in the fingerprint space F.
  bool in_fingerprint_space(const Residue& r) const;

  Bytes snapshot() const;
  static CuckooFilter restore(ByteView bytes, Bn order);  // throws on corrupt input

 private:
  CuckooFilter(FilterParams params, Bn order);  // uninitialized slots, for restore

  std::size_t index(std::uint32_t row, std::uint32_t col) const {
    return static_cast<std::size_t>(row) * params_.buckets + col;
  }
  Residue random_free_residue(Rng& rng) const;
  bool place_in_free_slot(std::uint32_t col, std::uint64_t fp, std::int64_t stamp);
  bool bucket_has(std::uint32_t col, const Residue& fp) const;

  FilterParams params_;
  Bn order_;
  std::vector<Residue> slots_;    // row-major: row * beta + col
  std::vector<bool> occupied_;
  std::vector<FingerprintEntry> entries_;  // insertion-ordered
};

Residue residue_from_u64(std::uint64_t v);
std::uint64_t residue_low64(const Residue& r);
Residue residue_from_bn(const Bn& v);

// Hash derivations shared by both protocol sides: a querier computes the
// fingerprint and bucket pair from the population's agreed FilterParams alone,
// with no filter instance in hand.  The member functions above delegate here.
std::uint64_t element_fprint(const FilterParams& params, ByteView element);
std::uint32_t partner_bucket(const FilterParams& params, std::uint32_t bucket, std::uint64_t fp);
std::pair<std::uint32_t, std::uint32_t> element_indices(const FilterParams& params,
                                                        ByteView element);

}  // namespace credstuff::cuckoo
