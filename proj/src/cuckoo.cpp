#include "credstuff/cuckoo.hpp"

#include <algorithm>
#include <cstring>

namespace credstuff::cuckoo {

namespace {

constexpr std::uint8_t kTagBucket = 0x01;
constexpr std::uint8_t kTagFprint = 0x02;
constexpr char kMagic[4] = {'C', 'K', 'F', '1'};

std::uint64_t tagged_hash(const Key128& key, std::uint8_t tag, ByteView data) {
  std::uint8_t buf[64];
  if (data.size() + 1 > sizeof buf) throw std::invalid_argument("element too long to hash");
  buf[0] = tag;
  std::memcpy(buf + 1, data.data(), data.size());
  return siphash24(key, ByteView(buf, data.size() + 1));
}

std::array<std::uint8_t, 8> fp_bytes(std::uint64_t fp) {
  std::array<std::uint8_t, 8> out{};
  for (int i = 7; i >= 0; --i) {
    out[i] = static_cast<std::uint8_t>(fp);
    fp >>= 8;
  }
  return out;
}

}  // namespace

Residue residue_from_u64(std::uint64_t v) {
  Residue r{};
  for (int i = 31; i >= 24; --i) {
    r[i] = static_cast<std::uint8_t>(v);
    v >>= 8;
  }
  return r;
}

std::uint64_t residue_low64(const Residue& r) { return load_u64(r.data() + 24); }

Residue residue_from_bn(const Bn& v) {
  Bytes be = v.to_be(32);
  Residue r{};
  std::memcpy(r.data(), be.data(), 32);
  return r;
}

std::uint64_t element_fprint(const FilterParams& params, ByteView element) {
  const std::uint64_t h = tagged_hash(params.hash_key, kTagFprint, element);
  return 2 * (h % params.fprint_space) + 1;
}

std::uint32_t partner_bucket(const FilterParams& params, std::uint32_t bucket, std::uint64_t fp) {
  auto fb = fp_bytes(fp);
  const std::uint64_t h = tagged_hash(params.hash_key, kTagBucket, ByteView(fb.data(), fb.size()));
  return bucket ^ static_cast<std::uint32_t>(h % params.buckets);
}

std::pair<std::uint32_t, std::uint32_t> element_indices(const FilterParams& params,
                                                        ByteView element) {
  const std::uint32_t i1 =
      static_cast<std::uint32_t>(tagged_hash(params.hash_key, kTagBucket, element) % params.buckets);
  return {i1, partner_bucket(params, i1, element_fprint(params, element))};
}

std::uint32_t FilterParams::buckets_for_capacity(std::uint32_t capacity,
                                                std::uint32_t bucket_size) {
  std::uint32_t beta = 1;
  while (static_cast<double>(beta) * bucket_size * 0.98 < static_cast<double>(capacity)) {
    if (beta > (1u << 16)) throw std::invalid_argument("capacity too large");
    beta <<= 1;
  }
  return beta;
}

void FilterParams::check() const {
  if (buckets == 0 || (buckets & (buckets - 1)) != 0 || buckets > (1u << 16))
    throw std::invalid_argument("bucket count must be a power of two <= 2^16");
  if (bucket_size == 0 || bucket_size > (1u << 16))
    throw std::invalid_argument("bucket size out of range");
  if (fprint_space < 2 || fprint_space > (1ull << 32))
    throw std::invalid_argument("fingerprint space out of range");
  if (max_kicks == 0) throw std::invalid_argument("max kicks must be positive");
}

CuckooFilter::CuckooFilter(FilterParams params, Bn order) : params_(params), order_(std::move(order)) {
  params_.check();
  // Fingerprints must be nonzero residues of Z_order.
  if (!(Bn(2 * params_.fprint_space) < order_))
    throw std::invalid_argument("fingerprint space does not fit the residue field");
  slots_.resize(static_cast<std::size_t>(params_.buckets) * params_.bucket_size);
  occupied_.resize(slots_.size(), false);
}

CuckooFilter::CuckooFilter(FilterParams params, Bn order, Rng& rng)
    : CuckooFilter(params, std::move(order)) {
  for (auto& s : slots_) s = random_free_residue(rng);
}

bool CuckooFilter::in_fingerprint_space(const Residue& r) const {
  for (int i = 0; i < 24; ++i)
    if (r[i]) return false;
  const std::uint64_t v = residue_low64(r);
  return (v & 1) != 0 && v < 2 * params_.fprint_space;
}

std::uint64_t CuckooFilter::fprint(ByteView element) const {
  return element_fprint(params_, element);
}

std::uint32_t CuckooFilter::alt_bucket(std::uint32_t bucket, std::uint64_t fp) const {
  return partner_bucket(params_, bucket, fp);
}

std::pair<std::uint32_t, std::uint32_t> CuckooFilter::indices_for(ByteView element) const {
  return element_indices(params_, element);
}

Residue CuckooFilter::random_free_residue(Rng& rng) const {
  for (;;) {
    Residue r = residue_from_bn(Bn::rand_below(order_, rng));
    if (!in_fingerprint_space(r)) return r;
  }
}

bool CuckooFilter::bucket_has(std::uint32_t col, const Residue& fp) const {
  for (std::uint32_t row = 0; row < params_.bucket_size; ++row)
    if (slots_[index(row, col)] == fp) return true;
  return false;
}

bool CuckooFilter::contains(ByteView element) const {
  const std::uint64_t fp = fprint(element);
  const Residue fr = residue_from_u64(fp);
  const auto [i1, i2] = indices_for(element);
  return bucket_has(i1, fr) || (i2 != i1 && bucket_has(i2, fr));
}

bool CuckooFilter::place_in_free_slot(std::uint32_t col, std::uint64_t fp, std::int64_t stamp) {
  for (std::uint32_t row = 0; row < params_.bucket_size; ++row) {
    const std::size_t ix = index(row, col);
    if (!occupied_[ix]) {
      slots_[ix] = residue_from_u64(fp);
      occupied_[ix] = true;
      entries_.push_back({static_cast<std::uint16_t>(col), fp, stamp});
      return true;
    }
  }
  return false;
}

void CuckooFilter::insert(ByteView element, std::int64_t stamp, Rng& rng) {
  const std::uint64_t fp = fprint(element);
  const auto [i1, i2] = indices_for(element);
  if (place_in_free_slot(i1, fp, stamp) || (i2 != i1 && place_in_free_slot(i2, fp, stamp)))
    return;

  // Both buckets full: random-eviction walk with rollback on failure so a
  // failed insert leaves the filter unchanged.
  struct SlotUndo {
    std::size_t ix;
    Residue prev;
  };
  struct EntryUndo {
    std::size_t entry_ix;
    std::uint16_t prev_bucket;
  };
  std::vector<SlotUndo> slot_undo;
  std::vector<EntryUndo> entry_undo;

  std::uint64_t hand_fp = fp;
  std::int64_t hand_stamp = stamp;
  bool hand_is_new = true;
  std::size_t hand_entry = 0;
  std::uint32_t col = rng.below(2) ? i2 : i1;

  for (std::uint32_t kick = 0; kick < params_.max_kicks; ++kick) {
    const std::uint32_t row = static_cast<std::uint32_t>(rng.below(params_.bucket_size));
    const std::size_t ix = index(row, col);
    const std::uint64_t victim_fp = residue_low64(slots_[ix]);

    // Locate the victim's log entry before overwriting its slot.
    std::size_t victim_entry = entries_.size();
    for (std::size_t e = 0; e < entries_.size(); ++e)
      if (entries_[e].bucket == col && entries_[e].fprint == victim_fp) {
        victim_entry = e;
        break;
      }
    if (victim_entry == entries_.size()) throw std::logic_error("cuckoo entry log out of sync");

    slot_undo.push_back({ix, slots_[ix]});
    slots_[ix] = residue_from_u64(hand_fp);
    if (hand_is_new) {
      entries_.push_back({static_cast<std::uint16_t>(col), hand_fp, hand_stamp});
      hand_is_new = false;
    } else {
      entry_undo.push_back({hand_entry, entries_[hand_entry].bucket});
      entries_[hand_entry].bucket = static_cast<std::uint16_t>(col);
    }

    hand_fp = victim_fp;
    hand_entry = victim_entry;
    col = alt_bucket(col, victim_fp);

    for (std::uint32_t r2 = 0; r2 < params_.bucket_size; ++r2) {
      const std::size_t jx = index(r2, col);
      if (!occupied_[jx]) {
        slot_undo.push_back({jx, slots_[jx]});
        slots_[jx] = residue_from_u64(hand_fp);
        occupied_[jx] = true;
        entry_undo.push_back({hand_entry, entries_[hand_entry].bucket});
        entries_[hand_entry].bucket = static_cast<std::uint16_t>(col);
        return;
      }
    }
  }

  // Revert the walk.
  if (!hand_is_new) {
    for (auto it = entry_undo.rbegin(); it != entry_undo.rend(); ++it)
      entries_[it->entry_ix].bucket = it->prev_bucket;
    entries_.pop_back();
  }
  for (auto it = slot_undo.rbegin(); it != slot_undo.rend(); ++it) slots_[it->ix] = it->prev;
  throw FilterFull();
}

bool CuckooFilter::remove(ByteView element, Rng& rng) {
  const std::uint64_t fp = fprint(element);
  const Residue fr = residue_from_u64(fp);
  const auto [i1, i2] = indices_for(element);
  for (std::uint32_t col : {i1, i2}) {
    for (std::uint32_t row = 0; row < params_.bucket_size; ++row) {
      const std::size_t ix = index(row, col);
      if (occupied_[ix] && slots_[ix] == fr) {
        slots_[ix] = random_free_residue(rng);
        occupied_[ix] = false;
        for (std::size_t e = 0; e < entries_.size(); ++e)
          if (entries_[e].bucket == col && entries_[e].fprint == fp) {
            entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(e));
            return true;
          }
        throw std::logic_error("cuckoo entry log out of sync");
      }
    }
    if (i2 == i1) break;
  }
  return false;
}

void CuckooFilter::permute_columns(Rng& rng) {
  for (std::uint32_t col = 0; col < params_.buckets; ++col) {
    for (std::uint32_t row = params_.bucket_size; row > 1; --row) {
      const std::uint32_t other = static_cast<std::uint32_t>(rng.below(row));
      const std::size_t a = index(row - 1, col), b = index(other, col);
      std::swap(slots_[a], slots_[b]);
      const bool tmp = occupied_[a];
      occupied_[a] = occupied_[b];
      occupied_[b] = tmp;
    }
  }
}

Bytes CuckooFilter::snapshot() const {
  Bytes out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, params_.buckets);
  put_u32(out, params_.bucket_size);
  put_u64(out, params_.fprint_space);
  put_u32(out, params_.max_kicks);
  out.insert(out.end(), params_.hash_key.begin(), params_.hash_key.end());
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& s : slots_) out.insert(out.end(), s.begin(), s.end());
  for (const auto& e : entries_) {
    put_u16(out, e.bucket);
    put_u64(out, e.fprint);
    put_i64(out, e.stamp);
  }
  return out;
}

CuckooFilter CuckooFilter::restore(ByteView bytes, Bn order) {
  ByteReader rd(bytes);
  const auto magic = rd.take_array<4>();
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw std::invalid_argument("cuckoo snapshot: bad magic");
  FilterParams p;
  p.buckets = rd.u32();
  p.bucket_size = rd.u32();
  p.fprint_space = rd.u64();
  p.max_kicks = rd.u32();
  p.hash_key = rd.take_array<16>();
  const std::uint32_t entry_count = rd.u32();

  CuckooFilter f(p, std::move(order));
  for (auto& s : f.slots_) {
    ByteView v = rd.take(32);
    std::memcpy(s.data(), v.data(), 32);
    // Residues must lie in Z_order.
    if (!(Bn::from_be(v) < f.order_)) throw std::invalid_argument("cuckoo snapshot: bad residue");
  }
  for (std::size_t i = 0; i < f.slots_.size(); ++i)
    f.occupied_[i] = f.in_fingerprint_space(f.slots_[i]);

  f.entries_.reserve(entry_count);
  for (std::uint32_t i = 0; i < entry_count; ++i) {
    FingerprintEntry e{};
    e.bucket = rd.u16();
    e.fprint = rd.u64();
    e.stamp = rd.i64();
    if (e.bucket >= p.buckets) throw std::invalid_argument("cuckoo snapshot: bad bucket");
    f.entries_.push_back(e);
  }
  if (!rd.done()) throw std::invalid_argument("cuckoo snapshot: trailing bytes");

  // Entry log and matrix must agree: per bucket, the multiset of logged
  // fingerprints equals the multiset of fingerprint-space slot values.
  for (std::uint32_t col = 0; col < p.buckets; ++col) {
    std::vector<std::uint64_t> logged, stored;
    for (const auto& e : f.entries_)
      if (e.bucket == col) logged.push_back(e.fprint);
    for (std::uint32_t row = 0; row < p.bucket_size; ++row)
      if (f.occupied_[f.index(row, col)]) stored.push_back(residue_low64(f.slot(row, col)));
    std::sort(logged.begin(), logged.end());
    std::sort(stored.begin(), stored.end());
    if (logged != stored) throw std::invalid_argument("cuckoo snapshot: log/matrix mismatch");
  }
  return f;
}

}  // namespace credstuff::cuckoo
