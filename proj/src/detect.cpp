#include "credstuff/detect.hpp"

#include <algorithm>
#include <cstring>

namespace credstuff::detect {

Digest32 account_salt(ByteView deployment_key, std::string_view account_id) {
  return hmac_sha256(deployment_key,
                     ByteView(reinterpret_cast<const std::uint8_t*>(account_id.data()),
                              account_id.size()));
}

std::string canonical_password(std::string_view password, CanonicalMode mode) {
  std::string out(password);
  if (mode == CanonicalMode::lowercase_first && !out.empty() && out[0] >= 'A' && out[0] <= 'Z')
    out[0] = static_cast<char>(out[0] - 'A' + 'a');
  return out;
}

std::array<std::uint8_t, 32> password_element(const Digest32& salt, std::string_view password,
                                              const ScryptParams& params, CanonicalMode mode) {
  const std::string canon = canonical_password(password, mode);
  return scrypt32(ByteView(salt.data(), salt.size()), canon, params);
}

AdsVerdict ads_sample(double rho_col, double rho_cnt, Rng& rng) {
  if (!(rho_col >= 0.0 && rho_col <= 1.0) || !(rho_cnt >= 0.0 && rho_cnt <= 1.0))
    throw std::invalid_argument("detector rates must lie in [0, 1]");
  const bool cnt_is_hi = rho_cnt >= rho_col;
  const double rho_hi = cnt_is_hi ? rho_cnt : rho_col;
  const double rho_lo = cnt_is_hi ? rho_col : rho_cnt;
  const bool d_hi = rng.bernoulli(rho_hi);
  const bool d_lo = d_hi && rho_hi > 0.0 && rng.bernoulli(rho_lo / rho_hi);
  AdsVerdict v;
  v.d_cnt = cnt_is_hi ? d_hi : d_lo;
  v.d_col = cnt_is_hi ? d_lo : d_hi;
  return v;
}

SuspiciousSet::SuspiciousSet(std::string account_id, SuspiciousSetConfig config, const Bn& order)
    : account_(std::move(account_id)),
      config_(std::move(config)),
      filter_(config_.filter, order, system_rng()) {
  if (config_.max_entries == 0) throw std::invalid_argument("entry cap must be positive");
}

SuspiciousSet::SuspiciousSet(std::string account_id, SuspiciousSetConfig config, const Bn& order,
                             Rng& rng)
    : account_(std::move(account_id)), config_(std::move(config)), filter_(config_.filter, order, rng) {
  if (config_.max_entries == 0) throw std::invalid_argument("entry cap must be positive");
}

SuspiciousSet::Record* SuspiciousSet::find(ByteView element) {
  for (auto& r : records_)
    if (element.size() == r.element.size() &&
        std::memcmp(r.element.data(), element.data(), r.element.size()) == 0)
      return &r;
  return nullptr;
}

const SuspiciousSet::Record* SuspiciousSet::find(ByteView element) const {
  return const_cast<SuspiciousSet*>(this)->find(element);
}

bool SuspiciousSet::contains(ByteView element) const { return find(element) != nullptr; }

bool SuspiciousSet::pending_2fa(ByteView element) const {
  const Record* r = find(element);
  return r != nullptr && r->pending;
}

std::int64_t SuspiciousSet::last_use(ByteView element) const {
  const Record* r = find(element);
  if (r == nullptr) throw std::out_of_range("element not tracked");
  return r->last_use;
}

void SuspiciousSet::drop_record(std::size_t index, Rng& rng) {
  const Record& r = records_.at(index);
  if (!filter_.remove(ByteView(r.element.data(), r.element.size()), rng))
    throw std::logic_error("suspicious set out of sync with its filter");
  records_.erase(records_.begin() + static_cast<std::ptrdiff_t>(index));
}

void SuspiciousSet::force_out_oldest(Rng& rng) {
  if (records_.empty()) throw std::logic_error("cannot evict from an empty set");
  std::size_t oldest = 0;
  for (std::size_t i = 1; i < records_.size(); ++i)
    if (records_[i].last_use < records_[oldest].last_use) oldest = i;
  drop_record(oldest, rng);
}

void SuspiciousSet::add_tracked(ByteView element, bool pending, std::int64_t now, Rng& rng) {
  Record r{};
  if (element.size() != r.element.size())
    throw std::invalid_argument("password elements are 32 bytes");
  std::memcpy(r.element.data(), element.data(), r.element.size());
  r.last_use = now;
  r.pending = pending;

  if (records_.size() >= config_.max_entries) force_out_oldest(rng);
  for (;;) {
    try {
      filter_.insert(element, now, rng);
      break;
    } catch (const cuckoo::FilterFull&) {
      force_out_oldest(rng);  // rare at sane capacities; frees a slot and retries
    }
  }
  records_.push_back(r);
}

void SuspiciousSet::observe_login(ByteView element, bool correct, const AdsVerdict& verdict,
                                  std::int64_t now, Rng& rng) {
  if (Record* r = find(element)) {
    // Any attempt carrying a tracked element counts as use, whatever the
    // verdict says about this particular attempt.
    r->last_use = now;
    if (verdict.d_col && correct && config_.policy == Policy::susp_plus) r->pending = true;
    return;
  }
  if (!verdict.d_col) return;
  switch (config_.policy) {
    case Policy::susp:
      if (!correct) add_tracked(element, false, now, rng);
      break;
    case Policy::susp_plus:
      add_tracked(element, correct, now, rng);
      break;
  }
}

void SuspiciousSet::second_factor_result(ByteView element, bool passed, Rng& rng) {
  Record* r = find(element);
  if (r == nullptr || !r->pending)
    throw UnknownPending("no second-factor challenge pending for this element");
  if (passed) {
    drop_record(static_cast<std::size_t>(r - records_.data()), rng);
  } else {
    r->pending = false;
  }
}

std::size_t SuspiciousSet::expire(std::int64_t now, std::int64_t expiration_time, Rng& rng) {
  std::size_t removed = 0;
  for (std::size_t i = records_.size(); i > 0; --i) {
    if (now - records_[i - 1].last_use >= expiration_time) {
      drop_record(i - 1, rng);
      ++removed;
    }
  }
  return removed;
}

namespace {
constexpr char kSetMagic[5] = {'S', 'S', 'E', 'T', '1'};
}

Bytes SuspiciousSet::save() const {
  Bytes out(kSetMagic, kSetMagic + sizeof kSetMagic);
  out.push_back(static_cast<std::uint8_t>(config_.policy));
  put_u64(out, config_.max_entries);
  put_u32(out, static_cast<std::uint32_t>(account_.size()));
  out.insert(out.end(), account_.begin(), account_.end());
  put_u32(out, static_cast<std::uint32_t>(records_.size()));
  for (const auto& r : records_) {
    out.insert(out.end(), r.element.begin(), r.element.end());
    put_i64(out, r.last_use);
    out.push_back(r.pending ? 1 : 0);
  }
  Bytes snap = filter_.snapshot();
  put_u32(out, static_cast<std::uint32_t>(snap.size()));
  out.insert(out.end(), snap.begin(), snap.end());
  return out;
}

SuspiciousSet SuspiciousSet::load(ByteView bytes, const Bn& order) {
  ByteReader rd(bytes);
  const auto magic = rd.take_array<5>();
  if (std::memcmp(magic.data(), kSetMagic, sizeof kSetMagic) != 0)
    throw std::invalid_argument("suspicious set: bad magic");
  const std::uint8_t policy_raw = rd.u8();
  if (policy_raw > 1) throw std::invalid_argument("suspicious set: bad policy");
  SuspiciousSetConfig cfg;
  cfg.policy = static_cast<Policy>(policy_raw);
  cfg.max_entries = rd.u64();
  const std::uint32_t account_len = rd.u32();
  ByteView account_view = rd.take(account_len);
  std::string account(reinterpret_cast<const char*>(account_view.data()), account_view.size());
  const std::uint32_t record_count = rd.u32();
  std::vector<Record> records;
  records.reserve(record_count);
  for (std::uint32_t i = 0; i < record_count; ++i) {
    Record r{};
    const auto e = rd.take_array<32>();
    std::memcpy(r.element.data(), e.data(), 32);
    r.last_use = rd.i64();
    const std::uint8_t pending = rd.u8();
    if (pending > 1) throw std::invalid_argument("suspicious set: bad pending flag");
    r.pending = pending != 0;
    records.push_back(r);
  }
  const std::uint32_t snap_len = rd.u32();
  ByteView snap = rd.take(snap_len);
  if (!rd.done()) throw std::invalid_argument("suspicious set: trailing bytes");

  cuckoo::CuckooFilter filter = cuckoo::CuckooFilter::restore(snap, order);
  cfg.filter = filter.params();
  SuspiciousSet set(std::move(account), std::move(cfg), order);
  set.filter_ = std::move(filter);
  set.records_ = std::move(records);
  if (set.filter_.size() != set.records_.size())
    throw std::invalid_argument("suspicious set: record/filter mismatch");
  for (const auto& r : set.records_)
    if (!set.filter_.contains(ByteView(r.element.data(), r.element.size())))
      throw std::invalid_argument("suspicious set: record missing from filter");
  for (std::size_t i = 0; i < set.records_.size(); ++i)
    for (std::size_t j = i + 1; j < set.records_.size(); ++j)
      if (set.records_[i].element == set.records_[j].element)
        throw std::invalid_argument("suspicious set: duplicate record");
  return set;
}

CountingDecision counting_phase(ByteView element, bool correct, const AdsVerdict& verdict,
                                QueryChannel& responders, std::uint32_t w) {
  CountingDecision d;
  d.width = w;
  if (!verdict.d_cnt || !correct) return d;
  const std::vector<bool> votes = responders.membership_votes(element);
  d.queried = static_cast<std::uint32_t>(votes.size());
  for (bool v : votes) d.matches += v ? 1 : 0;
  d.detected = d.matches >= w;
  return d;
}

}  // namespace credstuff::detect
