#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "credstuff/cuckoo.hpp"
#include "credstuff/hash.hpp"
#include "credstuff/rng.hpp"

namespace credstuff::detect {

// Stuffing detection at one login server: per-account suspicious sets filled
// during collecting phases, then a counting phase that privately asks other
// servers how many of them have seen the just-entered password for the same
// account, flagging a distributed attack when at least `w` of them answer yes.

// --- deterministic per-(account, password) element derivation ---------------

// Salt for an account identifier: keyed hash of the canonical id under a
// deployment-wide key, so every server of a deployment derives the same salt.
Digest32 account_salt(ByteView deployment_key, std::string_view account_id);

enum class CanonicalMode : std::uint8_t {
  identity = 0,         // use the password as typed
  lowercase_first = 1,  // fold a leading ASCII capital before hashing
};

std::string canonical_password(std::string_view password, CanonicalMode mode);

// The opaque element fed to the membership machinery: a memory-hard hash of
// the canonical password under the account salt.  Never stores the password.
std::array<std::uint8_t, 32> password_element(const Digest32& salt, std::string_view password,
                                              const ScryptParams& params,
                                              CanonicalMode mode = CanonicalMode::identity);

// --- attack-detection-service abstraction -----------------------------------

struct AdsVerdict {
  bool d_col = false;  // "this attempt looks like part of a collecting campaign"
  bool d_cnt = false;  // "this attempt warrants the counting phase"
};

// Joint sampler for a synthetic detector with marginal true/false-positive
// rates rho_col and rho_cnt: the larger-rate signal fires with its marginal
// probability, the smaller-rate signal fires only alongside it (ties treat
// cnt as the larger).  Hence the lower-rate verdict never appears alone.
AdsVerdict ads_sample(double rho_col, double rho_cnt, Rng& rng);

// --- per-account suspicious set ---------------------------------------------

enum class Policy : std::uint8_t {
  susp = 0,       // add only incorrect attempts flagged d_col
  susp_plus = 1,  // add every flagged attempt; correct ones await a 2FA pass
};

struct UnknownPending : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SuspiciousSetConfig {
  Policy policy = Policy::susp;
  cuckoo::FilterParams filter;
  // Hard cap on tracked elements: one above the deployment's failed-attempt
  // rate limit per expiration window.  Reaching it forces out the
  // longest-unused entry.
  std::size_t max_entries = 101;
};

class SuspiciousSet {
 public:
  SuspiciousSet(std::string account_id, SuspiciousSetConfig config, const Bn& order, Rng& rng);

  const std::string& account_id() const { return account_; }
  const SuspiciousSetConfig& config() const { return config_; }
  const cuckoo::CuckooFilter& filter() const { return filter_; }
  std::size_t size() const { return records_.size(); }
  bool contains(ByteView element) const;
  bool pending_2fa(ByteView element) const;
  std::int64_t last_use(ByteView element) const;  // throws if absent

  // Collecting phase for one login attempt carrying element e.  Any attempt
  // with a tracked e refreshes its last-use time; additions follow the
  // policy's rule and only when the attempt was flagged d_col.  A full filter
  // or a full set forces out the longest-unused entry first.
  void observe_login(ByteView element, bool correct, const AdsVerdict& verdict, std::int64_t now,
                     Rng& rng);

  // Outcome of the second-factor challenge a susp_plus addition triggered:
  // a pass proves the legitimate owner and deletes the element, a fail keeps
  // it tracked.  Throws UnknownPending unless the element awaits a challenge.
  void second_factor_result(ByteView element, bool passed, Rng& rng);

  // Deletes every element unused for at least expiration_time; returns how
  // many were removed.
  std::size_t expire(std::int64_t now, std::int64_t expiration_time, Rng& rng);

  // Re-randomizes the filter's slot positions; called after serving a
  // membership query so repeated queries cannot correlate positions.
  void permute_filter(Rng& rng) { filter_.permute_columns(rng); }

  // Persistence: filter snapshot plus a sidecar with policy, records and
  // pending flags.  load() rejects inconsistent or truncated input.
  Bytes save() const;
  static SuspiciousSet load(ByteView bytes, const Bn& order);

 private:
  struct Record {
    std::array<std::uint8_t, 32> element;
    std::int64_t last_use;
    bool pending;
  };

  SuspiciousSet(std::string account_id, SuspiciousSetConfig config, const Bn& order);

  Record* find(ByteView element);
  const Record* find(ByteView element) const;
  void add_tracked(ByteView element, bool pending, std::int64_t now, Rng& rng);
  void drop_record(std::size_t index, Rng& rng);
  void force_out_oldest(Rng& rng);

  std::string account_;
  SuspiciousSetConfig config_;
  cuckoo::CuckooFilter filter_;
  std::vector<Record> records_;
};

// --- counting phase ----------------------------------------------------------

struct DirectoryUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One membership poll of the responder population for an element; implemented
// over the wire layer in production and by stubs in tests.
class QueryChannel {
 public:
  virtual ~QueryChannel() = default;
  // One vote per reachable responder.  Throws DirectoryUnavailable when the
  // coordination layer cannot serve the poll.
  virtual std::vector<bool> membership_votes(ByteView element) = 0;
};

struct CountingDecision {
  std::uint32_t queried = 0;  // responders asked
  std::uint32_t matches = 0;  // affirmative votes
  std::uint32_t width = 0;    // threshold w
  bool detected = false;
};

// Runs after the local collecting phase.  Queries are issued only for a
// correct password on an attempt flagged d_cnt; the attack verdict is
// "matches >= w".  DirectoryUnavailable propagates so the embedder can apply
// its own fail-open or fail-closed stance.
CountingDecision counting_phase(ByteView element, bool correct, const AdsVerdict& verdict,
                                QueryChannel& responders, std::uint32_t w);

}  // namespace credstuff::detect
