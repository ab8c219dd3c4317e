#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "credstuff/cuckoo.hpp"
#include "credstuff/elgamal.hpp"

namespace credstuff::pmt {

// Private membership test against a responder's cuckoo matrix X (b rows,
// beta bucket-columns).  The querier sends, under a fresh key,
//   f = Enc(-fprint(x))  and  Q (beta x 2), column j the indicator of bucket
//   i_j of x,
// and the responder returns R = M o ((X * Q) + F): each of the 2b output
// entries encrypts m * (X[row][i_j] - fprint(x)) for fresh uniform nonzero m,
// so an entry encrypts zero exactly when the probed slot holds x's
// fingerprint.  The querier learns the OR of zero tests and nothing else; the
// responder learns nothing about x.

struct PmtQuery {
  crypto::PublicKey pk;
  crypto::Ciphertext f;                              // Enc(-fprint(x))
  std::vector<std::array<crypto::Ciphertext, 2>> q;  // beta rows x 2 columns
};

struct PmtResponse {
  // 2b entries.  Shuffled by default; the unshuffled order is row-major over
  // (filter row, query column).
  std::vector<crypto::Ciphertext> entries;
};

struct MalformedQuery : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MalformedResponse : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-query precomputation: one keypair, 2*beta - 2 encryptions of zero and 2
// of one, generated ahead of time so that query assembly itself does no group
// exponentiations except the single f encryption.  A pool is single-use.
struct PrecomputePool {
  static PrecomputePool generate(const crypto::Group& g, std::uint32_t buckets, Rng& rng);

  crypto::KeyPair keys;
  std::vector<crypto::Ciphertext> zeros;
  std::vector<crypto::Ciphertext> ones;
  std::uint32_t buckets = 0;
  bool used = false;
};

struct BuiltQuery {
  PmtQuery query;
  crypto::SecretKey sk;
};

// Assembles the two indicator columns for x's bucket pair and f.  With a pool
// the assembly is O(beta) placements; without one it encrypts from scratch.
// The pool, if given, must match the group and bucket count and be unused.
BuiltQuery build_query(ByteView element, const cuckoo::FilterParams& params, const crypto::Group& g,
                       Rng& rng, PrecomputePool* pool = nullptr);

struct RespondOptions {
  bool shuffle_response = true;      // hide output positions
  bool rerandomize_outputs = true;   // fresh-uniform ciphertexts per entry
};

// Validates every query ciphertext (aborting with MalformedQuery on any
// non-group component or shape mismatch), then evaluates the response matrix.
// Pure given the filter snapshot.  The two option flags exist for protocol
// evaluation harnesses; production callers keep both hardening steps on.
PmtResponse respond(const PmtQuery& query, const cuckoo::CuckooFilter& filter, Rng& rng,
                    const RespondOptions& opts = {});

// OR of zero tests over the response.  Throws MalformedResponse if the
// response is empty or any entry fails validation.  Callers enforce the
// expected entry count (2b) from protocol parameters.
bool interpret(const crypto::SecretKey& sk, const crypto::PublicKey& pk, const PmtResponse& resp);

// ---------------------------------------------------------------------------
// Reference malicious querier for the extraction lower bound: issues crafted
// non-indicator queries (column j encrypts 1/v_j, f encrypts -1) so that the
// entry for (row, column j) is zero exactly when slot (row, i) holds candidate
// v_j, then sweeps candidate fingerprints in random order until the filter's
// single stored fingerprint is confirmed.  Test-group only.

struct ExtractionOutcome {
  bool confirmed = false;
  std::uint64_t recovered = 0;           // the fingerprint value found
  std::uint32_t queries = 0;             // protocol runs until confirmation
  std::vector<std::uint32_t> resolved_per_query;  // congruence tests resolved per run
};

// `hardened` turns on the responder-side countermeasures (response shuffle and
// a column permutation after every run); off, the querier attributes each
// entry to its (row, column) position and resolves all 2b congruence tests per
// run.  The filter must hold exactly one element over the tiny group.
ExtractionOutcome run_extraction(cuckoo::CuckooFilter& filter, bool hardened,
                                 std::uint32_t max_queries, Rng& rng);

}  // namespace credstuff::pmt
