#include "credstuff/pmt.hpp"

#include <algorithm>

namespace credstuff::pmt {

namespace {

Bn negate_mod(std::uint64_t v, const Bn& order) { return Bn(0).sub_mod(Bn(v), order); }

// Uniform in [1, order - 1].
Bn nonzero_scalar(const Bn& order, Rng& rng) {
  const Bn one(1);
  const Bn order_minus_1 = Bn(0).sub_mod(one, order);
  return Bn::rand_below(order_minus_1, rng).add_mod(one, order);
}

Bn slot_scalar(const cuckoo::Residue& r) {
  return Bn::from_be(ByteView(r.data(), r.size()));
}

}  // namespace

PrecomputePool PrecomputePool::generate(const crypto::Group& g, std::uint32_t buckets, Rng& rng) {
  if (buckets == 0) throw std::invalid_argument("bucket count must be positive");
  PrecomputePool pool;
  pool.keys = crypto::gen(g, rng);
  pool.buckets = buckets;
  pool.zeros.reserve(2 * buckets - 2);
  for (std::uint32_t i = 0; i + 2 < 2 * buckets; ++i)
    pool.zeros.push_back(crypto::encrypt_u64(pool.keys.pk, 0, rng));
  pool.ones.push_back(crypto::encrypt_u64(pool.keys.pk, 1, rng));
  pool.ones.push_back(crypto::encrypt_u64(pool.keys.pk, 1, rng));
  return pool;
}

BuiltQuery build_query(ByteView element, const cuckoo::FilterParams& params, const crypto::Group& g,
                       Rng& rng, PrecomputePool* pool) {
  params.check();
  const auto [i1, i2] = cuckoo::element_indices(params, element);
  const std::array<std::uint32_t, 2> target = {i1, i2};
  const std::uint64_t fp = cuckoo::element_fprint(params, element);

  crypto::KeyPair keys;
  std::vector<std::array<crypto::Ciphertext, 2>> q(params.buckets);
  if (pool != nullptr) {
    if (pool->used) throw std::invalid_argument("precompute pool already consumed");
    if (pool->buckets != params.buckets) throw std::invalid_argument("pool bucket count mismatch");
    if (pool->keys.pk.gid != g.id()) throw std::invalid_argument("pool group mismatch");
    pool->used = true;
    keys = std::move(pool->keys);
    std::size_t next_zero = 0;
    for (std::uint32_t k = 0; k < params.buckets; ++k)
      for (std::size_t j = 0; j < 2; ++j)
        q[k][j] = (k == target[j]) ? pool->ones[j] : pool->zeros[next_zero++];
  } else {
    keys = crypto::gen(g, rng);
    for (std::uint32_t k = 0; k < params.buckets; ++k)
      for (std::size_t j = 0; j < 2; ++j)
        q[k][j] = crypto::encrypt_u64(keys.pk, k == target[j] ? 1 : 0, rng);
  }

  crypto::Ciphertext f = crypto::encrypt(keys.pk, negate_mod(fp, g.order()), rng);
  return {{keys.pk, std::move(f), std::move(q)}, keys.sk};
}

PmtResponse respond(const PmtQuery& query, const cuckoo::CuckooFilter& filter, Rng& rng,
                    const RespondOptions& opts) {
  const cuckoo::FilterParams& fparams = filter.params();
  if (query.q.size() != fparams.buckets) throw MalformedQuery("query shape mismatch");
  const crypto::Group& g = query.pk.group();
  if (!(g.order() == filter.order())) throw MalformedQuery("query group mismatch");
  if (!g.is_member(query.pk.U)) throw MalformedQuery("public key not a group element");
  if (!crypto::validate(query.pk, query.f)) throw MalformedQuery("query ciphertext invalid");
  for (const auto& row : query.q)
    for (const auto& c : row)
      if (!crypto::validate(query.pk, c)) throw MalformedQuery("query ciphertext invalid");

  // All masking scalars are drawn before any entry is assembled, then each
  // entry gets its own final re-randomization.
  const std::size_t n_entries = 2 * static_cast<std::size_t>(fparams.bucket_size);
  std::vector<Bn> masks;
  masks.reserve(n_entries);
  for (std::size_t i = 0; i < n_entries; ++i) masks.push_back(nonzero_scalar(g.order(), rng));

  PmtResponse out;
  out.entries.reserve(n_entries);
  for (std::uint32_t row = 0; row < fparams.bucket_size; ++row) {
    for (std::size_t j = 0; j < 2; ++j) {
      // (X * Q)[row][j] = sum_k X[row][k] * Q[k][j], composed without
      // intermediate re-randomization; one fresh masking scalar and one final
      // re-randomization per transmitted entry.
      crypto::Ciphertext acc = crypto::exp_raw(query.pk, slot_scalar(filter.slot(row, 0)), query.q[0][j]);
      for (std::uint32_t k = 1; k < fparams.buckets; ++k)
        acc = crypto::add_raw(query.pk, acc,
                              crypto::exp_raw(query.pk, slot_scalar(filter.slot(row, k)), query.q[k][j]));
      acc = crypto::add_raw(query.pk, acc, query.f);
      acc = crypto::exp_raw(query.pk, masks[out.entries.size()], acc);
      if (opts.rerandomize_outputs) acc = crypto::rerandomize(query.pk, acc, rng);
      out.entries.push_back(std::move(acc));
    }
  }
  if (opts.shuffle_response) rng.shuffle(out.entries);
  return out;
}

bool interpret(const crypto::SecretKey& sk, const crypto::PublicKey& pk, const PmtResponse& resp) {
  if (resp.entries.empty()) throw MalformedResponse("empty response");
  for (const auto& c : resp.entries)
    if (!crypto::validate(pk, c)) throw MalformedResponse("response ciphertext invalid");
  for (const auto& c : resp.entries)
    if (crypto::zero_test(sk, pk, c)) return true;
  return false;
}

namespace {

// One crafted probe testing "slot value == v_j" for the two candidates; the
// returned plaintexts are the decoded response entries.
std::vector<std::uint32_t> crafted_probe(cuckoo::CuckooFilter& filter, std::uint64_t v1,
                                         std::uint64_t v2, bool shuffled, Rng& rng) {
  const crypto::Group& g = crypto::Group::by_id(crypto::GroupId::tiny);
  crypto::KeyPair keys = crypto::gen(g, rng);
  PmtQuery qu;
  qu.pk = keys.pk;
  qu.f = crypto::encrypt(keys.pk, negate_mod(1, g.order()), rng);
  qu.q.resize(1);
  qu.q[0][0] = crypto::encrypt(keys.pk, Bn(v1).inv_mod(g.order()), rng);
  qu.q[0][1] = crypto::encrypt(keys.pk, Bn(v2).inv_mod(g.order()), rng);

  RespondOptions opts;
  opts.shuffle_response = shuffled;
  PmtResponse resp = respond(qu, filter, rng, opts);
  std::vector<std::uint32_t> plain;
  plain.reserve(resp.entries.size());
  for (const auto& c : resp.entries) plain.push_back(crypto::decrypt_dlog(keys.sk, c));
  return plain;
}

std::size_t zero_count(const std::vector<std::uint32_t>& v) {
  return static_cast<std::size_t>(std::count(v.begin(), v.end(), 0u));
}

}  // namespace

ExtractionOutcome run_extraction(cuckoo::CuckooFilter& filter, bool hardened,
                                 std::uint32_t max_queries, Rng& rng) {
  const crypto::Group& g = crypto::Group::by_id(crypto::GroupId::tiny);
  if (!(g.order() == filter.order()))
    throw std::invalid_argument("extraction study runs in the test group");
  if (filter.params().buckets != 1 || filter.size() != 1)
    throw std::invalid_argument("extraction study expects a single-bucket, single-element filter");

  // Sweep all candidate fingerprints, two per query, in random order.
  std::vector<std::uint64_t> candidates;
  candidates.reserve(filter.params().fprint_space);
  for (std::uint64_t t = 0; t < filter.params().fprint_space; ++t) candidates.push_back(2 * t + 1);
  rng.shuffle(candidates);

  const std::uint32_t tests_per_run = 2 * filter.params().bucket_size;
  ExtractionOutcome out;
  for (std::size_t c = 0; c < candidates.size() && out.queries < max_queries; c += 2) {
    const std::uint64_t v1 = candidates[c];
    const std::uint64_t v2 = candidates[std::min(c + 1, candidates.size() - 1)];
    auto plain = crafted_probe(filter, v1, v2, hardened, rng);
    ++out.queries;
    const std::size_t zeros = zero_count(plain);
    if (hardened) filter.permute_columns(rng);

    if (!hardened) {
      // Unshuffled entries are row-major (row, column): attribution is exact
      // and every congruence test in the run resolves.
      out.resolved_per_query.push_back(tests_per_run);
      if (zeros > 0) {
        const std::size_t first =
            static_cast<std::size_t>(std::find(plain.begin(), plain.end(), 0u) - plain.begin());
        out.recovered = (first % 2 == 0) ? v1 : v2;
        out.confirmed = true;
        break;
      }
    } else if (zeros == 0) {
      // No match anywhere: all congruences resolve to false despite the
      // shuffle, eliminating both candidates.
      out.resolved_per_query.push_back(tests_per_run);
    } else {
      // A zero exists but the shuffle hides which candidate produced it:
      // nothing attributable resolves; spend one more run to disambiguate.
      out.resolved_per_query.push_back(0);
      if (out.queries >= max_queries) break;
      auto again = crafted_probe(filter, v1, v1, hardened, rng);
      ++out.queries;
      out.resolved_per_query.push_back(zero_count(again) == 0 ? tests_per_run : 0);
      if (hardened) filter.permute_columns(rng);
      out.recovered = zero_count(again) > 0 ? v1 : v2;
      out.confirmed = true;
      break;
    }
  }
  return out;
}

}  // namespace credstuff::pmt
