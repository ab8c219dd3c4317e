#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "credstuff/pmt.hpp"
#include "test_util.hpp"

using namespace credstuff;
using namespace credstuff::pmt;

namespace {

SeededRng& rng() {
  static SeededRng r(0x977e);
  return r;
}

const crypto::Group& tiny() { return crypto::Group::by_id(crypto::GroupId::tiny); }
const crypto::TinyGroup& tinyg() { return static_cast<const crypto::TinyGroup&>(tiny()); }

cuckoo::FilterParams test_params(std::uint32_t beta, std::uint32_t b = 16) {
  cuckoo::FilterParams p;
  p.buckets = beta;
  p.bucket_size = b;
  p.fprint_space = 1u << 8;
  rng().fill(p.hash_key.data(), p.hash_key.size());
  return p;
}

std::array<std::uint8_t, 32> random_element(Rng& r) {
  std::array<std::uint8_t, 32> e{};
  r.fill(e.data(), e.size());
  return e;
}

// A residue outside the order-65537 subgroup, for invalid-component tests.
crypto::Elt non_member() {
  for (std::uint32_t v = 2;; ++v)
    if (!crypto::TinyGroup::is_subgroup_residue(v)) return tinyg().from_residue_unchecked(v);
}

}  // namespace

TEST_CASE("honest query structure") {
  auto params = test_params(16);
  auto x = random_element(rng());
  const auto [i1, i2] = cuckoo::element_indices(params, x);
  const std::uint64_t fp = cuckoo::element_fprint(params, x);

  auto built = build_query(ByteView(x.data(), x.size()), params, tiny(), rng());
  CHECK(built.query.q.size() == 16);
  CHECK(crypto::validate(built.query.pk, built.query.f));
  // f encrypts -fprint(x)
  CHECK(crypto::decrypt_dlog(built.sk, built.query.f) == 65537 - fp);
  // each column is the indicator vector of its bucket index
  const std::array<std::uint32_t, 2> target = {i1, i2};
  for (std::uint32_t k = 0; k < 16; ++k)
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(crypto::validate(built.query.pk, built.query.q[k][j]));
      CHECK(crypto::decrypt_dlog(built.sk, built.query.q[k][j]) == (k == target[j] ? 1u : 0u));
    }
}

TEST_CASE("pool-assembled query matches pool-free structure") {
  auto params = test_params(16);
  auto x = random_element(rng());
  const auto [i1, i2] = cuckoo::element_indices(params, x);
  const std::uint64_t fp = cuckoo::element_fprint(params, x);

  PrecomputePool pool = PrecomputePool::generate(tiny(), 16, rng());
  CHECK(pool.zeros.size() == 30);
  CHECK(pool.ones.size() == 2);
  auto built = build_query(ByteView(x.data(), x.size()), params, tiny(), rng(), &pool);
  CHECK(pool.used);

  CHECK(crypto::decrypt_dlog(built.sk, built.query.f) == 65537 - fp);
  const std::array<std::uint32_t, 2> target = {i1, i2};
  for (std::uint32_t k = 0; k < 16; ++k)
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(crypto::validate(built.query.pk, built.query.q[k][j]));
      CHECK(crypto::decrypt_dlog(built.sk, built.query.q[k][j]) == (k == target[j] ? 1u : 0u));
    }

  // a pool is strictly single-use, and must match the bucket count
  CHECK_THROWS_AS(build_query(ByteView(x.data(), x.size()), params, tiny(), rng(), &pool),
                  std::invalid_argument);
  PrecomputePool small = PrecomputePool::generate(tiny(), 8, rng());
  CHECK_THROWS_AS(build_query(ByteView(x.data(), x.size()), params, tiny(), rng(), &small),
                  std::invalid_argument);
}

TEST_CASE("degenerate equal bucket pair still yields two indicator columns") {
  auto params = test_params(8);
  for (int attempt = 0; attempt < 4096; ++attempt) {
    auto x = random_element(rng());
    const auto [i1, i2] = cuckoo::element_indices(params, x);
    if (i1 != i2) continue;
    auto built = build_query(ByteView(x.data(), x.size()), params, tiny(), rng());
    for (std::uint32_t k = 0; k < 8; ++k)
      for (std::size_t j = 0; j < 2; ++j)
        CHECK(crypto::decrypt_dlog(built.sk, built.query.q[k][j]) == (k == i1 ? 1u : 0u));
    return;
  }
  FAIL("no element with a degenerate bucket pair found");
}

TEST_CASE("completeness: members are always found") {
  for (int set_i = 0; set_i < 100; ++set_i) {
    auto params = test_params(16);
    cuckoo::CuckooFilter filter(params, tiny().order(), rng());
    std::vector<std::array<std::uint8_t, 32>> members;
    for (int i = 0; i < 128; ++i) {
      auto e = random_element(rng());
      filter.insert(e, i, rng());
      members.push_back(e);
    }
    const auto& x = members[rng().below(members.size())];
    auto built = build_query(ByteView(x.data(), x.size()), params, tiny(), rng());
    auto resp = respond(built.query, filter, rng());
    CHECK(resp.entries.size() == 32);
    CHECK(interpret(built.sk, built.query.pk, resp));
  }
}

TEST_CASE("protocol result equals local filter lookup; false positives near 2b/F") {
  auto params = test_params(8);
  cuckoo::CuckooFilter filter(params, tiny().order(), rng());
  std::set<std::array<std::uint8_t, 32>> members;
  while (members.size() < 123) {
    auto e = random_element(rng());
    if (members.insert(e).second) filter.insert(e, 0, rng());
  }

  int probes = 0, fps = 0;
  for (const auto& e : members) {
    if (probes++ >= 150) break;
    auto built = build_query(ByteView(e.data(), e.size()), params, tiny(), rng());
    CHECK(interpret(built.sk, built.query.pk, respond(built.query, filter, rng())));
  }
  int non_member_probes = 0;
  while (non_member_probes < 800) {
    auto e = random_element(rng());
    if (members.count(e)) continue;
    ++non_member_probes;
    auto built = build_query(ByteView(e.data(), e.size()), params, tiny(), rng());
    const bool got = interpret(built.sk, built.query.pk, respond(built.query, filter, rng()));
    // protocol and local lookup agree exactly, collisions included
    CHECK(got == filter.contains(e));
    fps += got;
  }
  const double rate = static_cast<double>(fps) / non_member_probes;
  CHECK(rate > 0.0625);  // half the nominal 2b/|F| = 0.125
  CHECK(rate < 0.25);
}

TEST_CASE("non-member response plaintexts are uniform on the nonzero residues") {
  // Single-bucket filter, nothing inserted: every probed slot is camouflage,
  // so every plaintext is mask * (slot - fprint) with a nonzero second factor.
  auto params = test_params(1, 16);
  cuckoo::CuckooFilter filter(params, tiny().order(), rng());
  std::vector<std::uint64_t> cells(256, 0);
  std::size_t n = 0;
  for (int run = 0; run < 3200; ++run) {
    auto x = random_element(rng());
    auto built = build_query(ByteView(x.data(), x.size()), params, tiny(), rng());
    auto resp = respond(built.query, filter, rng());
    for (const auto& c : resp.entries) {
      const std::uint32_t m = crypto::decrypt_dlog(built.sk, c);
      REQUIRE(m != 0);
      cells[(m - 1) >> 8]++;  // 256 bins of 256 consecutive values over [1, 65536]
      ++n;
    }
  }
  CHECK(n == 102400);
  CHECK(testutil::chi2_uniform_pvalue(cells) > 0.01);
}

TEST_CASE("every output entry carries a final re-randomization") {
  auto params = test_params(4, 4);
  cuckoo::CuckooFilter filter(params, tiny().order(), rng());
  std::vector<std::array<std::uint8_t, 32>> members;
  for (int i = 0; i < 10; ++i) {
    auto e = random_element(rng());
    filter.insert(e, i, rng());
    members.push_back(e);
  }
  auto built = build_query(ByteView(members[0].data(), 32), params, tiny(), rng());

  // Identical rng seeds consume the identical mask prefix, so the pair of
  // runs differs exactly by the per-entry re-randomization step.
  RespondOptions raw_opts{/*shuffle_response=*/false, /*rerandomize_outputs=*/false};
  RespondOptions full_opts{/*shuffle_response=*/false, /*rerandomize_outputs=*/true};
  SeededRng r1(42), r2(42);
  auto raw = respond(built.query, filter, r1, raw_opts);
  auto full = respond(built.query, filter, r2, full_opts);
  REQUIRE(raw.entries.size() == 8);
  REQUIRE(full.entries.size() == 8);

  bool saw_zero_class = false;
  for (std::size_t i = 0; i < 8; ++i) {
    // same plaintext...
    const std::uint32_t m_raw = crypto::decrypt_dlog(built.sk, raw.entries[i]);
    const std::uint32_t m_full = crypto::decrypt_dlog(built.sk, full.entries[i]);
    CHECK(m_raw == m_full);
    saw_zero_class |= (m_raw == 0);
    // ...but the quotient is a fresh nontrivial encryption of zero
    crypto::Ciphertext d{tiny().mul(full.entries[i].V, tiny().inverse(raw.entries[i].V)),
                         tiny().mul(full.entries[i].W, tiny().inverse(raw.entries[i].W))};
    CHECK(crypto::zero_test(built.sk, built.query.pk, d));
    CHECK_FALSE(tiny().is_identity(d.V));
  }
  CHECK(saw_zero_class);  // the member's slot produced a zero entry
}

TEST_CASE("malformed queries abort before any response is formed") {
  auto params = test_params(4, 4);
  cuckoo::CuckooFilter filter(params, tiny().order(), rng());
  auto x = random_element(rng());

  auto built = build_query(ByteView(x.data(), x.size()), params, tiny(), rng());
  SUBCASE("non-group component in Q") {
    built.query.q[2][1].W = non_member();
    CHECK_THROWS_AS(respond(built.query, filter, rng()), MalformedQuery);
  }
  SUBCASE("non-group component in f") {
    built.query.f.V = non_member();
    CHECK_THROWS_AS(respond(built.query, filter, rng()), MalformedQuery);
  }
  SUBCASE("bucket count mismatch") {
    built.query.q.pop_back();
    CHECK_THROWS_AS(respond(built.query, filter, rng()), MalformedQuery);
  }
  SUBCASE("wrong group") {
    const auto& p256 = crypto::Group::by_id(crypto::GroupId::p256);
    auto other = build_query(ByteView(x.data(), x.size()), params, p256, rng());
    CHECK_THROWS_AS(respond(other.query, filter, rng()), MalformedQuery);
  }
}

TEST_CASE("malformed responses abort interpretation") {
  auto params = test_params(2, 4);
  cuckoo::CuckooFilter filter(params, tiny().order(), rng());
  auto x = random_element(rng());
  auto built = build_query(ByteView(x.data(), x.size()), params, tiny(), rng());
  auto resp = respond(built.query, filter, rng());

  PmtResponse empty;
  CHECK_THROWS_AS(interpret(built.sk, built.query.pk, empty), MalformedResponse);
  resp.entries[3].W = non_member();
  CHECK_THROWS_AS(interpret(built.sk, built.query.pk, resp), MalformedResponse);
}

TEST_CASE("extraction sweep meets the F/4b lower bound") {
  // Single stored fingerprint, |F| = 256 candidates, two congruence
  // candidates per run: confirming takes about |F|/4 runs on average, well
  // above the |F|/(4b) = 32 floor.
  double total_queries = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    auto params = test_params(1, 2);
    cuckoo::CuckooFilter filter(params, tiny().order(), rng());
    auto e = random_element(rng());
    filter.insert(e, 0, rng());
    auto out = run_extraction(filter, /*hardened=*/false, 1u << 16, rng());
    REQUIRE(out.confirmed);
    CHECK(out.recovered == filter.fprint(ByteView(e.data(), e.size())));
    total_queries += out.queries;
  }
  const double mean = total_queries / trials;
  CHECK(mean >= 32.0);
  CHECK(mean > 55.0);   // empirical mean sits near 64.5
  CHECK(mean < 75.0);
}

TEST_CASE("hardening never resolves more congruences than the unhardened run") {
  for (int t = 0; t < 60; ++t) {
    auto params = test_params(1, 2);
    cuckoo::CuckooFilter base(params, tiny().order(), rng());
    auto e = random_element(rng());
    base.insert(e, 0, rng());
    Bytes snap = base.snapshot();

    const std::uint64_t seed = rng().u64();
    cuckoo::CuckooFilter f1 = cuckoo::CuckooFilter::restore(snap, tiny().order());
    cuckoo::CuckooFilter f2 = cuckoo::CuckooFilter::restore(snap, tiny().order());
    SeededRng r1(seed), r2(seed);  // identical candidate sweep order
    auto plainrun = run_extraction(f1, /*hardened=*/false, 1u << 16, r1);
    auto hardrun = run_extraction(f2, /*hardened=*/true, 1u << 16, r2);
    REQUIRE(plainrun.confirmed);
    REQUIRE(hardrun.confirmed);
    CHECK(plainrun.recovered == hardrun.recovered);

    const std::size_t common =
        std::min(plainrun.resolved_per_query.size(), hardrun.resolved_per_query.size());
    for (std::size_t q = 0; q < common; ++q)
      CHECK(hardrun.resolved_per_query[q] <= plainrun.resolved_per_query[q]);
    // and the hidden-position runs resolve strictly less in total
    std::uint64_t plain_total = 0, hard_total = 0;
    for (auto v : plainrun.resolved_per_query) plain_total += v;
    for (auto v : hardrun.resolved_per_query) hard_total += v;
    CHECK(hard_total <= plain_total + 4);  // +1 disambiguation run of 4 tests
  }
}

TEST_CASE("honest queries leak one boolean") {
  auto params = test_params(1, 2);
  cuckoo::CuckooFilter filter(params, tiny().order(), rng());
  auto e = random_element(rng());
  filter.insert(e, 0, rng());
  // An honest run reveals exactly the membership bit: true for the member,
  // and for anything else exactly the local-lookup answer.
  auto built = build_query(ByteView(e.data(), e.size()), params, tiny(), rng());
  CHECK(interpret(built.sk, built.query.pk, respond(built.query, filter, rng())));
  for (int i = 0; i < 20; ++i) {
    auto probe = random_element(rng());
    auto b2 = build_query(ByteView(probe.data(), probe.size()), params, tiny(), rng());
    CHECK(interpret(b2.sk, b2.query.pk, respond(b2.query, filter, rng())) ==
          filter.contains(ByteView(probe.data(), probe.size())));
  }
}

TEST_CASE("production group end to end") {
  const auto& g = crypto::Group::by_id(crypto::GroupId::p256);
  cuckoo::FilterParams params;
  params.buckets = 2;
  params.bucket_size = 4;
  params.fprint_space = 1ull << 32;
  rng().fill(params.hash_key.data(), params.hash_key.size());

  cuckoo::CuckooFilter filter(params, g.order(), rng());
  std::vector<std::array<std::uint8_t, 32>> members;
  for (int i = 0; i < 3; ++i) {
    auto e = random_element(rng());
    filter.insert(e, i, rng());
    members.push_back(e);
  }

  auto built = build_query(ByteView(members[1].data(), 32), params, g, rng());
  CHECK(interpret(built.sk, built.query.pk, respond(built.query, filter, rng())));

  PrecomputePool pool = PrecomputePool::generate(g, 2, rng());
  auto absent = random_element(rng());
  auto b2 = build_query(ByteView(absent.data(), 32), params, g, rng(), &pool);
  CHECK_FALSE(interpret(b2.sk, b2.query.pk, respond(b2.query, filter, rng())));
}
