#include "credstuff/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace credstuff::sim {

namespace {

void check_rate(double r, const char* name) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
  }
}

void check_common(std::uint32_t n, std::uint32_t passwords, double s, std::uint32_t w) {
  if (n < 1) throw std::invalid_argument("site count must be at least 1");
  if (passwords < 1) throw std::invalid_argument("password universe must be nonempty");
  if (!(s >= 0.0)) throw std::invalid_argument("zipf shape must be nonnegative");
  if (w < 1) throw std::invalid_argument("attack-width threshold must be at least 1");
}

// Tracks solver work against the configured ceiling.
struct StateBudget {
  std::uint64_t limit;
  std::uint64_t used = 0;
  void charge(std::uint64_t k = 1) {
    used += k;
    if (used > limit) {
      throw StateSpaceTooLarge("solver state budget of " + std::to_string(limit) +
                               " states exceeded");
    }
  }
};

}  // namespace

std::vector<double> zipf(std::uint32_t count, double s) {
  if (count < 1) throw std::invalid_argument("zipf needs a nonempty support");
  if (!(s >= 0.0)) throw std::invalid_argument("zipf shape must be nonnegative");
  std::vector<double> p(count);
  double norm = 0.0;
  for (std::uint32_t k = 1; k <= count; ++k) {
    p[k - 1] = std::pow(static_cast<double>(k), -s);
    norm += p[k - 1];
  }
  for (double& v : p) v /= norm;
  return p;
}

JointAds joint_ads(double rho_col, double rho_cnt) {
  check_rate(rho_col, "rho_col");
  check_rate(rho_cnt, "rho_cnt");
  JointAds j;
  if (rho_cnt >= rho_col) {
    j.both = rho_col;
    j.cnt_only = rho_cnt - rho_col;
    j.col_only = 0.0;
    j.neither = 1.0 - rho_cnt;
  } else {
    j.both = rho_cnt;
    j.col_only = rho_col - rho_cnt;
    j.cnt_only = 0.0;
    j.neither = 1.0 - rho_col;
  }
  return j;
}

double binom_pmf(std::uint32_t n, std::uint32_t k, double p) {
  if (k > n) return 0.0;
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  // C(n, k) p^k (1-p)^(n-k), with the binomial coefficient and p powers
  // interleaved so intermediate magnitudes stay moderate.
  double r = 1.0;
  for (std::uint32_t i = 1; i <= k; ++i) {
    r *= static_cast<double>(n - k + i) / static_cast<double>(i) * p;
  }
  for (std::uint32_t i = 0; i < n - k; ++i) r *= 1.0 - p;
  return r;
}

// --- forgetful-user experiment ----------------------------------------------
//
// With every site's password and collection flag visible up front, the only
// state that matters to the persona is how many sites can still take a plant
// (incorrect attempt at a site whose collection signal fires) and how many
// plants have landed.  Planting at a site whose password equals the target's
// is impossible (that attempt would be the correct password and is never
// collected), so "qualified" sites are Bin(n, FPR_col (1 - p_k)) distributed
// given the target password k.  The final counting verdict is an independent
// draw, so it factors out of the induction as a constant multiplier.

namespace {

// Max win indicator over plant/skip decisions with q qualified sites left and
// r plants landed.  Skip ("close the tab") is dominated but kept as an
// explicit action so the induction mirrors the persona's real choice set.
struct FdrInduction {
  std::uint32_t w;
  StateBudget* budget;
  // value table indexed q * (w + 1) + min(r, w); counts above w are equivalent
  std::vector<double> memo;
  std::vector<bool> seen;
  std::uint32_t rcap;

  FdrInduction(std::uint32_t n, std::uint32_t w_, StateBudget* b)
      : w(w_), budget(b), rcap(w_) {
    memo.assign(static_cast<std::size_t>(n + 1) * (rcap + 1), 0.0);
    seen.assign(memo.size(), false);
  }

  double value(std::uint32_t q, std::uint32_t r) {
    if (r > rcap) r = rcap;
    std::size_t idx = static_cast<std::size_t>(q) * (rcap + 1) + r;
    if (seen[idx]) return memo[idx];
    budget->charge();
    double stop = r >= w ? 1.0 : 0.0;
    double best = stop;
    if (q > 0) {
      best = std::max(best, value(q - 1, r + 1));  // plant
      best = std::max(best, value(q - 1, r));      // skip
    }
    seen[idx] = true;
    memo[idx] = best;
    return best;
  }
};

}  // namespace

MdpSolution solve_fdr(const FdrConfig& cfg) {
  check_common(cfg.n, cfg.passwords, cfg.s, cfg.w);
  check_rate(cfg.fpr_col, "fpr_col");
  check_rate(cfg.fpr_cnt, "fpr_cnt");
  StateBudget budget{cfg.max_states};
  auto p = zipf(cfg.passwords, cfg.s);
  FdrInduction ind(cfg.n, cfg.w, &budget);
  double win = 0.0;
  for (std::uint32_t k = 0; k < cfg.passwords; ++k) {
    double q_rate = cfg.fpr_col * (1.0 - p[k]);
    for (std::uint32_t c = 0; c <= cfg.n; ++c) {
      budget.charge();
      win += p[k] * binom_pmf(cfg.n, c, q_rate) * ind.value(c, 0);
    }
  }
  MdpSolution out;
  out.value = cfg.fpr_cnt * win;
  out.ratio_defined = true;
  out.states = budget.used;
  return out;
}

double fdr_closed_form(const FdrConfig& cfg) {
  check_common(cfg.n, cfg.passwords, cfg.s, cfg.w);
  check_rate(cfg.fpr_col, "fpr_col");
  check_rate(cfg.fpr_cnt, "fpr_cnt");
  auto p = zipf(cfg.passwords, cfg.s);
  double acc = 0.0;
  for (std::uint32_t k = 0; k < cfg.passwords; ++k) {
    double q_rate = cfg.fpr_col * (1.0 - p[k]);
    double tail = 0.0;
    for (std::uint32_t c = cfg.w; c <= cfg.n; ++c) tail += binom_pmf(cfg.n, c, q_rate);
    acc += p[k] * tail;
  }
  return cfg.fpr_cnt * acc;
}

// --- account-compromise experiment ------------------------------------------
//
// The attacker holds one leaked password and sweeps sites it has not yet
// touched, choosing each next target (or stopping) with everything visible.
// Sites collapse into three interchangeable types: password matches at a
// two-factor site, matches at a plain site, or does not match (two-factor
// status is irrelevant then: the attempt is incorrect either way, collection
// adds it, and it can never be an access).  Outcome randomness per attempt is
// the joint verdict draw; the attempt index l and the cross-site count of
// sites already holding the leaked password determine rewards:
//   - plain match: access iff l > w; detection also needs the counting signal
//     and count >= w; never adds to any tracked set.
//   - two-factor match: a collection verdict diverts to the second factor
//     (no access, password recorded); otherwise access iff l > w as above.
//   - non-match: collection verdict records the password; never an access.
// The objective is lexicographic (max expected accesses, then min expected
// detections), which splits over chance branches because every strategy
// choice is information-feasible branch by branch.

namespace {

struct LexValue {
  double a = 0.0;  // expected accesses from here on
  double d = 0.0;  // expected detections from here on
};

constexpr double kLexEps = 1e-12;

bool lex_better(const LexValue& cand, const LexValue& best) {
  if (cand.a > best.a + kLexEps) return true;
  return cand.a > best.a - kLexEps && cand.d < best.d - kLexEps;
}

struct TdrInduction {
  std::uint32_t n, w;
  double rho_col, rho_cnt;
  double p_cnt_only;
  StateBudget* budget;
  std::unordered_map<std::uint64_t, LexValue> memo;

  TdrInduction(std::uint32_t n_, std::uint32_t w_, double col, double cnt, StateBudget* b)
      : n(n_), w(w_), rho_col(col), rho_cnt(cnt), budget(b) {
    p_cnt_only = joint_ads(col, cnt).cnt_only;
  }

  std::uint64_t key(std::uint32_t umn, std::uint32_t um2, std::uint32_t ux,
                    std::uint32_t m) const {
    std::uint64_t b = n + 1;
    return ((static_cast<std::uint64_t>(umn) * b + um2) * b + ux) * b + m;
  }

  // umn: untouched plain matching sites; um2: untouched two-factor matching
  // sites; ux: untouched non-matching sites; m: sites holding the leaked
  // password.  The next attempt is number n - (umn + um2 + ux) + 1.
  LexValue value(std::uint32_t umn, std::uint32_t um2, std::uint32_t ux, std::uint32_t m) {
    auto it = memo.find(key(umn, um2, ux, m));
    if (it != memo.end()) return it->second;
    budget->charge();
    std::uint32_t l = n - (umn + um2 + ux) + 1;
    double g = l > w ? 1.0 : 0.0;
    double det_gate = m >= w ? 1.0 : 0.0;

    LexValue best;  // stopping scores nothing further
    if (umn > 0) {
      // Plain match: deterministic transition; access iff l > w, detection
      // additionally needs the counting verdict and the cross-site count.
      LexValue nxt = value(umn - 1, um2, ux, m);
      LexValue cand{g + nxt.a, g * det_gate * rho_cnt + nxt.d};
      if (lex_better(cand, best)) best = cand;
    }
    if (um2 > 0) {
      // Two-factor match: the collection branch records the password and
      // blocks the access; the complementary branches access when l > w and
      // detect only when the counting signal fires alone.
      LexValue rec = value(umn, um2 - 1, ux, m + 1);
      LexValue plain = value(umn, um2 - 1, ux, m);
      LexValue cand{rho_col * rec.a + (1.0 - rho_col) * (g + plain.a),
                    rho_col * rec.d + (1.0 - rho_col) * plain.d +
                        p_cnt_only * g * det_gate};
      if (lex_better(cand, best)) best = cand;
    }
    if (ux > 0) {
      // Non-match: never an access; the collection branch records the
      // password at this site.
      LexValue rec = value(umn, um2, ux - 1, m + 1);
      LexValue plain = value(umn, um2, ux - 1, m);
      LexValue cand{rho_col * rec.a + (1.0 - rho_col) * plain.a,
                    rho_col * rec.d + (1.0 - rho_col) * plain.d};
      if (lex_better(cand, best)) best = cand;
    }
    memo.emplace(key(umn, um2, ux, m), best);
    return best;
  }
};

}  // namespace

MdpSolution solve_tdr(const TdrConfig& cfg) {
  check_common(cfg.n, cfg.passwords, cfg.s, cfg.w);
  check_rate(cfg.tpr_col, "tpr_col");
  check_rate(cfg.tpr_cnt, "tpr_cnt");
  std::vector<bool> twofa(cfg.n + 1, false);
  for (std::uint32_t site : cfg.has2fa) {
    if (site < 1 || site > cfg.n) {
      throw std::invalid_argument("two-factor site index out of range");
    }
    if (twofa[site]) throw std::invalid_argument("duplicate two-factor site index");
    twofa[site] = true;
  }
  std::uint32_t h = static_cast<std::uint32_t>(cfg.has2fa.size());

  StateBudget budget{cfg.max_states};
  auto p = zipf(cfg.passwords, cfg.s);
  TdrInduction ind(cfg.n, cfg.w, cfg.tpr_col, cfg.tpr_cnt, &budget);

  double e_acc = 0.0, e_det = 0.0;
  for (std::uint32_t k = 0; k < cfg.passwords; ++k) {
    // Matching-site counts: each of the h two-factor sites matches the leaked
    // password with probability p_k, independently; likewise the n - h plain
    // sites.  Site identity beyond the type split never matters.
    for (std::uint32_t um2 = 0; um2 <= h; ++um2) {
      double pm2 = binom_pmf(h, um2, p[k]);
      if (pm2 == 0.0) continue;
      for (std::uint32_t umn = 0; umn <= cfg.n - h; ++umn) {
        double pmn = binom_pmf(cfg.n - h, umn, p[k]);
        if (pmn == 0.0) continue;
        budget.charge();
        LexValue v = ind.value(umn, um2, cfg.n - um2 - umn, 0);
        double pr = p[k] * pm2 * pmn;
        e_acc += pr * v.a;
        e_det += pr * v.d;
      }
    }
  }

  MdpSolution out;
  out.e_accessed = e_acc;
  out.e_detected = e_det;
  out.states = budget.used;
  if (e_acc == 0.0) {
    out.ratio_defined = false;
    out.value = std::numeric_limits<double>::quiet_NaN();
  } else {
    out.ratio_defined = true;
    out.value = e_det / e_acc;
  }
  return out;
}

// --- Monte Carlo -------------------------------------------------------------

namespace {

std::uint32_t sample_index(const std::vector<double>& p, Rng& rng) {
  double u = rng.uniform01();
  double acc = 0.0;
  for (std::uint32_t i = 0; i + 1 < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return static_cast<std::uint32_t>(p.size() - 1);
}

struct VerdictDraw {
  bool col = false, cnt = false;
};

VerdictDraw draw_joint(const JointAds& j, Rng& rng) {
  double u = rng.uniform01();
  VerdictDraw v;
  if (u < j.both) {
    v.col = v.cnt = true;
  } else if (u < j.both + j.col_only) {
    v.col = true;
  } else if (u < j.both + j.col_only + j.cnt_only) {
    v.cnt = true;
  }
  return v;
}

}  // namespace

McEstimate mc_fdr(const FdrConfig& cfg, FdrPolicy policy, std::uint64_t trials, Rng& rng) {
  check_common(cfg.n, cfg.passwords, cfg.s, cfg.w);
  check_rate(cfg.fpr_col, "fpr_col");
  check_rate(cfg.fpr_cnt, "fpr_cnt");
  if (trials == 0) throw std::invalid_argument("trial count must be positive");
  auto p = zipf(cfg.passwords, cfg.s);
  std::uint64_t wins = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::uint32_t target = sample_index(p, rng);
    std::uint32_t planted = 0;
    for (std::uint32_t i = 0; i < cfg.n; ++i) {
      std::uint32_t pw = sample_index(p, rng);
      bool collecting = rng.bernoulli(cfg.fpr_col);
      bool qualified = collecting && pw != target;
      if (!qualified) continue;
      if (policy == FdrPolicy::timid && planted >= 1) continue;
      ++planted;
    }
    bool counted = rng.bernoulli(cfg.fpr_cnt);
    if (counted && planted >= cfg.w) ++wins;
  }
  McEstimate out;
  out.trials = trials;
  double phat = static_cast<double>(wins) / static_cast<double>(trials);
  out.estimate = phat;
  out.ci95 = 1.96 * std::sqrt(phat * (1.0 - phat) / static_cast<double>(trials));
  return out;
}

McEstimate mc_tdr(const TdrConfig& cfg, TdrPolicy policy, std::uint64_t trials, Rng& rng) {
  check_common(cfg.n, cfg.passwords, cfg.s, cfg.w);
  check_rate(cfg.tpr_col, "tpr_col");
  check_rate(cfg.tpr_cnt, "tpr_cnt");
  if (trials == 0) throw std::invalid_argument("trial count must be positive");
  std::vector<bool> twofa(cfg.n + 1, false);
  for (std::uint32_t site : cfg.has2fa) {
    if (site < 1 || site > cfg.n) {
      throw std::invalid_argument("two-factor site index out of range");
    }
    twofa[site] = true;
  }
  auto p = zipf(cfg.passwords, cfg.s);
  JointAds joint = joint_ads(cfg.tpr_col, cfg.tpr_cnt);

  double sum_a = 0, sum_d = 0, sum_aa = 0, sum_dd = 0, sum_ad = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::uint32_t leaked = sample_index(p, rng);
    std::vector<std::uint32_t> order;
    order.reserve(cfg.n);
    std::vector<bool> match(cfg.n + 1, false);
    for (std::uint32_t i = 1; i <= cfg.n; ++i) {
      match[i] = sample_index(p, rng) == leaked;
    }
    if (policy == TdrPolicy::sweep_once) {
      for (std::uint32_t i = 1; i <= cfg.n; ++i) order.push_back(i);
    } else {  // matches_first: only sites where the credential works
      for (std::uint32_t i = 1; i <= cfg.n; ++i) {
        if (match[i]) order.push_back(i);
      }
    }
    std::vector<bool> holds(cfg.n + 1, false);  // site's tracked set holds the password
    std::uint32_t acc = 0, det = 0, l = 0;
    for (std::uint32_t site : order) {
      ++l;
      VerdictDraw v = draw_joint(joint, rng);
      std::uint32_t m_other = 0;
      for (std::uint32_t i = 1; i <= cfg.n; ++i) {
        if (i != site && holds[i]) ++m_other;
      }
      if (v.col && (!match[site] || twofa[site])) holds[site] = true;
      if (l > cfg.w && match[site] && !(v.col && twofa[site])) {
        ++acc;
        if (v.cnt && m_other >= cfg.w) ++det;
      }
    }
    double a = acc, d = det;
    sum_a += a;
    sum_d += d;
    sum_aa += a * a;
    sum_dd += d * d;
    sum_ad += a * d;
  }

  double tN = static_cast<double>(trials);
  double ma = sum_a / tN, md = sum_d / tN;
  McEstimate out;
  out.trials = trials;
  out.e_accessed = ma;
  out.e_detected = md;
  if (ma == 0.0) {
    out.defined = false;
    out.estimate = std::numeric_limits<double>::quiet_NaN();
    out.ci95 = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  double r = md / ma;
  out.estimate = r;
  // Delta-method variance of the ratio of means.
  double var_a = sum_aa / tN - ma * ma;
  double var_d = sum_dd / tN - md * md;
  double cov = sum_ad / tN - ma * md;
  double var_r = (var_d - 2.0 * r * cov + r * r * var_a) / (tN * ma * ma);
  out.ci95 = 1.96 * std::sqrt(std::max(0.0, var_r));
  return out;
}

// --- ROC sweep ---------------------------------------------------------------

std::vector<RocPoint> roc_sweep(const RocConfig& cfg) {
  if (cfg.w_min < 1 || cfg.w_min > cfg.w_max) {
    throw std::invalid_argument("threshold sweep range is empty or starts at zero");
  }
  if (cfg.ads_points.empty()) throw std::invalid_argument("no detector operating points");
  std::vector<RocPoint> out;
  for (const auto& [fpr_col, tpr_col] : cfg.ads_points) {
    for (std::uint32_t w = cfg.w_min; w <= cfg.w_max; ++w) {
      FdrConfig fc;
      fc.n = cfg.n;
      fc.passwords = cfg.passwords;
      fc.s = cfg.s;
      fc.w = w;
      fc.fpr_col = fpr_col;
      fc.fpr_cnt = cfg.fpr_cnt;
      fc.max_states = cfg.max_states;
      TdrConfig tc;
      tc.n = cfg.n;
      tc.passwords = cfg.passwords;
      tc.s = cfg.s;
      tc.w = w;
      tc.has2fa = cfg.has2fa;
      tc.tpr_col = tpr_col;
      tc.tpr_cnt = cfg.tpr_cnt;
      tc.max_states = cfg.max_states;
      MdpSolution fs = solve_fdr(fc);
      MdpSolution ts = solve_tdr(tc);
      RocPoint pt;
      pt.fpr_col = fpr_col;
      pt.tpr_col = tpr_col;
      pt.w = w;
      pt.fdr = fs.value;
      pt.tdr = ts.value;
      pt.tdr_defined = ts.ratio_defined;
      pt.e_accessed = ts.e_accessed;
      pt.e_detected = ts.e_detected;
      out.push_back(pt);
    }
  }
  return out;
}

std::string roc_csv(const std::vector<RocPoint>& points) {
  std::string out = "fpr_col,tpr_col,w,fdr,tdr,e_accessed,e_detected\n";
  char buf[256];
  for (const RocPoint& p : points) {
    std::snprintf(buf, sizeof buf, "%.6g,%.6g,%u,%.12g,%.12g,%.12g,%.12g\n", p.fpr_col,
                  p.tpr_col, p.w, p.fdr, p.tdr_defined ? p.tdr : std::nan(""),
                  p.e_accessed, p.e_detected);
    out += buf;
  }
  return out;
}

}  // namespace credstuff::sim
