#pragma once

// Brute-force reference implementations for the detection-rate experiments.
// These deliberately share no structure with the library solvers: chance is
// enumerated outcome by outcome, sites are concrete and individually indexed,
// and optimization is literal enumeration (over plant subsets, over decision
// trees, or over attempt sequences).  Expected values asserted in tests come
// from these, not from the code under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "credstuff/sim.hpp"

namespace simoracle {

struct LexPair {
  double a = 0.0;  // expected accesses
  double d = 0.0;  // expected detections
};

inline constexpr double kEps = 1e-12;

inline bool lex_improves(const LexPair& cand, const LexPair& best) {
  if (cand.a > best.a + kEps) return true;
  return cand.a > best.a - kEps && cand.d < best.d - kEps;
}

inline std::vector<double> pw_dist(std::uint32_t count, double s) {
  std::vector<double> p(count);
  double norm = 0.0;
  for (std::uint32_t k = 1; k <= count; ++k) {
    p[k - 1] = 1.0 / std::pow(static_cast<double>(k), s);
    norm += p[k - 1];
  }
  for (double& v : p) v /= norm;
  return p;
}

// --- forgetful-user experiment ----------------------------------------------
// Enumerate the target password, every site's password, and every site's
// collection flag; for each complete outcome try all 2^n plant subsets (a
// plant lands only where the flag fired and the site's password differs from
// the target's) and keep the best win indicator.  The final counting verdict
// is an independent Bernoulli, contributing a flat factor.

inline double fdr_brute(const credstuff::sim::FdrConfig& cfg) {
  auto p = pw_dist(cfg.passwords, cfg.s);
  std::uint32_t n = cfg.n;
  double total = 0.0;
  std::vector<std::uint32_t> pw(n);
  std::vector<bool> flag(n);
  for (std::uint32_t k0 = 0; k0 < cfg.passwords; ++k0) {
    // odometer over (password, flag) per site
    std::uint64_t combos = 1;
    for (std::uint32_t i = 0; i < n; ++i) combos *= 2 * cfg.passwords;
    for (std::uint64_t c = 0; c < combos; ++c) {
      std::uint64_t rem = c;
      double pr = p[k0];
      for (std::uint32_t i = 0; i < n; ++i) {
        pw[i] = static_cast<std::uint32_t>(rem % cfg.passwords);
        rem /= cfg.passwords;
        flag[i] = rem % 2 == 1;
        rem /= 2;
        pr *= p[pw[i]] * (flag[i] ? cfg.fpr_col : 1.0 - cfg.fpr_col);
      }
      if (pr == 0.0) continue;
      double best = 0.0;
      for (std::uint32_t subset = 0; subset < (1u << n); ++subset) {
        std::uint32_t landed = 0;
        for (std::uint32_t i = 0; i < n; ++i) {
          if ((subset >> i & 1u) && flag[i] && pw[i] != k0) ++landed;
        }
        if (landed >= cfg.w) best = 1.0;
      }
      total += pr * best;
    }
  }
  return cfg.fpr_cnt * total;
}

// --- compromise experiment: shared per-outcome mechanics ---------------------

struct TdrInstance {
  std::uint32_t n = 0, w = 0;
  std::uint32_t match_mask = 0;  // bit i-1: site i's password equals the leaked one
  std::uint32_t twofa_mask = 0;
  double pb = 0, pc = 0, pn = 0, p0 = 0;  // both / col-only / cnt-only / neither
};

struct VerdictCase {
  bool col = false, cnt = false;
  double pr = 0.0;
};

inline std::vector<VerdictCase> verdict_cases(const TdrInstance& g) {
  std::vector<VerdictCase> v;
  if (g.pb > 0) v.push_back({true, true, g.pb});
  if (g.pc > 0) v.push_back({true, false, g.pc});
  if (g.pn > 0) v.push_back({false, true, g.pn});
  if (g.p0 > 0) v.push_back({false, false, g.p0});
  return v;
}

struct StepOutcome {
  std::uint32_t holds_after = 0;
  double acc = 0.0, det = 0.0;
};

inline StepOutcome apply_attempt(const TdrInstance& g, std::uint32_t untouched,
                                 std::uint32_t holds, std::uint32_t site_bit,
                                 const VerdictCase& v) {
  bool match = (g.match_mask & site_bit) != 0;
  bool twofa = (g.twofa_mask & site_bit) != 0;
  std::uint32_t popcnt_untouched = static_cast<std::uint32_t>(__builtin_popcount(untouched));
  std::uint32_t l = g.n - popcnt_untouched + 1;
  StepOutcome out;
  out.holds_after = holds;
  if (v.col && (!match || twofa)) out.holds_after |= site_bit;
  std::uint32_t m_other = static_cast<std::uint32_t>(__builtin_popcount(holds & ~site_bit));
  bool accessed = l > g.w && match && !(v.col && twofa);
  if (accessed) {
    out.acc = 1.0;
    if (v.cnt && m_other >= g.w) out.det = 1.0;
  }
  return out;
}

// Concrete expectimax over (untouched sites, holding sites), lexicographic
// objective, one fixed password realization.
struct TdrExpectimax {
  TdrInstance g;
  std::map<std::pair<std::uint32_t, std::uint32_t>, LexPair> memo;

  LexPair value(std::uint32_t untouched, std::uint32_t holds) {
    auto it = memo.find({untouched, holds});
    if (it != memo.end()) return it->second;
    LexPair best;  // stop
    auto verdicts = verdict_cases(g);
    for (std::uint32_t i = 0; i < g.n; ++i) {
      std::uint32_t bit = 1u << i;
      if (!(untouched & bit)) continue;
      LexPair cand;
      for (const VerdictCase& v : verdicts) {
        StepOutcome step = apply_attempt(g, untouched, holds, bit, v);
        LexPair child = value(untouched & ~bit, step.holds_after);
        cand.a += v.pr * (step.acc + child.a);
        cand.d += v.pr * (step.det + child.d);
      }
      if (lex_improves(cand, best)) best = cand;
    }
    memo.emplace(std::make_pair(untouched, holds), best);
    return best;
  }
};

// All strategy values reachable from a state: every decision tree mapping
// observation histories to actions.  Exponential; intended for n <= 2.
inline void achievable(const TdrInstance& g, std::uint32_t untouched, std::uint32_t holds,
                       std::vector<LexPair>& out) {
  out.clear();
  out.push_back({0.0, 0.0});  // stop here
  auto verdicts = verdict_cases(g);
  for (std::uint32_t i = 0; i < g.n; ++i) {
    std::uint32_t bit = 1u << i;
    if (!(untouched & bit)) continue;
    // Per verdict branch, the continuation strategy is chosen independently;
    // take the cartesian product of per-branch achievable sets.
    std::vector<std::vector<LexPair>> branch_vals;
    std::vector<StepOutcome> branch_step;
    for (const VerdictCase& v : verdicts) {
      StepOutcome step = apply_attempt(g, untouched, holds, bit, v);
      std::vector<LexPair> child;
      achievable(g, untouched & ~bit, step.holds_after, child);
      branch_vals.push_back(std::move(child));
      branch_step.push_back(step);
    }
    std::vector<std::size_t> pick(branch_vals.size(), 0);
    while (true) {
      LexPair total;
      for (std::size_t b = 0; b < branch_vals.size(); ++b) {
        const VerdictCase& v = verdicts[b];
        const LexPair& cont = branch_vals[b][pick[b]];
        total.a += v.pr * (branch_step[b].acc + cont.a);
        total.d += v.pr * (branch_step[b].det + cont.d);
      }
      out.push_back(total);
      std::size_t b = 0;
      while (b < pick.size() && ++pick[b] == branch_vals[b].size()) {
        pick[b] = 0;
        ++b;
      }
      if (b == pick.size()) break;
    }
  }
}

inline LexPair lex_best_of(const std::vector<LexPair>& vals) {
  LexPair best = vals.front();
  for (const LexPair& v : vals) {
    if (lex_improves(v, best)) best = v;
  }
  return best;
}

// Deterministic-verdict special case: when both verdict probabilities are 1,
// a history-dependent strategy collapses to a sequence of distinct sites, so
// all strategies can be enumerated literally even at n = 3.
inline void all_sequences(std::uint32_t n, std::vector<std::uint32_t>& cur,
                          std::uint32_t used, std::vector<std::vector<std::uint32_t>>& out) {
  out.push_back(cur);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (used & (1u << i)) continue;
    cur.push_back(i);
    all_sequences(n, cur, used | (1u << i), out);
    cur.pop_back();
  }
}

inline LexPair sequence_best(const TdrInstance& g) {
  std::vector<std::vector<std::uint32_t>> seqs;
  std::vector<std::uint32_t> cur;
  all_sequences(g.n, cur, 0, seqs);
  VerdictCase v{true, true, 1.0};
  LexPair best;
  bool first = true;
  for (const auto& seq : seqs) {
    std::uint32_t untouched = (1u << g.n) - 1, holds = 0;
    LexPair val;
    for (std::uint32_t site : seq) {
      StepOutcome step = apply_attempt(g, untouched, holds, 1u << site, v);
      val.a += step.acc;
      val.d += step.det;
      holds = step.holds_after;
      untouched &= ~(1u << site);
    }
    if (first || lex_improves(val, best)) best = val;
    first = false;
  }
  return best;
}

// Enumerate password realizations for a config and fold per-outcome optima.
// `per_instance` maps a fixed realization to its optimal (a, d) pair.
template <typename F>
LexPair tdr_fold(const credstuff::sim::TdrConfig& cfg, F per_instance) {
  auto p = pw_dist(cfg.passwords, cfg.s);
  std::uint32_t twofa_mask = 0;
  for (std::uint32_t site : cfg.has2fa) twofa_mask |= 1u << (site - 1);
  double pcol = cfg.tpr_col, pcnt = cfg.tpr_cnt;
  double both = std::min(pcol, pcnt);
  TdrInstance base;
  base.n = cfg.n;
  base.w = cfg.w;
  base.twofa_mask = twofa_mask;
  base.pb = both;
  base.pc = pcol - both;
  base.pn = pcnt - both;
  base.p0 = 1.0 - pcol - pcnt + both;

  LexPair total;
  std::uint64_t combos = 1;
  for (std::uint32_t i = 0; i < cfg.n; ++i) combos *= cfg.passwords;
  for (std::uint32_t k0 = 0; k0 < cfg.passwords; ++k0) {
    for (std::uint64_t c = 0; c < combos; ++c) {
      std::uint64_t rem = c;
      double pr = p[k0];
      std::uint32_t match_mask = 0;
      for (std::uint32_t i = 0; i < cfg.n; ++i) {
        std::uint32_t pw = static_cast<std::uint32_t>(rem % cfg.passwords);
        rem /= cfg.passwords;
        pr *= p[pw];
        if (pw == k0) match_mask |= 1u << i;
      }
      if (pr == 0.0) continue;
      TdrInstance g = base;
      g.match_mask = match_mask;
      LexPair v = per_instance(g);
      total.a += pr * v.a;
      total.d += pr * v.d;
    }
  }
  return total;
}

inline LexPair tdr_brute(const credstuff::sim::TdrConfig& cfg) {
  return tdr_fold(cfg, [](const TdrInstance& g) {
    TdrExpectimax ex{g, {}};
    return ex.value((1u << g.n) - 1, 0);
  });
}

inline LexPair tdr_tree_enumeration(const credstuff::sim::TdrConfig& cfg) {
  return tdr_fold(cfg, [](const TdrInstance& g) {
    std::vector<LexPair> vals;
    achievable(g, (1u << g.n) - 1, 0, vals);
    return lex_best_of(vals);
  });
}

inline LexPair tdr_sequence_enumeration(const credstuff::sim::TdrConfig& cfg) {
  return tdr_fold(cfg, [](const TdrInstance& g) { return sequence_best(g); });
}

// Exact policy evaluation (no optimization): attempt every site in index
// order, one pass.  Used to validate the Monte Carlo estimator.
inline LexPair tdr_sweep_once_value(const credstuff::sim::TdrConfig& cfg) {
  return tdr_fold(cfg, [](const TdrInstance& g) {
    // expectation over verdict draws along the fixed sweep
    struct Walk {
      const TdrInstance& g;
      std::vector<VerdictCase> verdicts;
      LexPair run(std::uint32_t site, std::uint32_t untouched, std::uint32_t holds) {
        if (site >= g.n) return {0.0, 0.0};
        LexPair out;
        for (const VerdictCase& v : verdicts) {
          StepOutcome step = apply_attempt(g, untouched, holds, 1u << site, v);
          LexPair rest = run(site + 1, untouched & ~(1u << site), step.holds_after);
          out.a += v.pr * (step.acc + rest.a);
          out.d += v.pr * (step.det + rest.d);
        }
        return out;
      }
    };
    Walk w{g, verdict_cases(g)};
    return w.run(0, (1u << g.n) - 1, 0);
  });
}

}  // namespace simoracle
