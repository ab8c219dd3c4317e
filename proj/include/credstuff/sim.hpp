#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "credstuff/rng.hpp"

namespace credstuff::sim {

// Detection-rate evaluation machinery: a Zipf password model, exact
// finite-horizon MDP solvers for the optimal forgetful-user (false-detection)
// and optimal attacker (true-detection) experiments, Monte Carlo estimators
// for fixed policies at larger scales, and the ROC sweep built on top.

// p_k proportional to 1/k^s over k = 1..count; count >= 1, s >= 0.
std::vector<double> zipf(std::uint32_t count, double s);

// Joint verdict probabilities of the two-signal detector model: the
// smaller-rate signal can only fire alongside the larger-rate one.
struct JointAds {
  double both = 0, col_only = 0, cnt_only = 0, neither = 0;
};
JointAds joint_ads(double rho_col, double rho_cnt);

struct StateSpaceTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FdrConfig {
  std::uint32_t n = 1;          // responder sites the user may stumble on
  std::uint32_t passwords = 2;  // |P|
  double s = 1.0;               // Zipf shape
  std::uint32_t w = 1;          // attack-width threshold
  double fpr_col = 0.0;
  double fpr_cnt = 0.0;
  std::uint64_t max_states = 10'000'000;
};

struct TdrConfig {
  std::uint32_t n = 1;
  std::uint32_t passwords = 2;
  double s = 1.0;
  std::uint32_t w = 1;
  std::vector<std::uint32_t> has2fa;  // site indices in 1..n running susp-plus
  double tpr_col = 0.0;
  double tpr_cnt = 0.0;
  std::uint64_t max_states = 10'000'000;
};

struct MdpSolution {
  double value = 0;        // detection rate (for the attacker experiment, the ratio)
  double e_accessed = 0;   // attacker experiment only
  double e_detected = 0;   // attacker experiment only
  bool ratio_defined = true;  // false when E[accessed] = 0 (value is NaN)
  std::uint64_t states = 0;   // solver states expanded
};

// Exact optimum of the forgetful-user experiment: the adversarial persona
// sees every site's password and collection flag, plants the target site's
// password wherever it can, and wins if the final count reaches w and the
// counting signal fires.  Memoized backward induction over a losslessly
// aggregated state space; throws StateSpaceTooLarge past cfg.max_states.
MdpSolution solve_fdr(const FdrConfig& cfg);

// Independent closed form for the same optimum:
//   FPR_cnt * sum_k p_k P[Bin(n, FPR_col (1 - p_k)) >= w].
double fdr_closed_form(const FdrConfig& cfg);

// Exact optimum of the account-compromise experiment under the lexicographic
// objective: maximize E[|accessed|], then minimize E[|detected|]; the ratio
// is absent when no strategy accesses anything (w >= n).
MdpSolution solve_tdr(const TdrConfig& cfg);

// --- Monte Carlo estimation for fixed policies -------------------------------

enum class FdrPolicy : std::uint8_t {
  greedy_plant = 0,  // plant the target password at every site that will take it
  timid = 1,         // plant at no more than one site (deliberately weak)
};

enum class TdrPolicy : std::uint8_t {
  sweep_once = 0,       // one attempt per site, in index order
  matches_first = 1,    // attempt matching sites first, skip the rest
};

struct McEstimate {
  double estimate = 0;  // win rate (fdr) or detected/accessed ratio (tdr)
  double ci95 = 0;      // 95% confidence half-width
  bool defined = true;  // tdr ratio only: false when no trial accessed anything
  double e_accessed = 0;
  double e_detected = 0;
  std::uint64_t trials = 0;
};

McEstimate mc_fdr(const FdrConfig& cfg, FdrPolicy policy, std::uint64_t trials, Rng& rng);
McEstimate mc_tdr(const TdrConfig& cfg, TdrPolicy policy, std::uint64_t trials, Rng& rng);

// --- ROC sweep ---------------------------------------------------------------

struct RocConfig {
  std::uint32_t n = 5;
  std::uint32_t passwords = 2;
  double s = 1.0;
  // collection-side detector operating points, one curve each
  std::vector<std::pair<double, double>> ads_points = {{0.05, 0.61}, {0.10, 0.74}, {0.20, 0.88}};
  // counting-side detector rates shared by all curves
  double fpr_cnt = 0.30;
  double tpr_cnt = 0.95;
  std::uint32_t w_min = 1;
  std::uint32_t w_max = 5;
  std::vector<std::uint32_t> has2fa;
  std::uint64_t max_states = 10'000'000;
};

struct RocPoint {
  double fpr_col = 0, tpr_col = 0;
  std::uint32_t w = 0;
  double fdr = 0;
  double tdr = 0;
  bool tdr_defined = true;
  double e_accessed = 0, e_detected = 0;
};

// One exact solve per (ads point, w); rows ordered by curve then w.
std::vector<RocPoint> roc_sweep(const RocConfig& cfg);

// CSV with a header row; NaN ratios rendered as "nan".
std::string roc_csv(const std::vector<RocPoint>& points);

// Binomial pmf helper shared by the solvers and tests.
double binom_pmf(std::uint32_t n, std::uint32_t k, double p);

}  // namespace credstuff::sim
