#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

// Shared statistics helpers for distribution tests.

namespace testutil {

inline double log_gamma(double x) { return std::lgamma(x); }

// Regularized lower incomplete gamma P(a, x) by series expansion.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 1000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-14) break;
  }
  return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
}

// Regularized upper incomplete gamma Q(a, x) by continued fraction.
inline double gamma_q_cf(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1e300;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-14) break;
  }
  return std::exp(-x + a * std::log(x) - log_gamma(a)) * h;
}

// Survival function of the chi-square distribution: P[X > x2] with df degrees
// of freedom.
inline double chi2_sf(double x2, double df) {
  if (x2 < 0 || df <= 0) throw std::invalid_argument("chi2_sf domain");
  if (x2 == 0) return 1.0;
  const double a = df / 2.0, x = x2 / 2.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

// Chi-square statistic against explicit expected counts.
inline double chi2_stat(const std::vector<std::uint64_t>& observed,
                        const std::vector<double>& expected) {
  if (observed.size() != expected.size()) throw std::invalid_argument("chi2 size mismatch");
  double stat = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double diff = static_cast<double>(observed[i]) - expected[i];
    stat += diff * diff / expected[i];
  }
  return stat;
}

// p-value for uniform categorical counts.
inline double chi2_uniform_pvalue(const std::vector<std::uint64_t>& observed) {
  std::uint64_t total = 0;
  for (auto c : observed) total += c;
  std::vector<double> expected(observed.size(),
                               static_cast<double>(total) / static_cast<double>(observed.size()));
  return chi2_sf(chi2_stat(observed, expected), static_cast<double>(observed.size() - 1));
}

}  // namespace testutil
