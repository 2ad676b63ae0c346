#pragma once

namespace statekit::numeric {

/// Digamma function for x > 0. Shifts the argument above 10 with the
/// recurrence psi(x) = psi(x + 1) - 1/x, then sums the asymptotic series.
double digamma(double x);

/// Trigamma function for x > 0, same scheme as digamma.
double trigamma(double x);

/// ln(x) - psi(x), accurate for large x where the direct difference cancels.
double log_minus_digamma(double x);

double normal_cdf(double x);

/// Inverse of normal_cdf on (0, 1); throws DomainError elsewhere.
double normal_quantile(double p);

/// Two-sided tail probability P(|Z| >= |z|).
double two_sided_p(double z);

}  // namespace statekit::numeric
