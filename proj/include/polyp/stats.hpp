#pragma once

namespace polyp::stats {

// Regularized lower/upper incomplete gamma functions P(a, x), Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper tail of the chi-square distribution with `df` degrees of freedom.
double chi_square_sf(double statistic, double df);

// Two-sided normal p-value for a z statistic.
double normal_two_sided_p(double z);

}  // namespace polyp::stats
