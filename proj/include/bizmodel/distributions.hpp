#pragma once

namespace bizmodel::dist {

/// Upper tail of the standard normal, P(Z > z).
double normal_sf(double z);

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

/// Regularized upper incomplete gamma Q(a, x).
double incomplete_gamma_upper(double a, double x);

/// P(F > f) for F ~ F(d1, d2).
double f_sf(double f, double d1, double d2);

/// P(X > x) for X ~ chi-square(k).
double chi2_sf(double x, double k);

} // namespace bizmodel::dist
