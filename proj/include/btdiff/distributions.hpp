#pragma once

namespace btdiff::dist {

/// Regularised incomplete beta I_x(a, b), continued fraction (modified Lentz).
double incomplete_beta(double a, double b, double x);

/// Regularised lower / upper incomplete gamma P(a, x), Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

double normal_cdf(double x);
double normal_sf(double x);

/// Student t with `df` > 0 degrees of freedom.
double t_cdf(double x, double df);
double t_sf(double x, double df);
double t_quantile(double p, double df);

double chi2_sf(double x, double df);

}  // namespace btdiff::dist
