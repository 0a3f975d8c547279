#include "btdiff/distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "btdiff/error.hpp"

namespace btdiff::dist {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 10000;

// Continued fraction for I_x(a, b); converges fast for x < (a+1)/(a+b+2).
double beta_cf(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    return h;
}

double gamma_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 1; n <= kMaxIter; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw BadSpec("incomplete beta needs a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double gamma_p(double a, double x) {
    if (!(a > 0.0)) throw BadSpec("incomplete gamma needs a > 0");
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return gamma_series(a, x);
    return 1.0 - gamma_cf(a, x);
}

double gamma_q(double a, double x) {
    if (!(a > 0.0)) throw BadSpec("incomplete gamma needs a > 0");
    if (x <= 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_series(a, x);
    return gamma_cf(a, x);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double t_sf(double x, double df) {
    if (!(df > 0.0)) throw BadSpec("t distribution needs df > 0");
    if (std::isinf(x)) return x > 0 ? 0.0 : 1.0;
    // Tail mass beyond |x| is I_{df/(df+x^2)}(df/2, 1/2) / 2.
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + x * x));
    return x >= 0.0 ? tail : 1.0 - tail;
}

double t_cdf(double x, double df) {
    if (!(df > 0.0)) throw BadSpec("t distribution needs df > 0");
    if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + x * x));
    return x >= 0.0 ? 1.0 - tail : tail;
}

double t_quantile(double p, double df) {
    if (!(df > 0.0)) throw BadSpec("t distribution needs df > 0");
    if (!(p > 0.0 && p < 1.0)) throw BadSpec("t quantile needs p in (0, 1)");
    if (p == 0.5) return 0.0;
    // Work in the upper tail for accuracy, then mirror.
    const bool upper = p > 0.5;
    const double tail = upper ? 1.0 - p : p;
    double lo = 0.0;
    double hi = 1.0;
    while (t_sf(hi, df) > tail) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) break;
    }
    // Bisection to bracket, then Newton polish on the density.
    for (int i = 0; i < 200 && (hi - lo) > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (t_sf(mid, df) > tail) lo = mid;
        else hi = mid;
    }
    double x = 0.5 * (lo + hi);
    const double log_norm = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) - 0.5 * std::log(df * std::numbers::pi);
    for (int i = 0; i < 3; ++i) {
        const double density = std::exp(log_norm - 0.5 * (df + 1.0) * std::log1p(x * x / df));
        if (density <= 0.0) break;
        const double step = (t_sf(x, df) - tail) / density;
        if (!std::isfinite(step)) break;
        x += step;
    }
    return upper ? x : -x;
}

double chi2_sf(double x, double df) {
    if (!(df > 0.0)) throw BadSpec("chi-square needs df > 0");
    if (x <= 0.0) return 1.0;
    return gamma_q(0.5 * df, 0.5 * x);
}

}  // namespace btdiff::dist
