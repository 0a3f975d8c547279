#include "btdiff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "btdiff/distributions.hpp"
#include "btdiff/error.hpp"
#include "btdiff/rng.hpp"

namespace btdiff::stats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double clamp_p(double p) {
    if (!(p > 0.0)) return std::numeric_limits<double>::min();
    return std::min(p, 1.0);
}

double mean_of(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_sd(std::span<const double> x, double m) {
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

void require_same_length(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw BadSpec("paired samples differ in length");
}

double quantile_sorted(const std::vector<double>& v, double q) {
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

bool hit(double permuted_sum, double observed_sum, double tol) {
    return std::fabs(permuted_sum) >= std::fabs(observed_sum) - tol;
}

}  // namespace

TestResult one_sample_t(std::span<const double> x) {
    if (x.empty()) throw BadSpec("t-test needs at least one observation");
    TestResult r;
    r.method = "one_sample_t";
    r.n = x.size();
    const double m = mean_of(x);
    const double s = x.size() > 1 ? sample_sd(x, m) : 0.0;
    if (x.size() < 2 || s == 0.0) {
        r.degenerate = true;
        r.statistic = kNaN;
        r.p_value = kNaN;
        return r;
    }
    r.statistic = m / (s / std::sqrt(static_cast<double>(x.size())));
    r.p_value = clamp_p(2.0 * dist::t_sf(std::fabs(r.statistic), static_cast<double>(x.size() - 1)));
    return r;
}

std::vector<bool> bh_fdr(std::span<const double> p_values, double q) {
    const std::size_t m = p_values.size();
    std::vector<bool> reject(m, false);
    if (m == 0) return reject;
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto key = [&](std::size_t i) { return std::isnan(p_values[i]) ? 2.0 : p_values[i]; };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    std::size_t cutoff = 0;
    for (std::size_t i = 1; i <= m; ++i) {
        if (key(order[i - 1]) <= static_cast<double>(i) * q / static_cast<double>(m)) cutoff = i;
    }
    for (std::size_t i = 0; i < cutoff; ++i) reject[order[i]] = true;
    return reject;
}

std::vector<double> average_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

TestResult wilcoxon_signed_rank(std::span<const double> x) {
    TestResult r;
    r.method = "wilcoxon_signed_rank";
    std::vector<double> nz;
    for (double v : x) {
        if (v != 0.0) nz.push_back(v);
    }
    r.n = nz.size();
    if (nz.empty()) {
        r.degenerate = true;
        r.statistic = kNaN;
        r.p_value = kNaN;
        return r;
    }
    std::vector<double> mag(nz.size());
    std::transform(nz.begin(), nz.end(), mag.begin(), [](double v) { return std::fabs(v); });
    const auto ranks = average_ranks(mag);
    const std::size_t n = nz.size();

    double w_plus = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (nz[i] > 0.0) w_plus += ranks[i];
    }
    r.statistic = w_plus;

    if (n <= kWilcoxonExactMax) {
        r.method += "_exact";
        // Doubled ranks are integers even with ties.
        std::vector<std::size_t> d(n);
        std::size_t total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            d[i] = static_cast<std::size_t>(std::lround(2.0 * ranks[i]));
            total += d[i];
        }
        std::vector<double> count(total + 1, 0.0);
        count[0] = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t s = total; s + 1 > d[i]; --s) count[s] += count[s - d[i]];
        }
        const auto obs = static_cast<std::size_t>(std::lround(2.0 * w_plus));
        double below = 0.0;
        double above = 0.0;
        for (std::size_t s = 0; s <= total; ++s) {
            if (s <= obs) below += count[s];
            if (s >= obs) above += count[s];
        }
        const double all = std::ldexp(1.0, static_cast<int>(n));
        r.p_value = clamp_p(2.0 * std::min(below, above) / all);
        return r;
    }

    r.method += "_normal";
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1.0) / 4.0;
    double tie_term = 0.0;
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double dev = std::max(std::fabs(w_plus - mu) - 0.5, 0.0);
    r.p_value = clamp_p(2.0 * dist::normal_sf(dev / std::sqrt(var)));
    return r;
}

TestResult sign_flip_permutation(std::span<const double> x, std::size_t draws, std::uint64_t seed) {
    if (x.empty()) throw BadSpec("permutation test needs at least one observation");
    if (draws == 0) throw BadSpec("permutation test needs at least one draw");
    TestResult r;
    r.method = "sign_flip_permutation";
    r.n = x.size();
    const double observed = std::accumulate(x.begin(), x.end(), 0.0);
    double scale = 0.0;
    for (double v : x) scale += std::fabs(v);
    const double tol = 1e-12 * scale;
    std::size_t hits = 0;
    for (std::size_t d = 0; d < draws; ++d) {
        CounterRng rng(derive_key(seed, d));
        double s = 0.0;
        for (double v : x) s += rng.coin() ? v : -v;
        if (hit(s, observed, tol)) ++hits;
    }
    r.statistic = std::fabs(observed) / static_cast<double>(x.size());
    r.p_value = clamp_p(static_cast<double>(hits + 1) / static_cast<double>(draws + 1));
    return r;
}

TestResult sign_flip_exhaustive(std::span<const double> x) {
    if (x.empty()) throw BadSpec("permutation test needs at least one observation");
    if (x.size() > 24) throw BadSpec("exhaustive sign enumeration limited to n <= 24");
    TestResult r;
    r.method = "sign_flip_exhaustive";
    r.n = x.size();
    const double observed = std::accumulate(x.begin(), x.end(), 0.0);
    double scale = 0.0;
    for (double v : x) scale += std::fabs(v);
    const double tol = 1e-12 * scale;
    const std::uint64_t patterns = std::uint64_t{1} << x.size();
    std::uint64_t hits = 0;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (mask >> i) & 1U ? -x[i] : x[i];
        if (hit(s, observed, tol)) ++hits;
    }
    r.statistic = std::fabs(observed) / static_cast<double>(x.size());
    r.p_value = clamp_p(static_cast<double>(hits) / static_cast<double>(patterns));
    return r;
}

TostResult tost(std::span<const double> x, double margin, double alpha) {
    if (x.empty()) throw BadSpec("TOST needs at least one observation");
    if (!(margin > 0.0)) throw BadSpec("TOST margin must be positive");
    if (!(alpha > 0.0 && alpha < 0.5)) throw BadSpec("TOST alpha must lie in (0, 0.5)");
    TostResult r;
    const double m = mean_of(x);
    const double s = x.size() > 1 ? sample_sd(x, m) : 0.0;
    if (x.size() < 2 || s == 0.0) {
        r.degenerate = true;
        r.equivalent = std::fabs(m) < margin;
        r.ci_equivalent = r.equivalent;
        r.p_lower = r.p_upper = r.p_value = kNaN;
        r.ci_lo = r.ci_hi = m;
        return r;
    }
    const double df = static_cast<double>(x.size() - 1);
    const double se = s / std::sqrt(static_cast<double>(x.size()));
    r.p_lower = clamp_p(dist::t_sf((m + margin) / se, df));
    r.p_upper = clamp_p(dist::t_cdf((m - margin) / se, df));
    r.p_value = std::max(r.p_lower, r.p_upper);
    r.equivalent = r.p_lower < alpha && r.p_upper < alpha;
    const double tq = dist::t_quantile(1.0 - alpha, df);
    r.ci_lo = m - tq * se;
    r.ci_hi = m + tq * se;
    r.ci_equivalent = -margin < r.ci_lo && r.ci_hi < margin;
    return r;
}

double lin_ccc(std::span<const double> x, std::span<const double> y) {
    require_same_length(x, y);
    if (x.empty()) throw BadSpec("concordance needs at least one pair");
    const double n = static_cast<double>(x.size());
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    sxx /= n;
    syy /= n;
    sxy /= n;
    const double denom = sxx + syy + (mx - my) * (mx - my);
    if (denom == 0.0) return 1.0;  // identical constant vectors
    return 2.0 * sxy / denom;
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
    require_same_length(x, y);
    Correlation c;
    c.n = x.size();
    if (x.size() < 2) {
        c.degenerate = true;
        c.r = c.p_value = kNaN;
        return c;
    }
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        c.degenerate = true;
        c.r = c.p_value = kNaN;
        return c;
    }
    c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    if (x.size() < 3) {
        c.p_value = kNaN;
        return c;
    }
    const double df = static_cast<double>(x.size() - 2);
    const double one_minus = 1.0 - c.r * c.r;
    if (one_minus <= 0.0) {
        c.p_value = clamp_p(0.0);
    } else {
        const double t = c.r * std::sqrt(df / one_minus);
        c.p_value = clamp_p(2.0 * dist::t_sf(std::fabs(t), df));
    }
    return c;
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
    require_same_length(x, y);
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

Correlation lag1_autocorr(std::span<const double> x) {
    if (x.size() < 3) {
        Correlation c;
        c.n = x.size() > 0 ? x.size() - 1 : 0;
        c.degenerate = true;
        c.r = c.p_value = kNaN;
        return c;
    }
    return pearson(x.first(x.size() - 1), x.subspan(1));
}

BootstrapResult cluster_bootstrap(std::size_t n_clusters, const ClusterStatistic& statistic, std::size_t draws,
                                  std::uint64_t seed) {
    if (n_clusters < 2) throw NotEnoughClusters(fmt::format("bootstrap needs >= 2 clusters, got {}", n_clusters));
    if (draws == 0) throw BadSpec("bootstrap needs at least one draw");
    BootstrapResult out;
    out.draws = draws;
    std::vector<std::size_t> ids(n_clusters);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    out.point = statistic(ids);

    std::vector<double> values;
    values.reserve(draws);
    for (std::size_t d = 0; d < draws; ++d) {
        CounterRng rng(derive_key(seed, d));
        for (auto& id : ids) id = static_cast<std::size_t>(rng.below(n_clusters));
        const double v = statistic(ids);
        if (std::isfinite(v)) {
            values.push_back(v);
        } else {
            ++out.failed_draws;
        }
    }
    if (values.empty()) {
        out.lo = out.hi = out.point;
        return out;
    }
    std::sort(values.begin(), values.end());
    out.lo = quantile_sorted(values, 0.025);
    out.hi = quantile_sorted(values, 0.975);
    if (std::isfinite(out.point)) {
        out.lo = std::min(out.lo, out.point);
        out.hi = std::max(out.hi, out.point);
    }
    return out;
}

}  // namespace btdiff::stats
