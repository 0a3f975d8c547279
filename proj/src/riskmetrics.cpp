#include "btdiff/riskmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "btdiff/distributions.hpp"
#include "btdiff/error.hpp"

namespace btdiff {

namespace {

void require_engines(std::span<const double> values) {
    if (values.size() < 2) {
        throw NotEnoughEngines(fmt::format("need at least 2 engine values, got {}", values.size()));
    }
}

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double implementation_risk(std::span<const double> values) {
    require_engines(values);
    const double m = mean_of(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return ss / static_cast<double>(values.size() - 1);
}

SpreadCv es_cv(std::span<const double> values) {
    const double var = implementation_risk(values);
    const double m = mean_of(values);
    if (std::fabs(m) <= 1e-12) return {0.0, true};
    return {std::sqrt(var) / m * 100.0, false};
}

double es_range(std::span<const double> values) {
    if (values.empty()) throw NotEnoughEngines("empty engine sample");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return *hi - *lo;
}

Interval iui(std::span<const double> values, double level) {
    if (!(level > 0.0 && level < 1.0)) throw BadSpec("interval level must lie in (0, 1)");
    const double s = std::sqrt(implementation_risk(values));
    const double m = mean_of(values);
    const double t = dist::t_quantile(0.5 + level / 2.0, static_cast<double>(values.size() - 1));
    return {m, m - t * s, m + t * s};
}

double daf(std::span<const double> benchmark, std::span<const double> reference) {
    const double ref = es_range(reference);
    if (ref == 0.0) throw UndefinedRatio("reference benchmark has zero engine spread");
    return es_range(benchmark) / ref;
}

int csi(std::span<const double> sharpes) {
    bool any_neg = false;
    bool any_pos = false;
    for (double s : sharpes) {
        if (s < 0.0) {
            any_neg = true;
        } else {
            any_pos = true;
        }
    }
    return any_neg && any_pos ? 1 : 0;
}

double RelativeDifference::magnitude() const { return std::fabs(percent); }

RelativeDifference relative_difference(double a, double b) {
    if (a == b) return {0.0, false};
    const double base = std::min(std::fabs(a), std::fabs(b));
    if (base < 1e-9) return {a - b, true};
    return {(a - b) / base * 100.0, false};
}

double effective_rate(const EngineConvention& c, double rate) {
    double r = rate * static_cast<double>(c.commission_multiplier);
    if (c.rate_interpretation == RateInterpretation::percent_divided) r /= 100.0;
    return r;
}

FloorSplit floor_decomposition(double divergence_pct, const EngineConvention& a, const EngineConvention& b,
                               double rate, bool first_rebalance_fully_invested) {
    FloorSplit out;
    const bool mixed = a.equity_reporting != b.equity_reporting;
    const EngineConvention& post = a.equity_reporting == EquityReporting::post_trade ? a : b;
    if (mixed && first_rebalance_fully_invested && post.return_timing == ReturnTiming::aligned) {
        const double r = effective_rate(post, rate);
        out.floor_pct = r / (1.0 - r) * 100.0;
    }
    out.residual_pct = divergence_pct - out.floor_pct;
    return out;
}

double dollar_ambiguity(double divergence_pct, double aum) { return divergence_pct * aum / 100.0; }

}  // namespace btdiff
