#pragma once

#include <span>
#include <string>
#include <vector>

#include "btdiff/engine.hpp"

namespace btdiff {

/// Values of one summary statistic across engines, same inputs.
struct EngineSample {
    std::string metric;
    std::vector<double> values;
    std::vector<std::string> engines;
};

/// Sample variance (divisor K-1). Throws NotEnoughEngines when K < 2.
double implementation_risk(std::span<const double> values);

struct SpreadCv {
    double percent = 0.0;
    bool unstable = false;  // |mean| <= 1e-12, value not meaningful
};

SpreadCv es_cv(std::span<const double> values);
double es_range(std::span<const double> values);

struct Interval {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    bool contains(double x) const { return lo <= x && x <= hi; }
};

/// mean +/- t_{(1+level)/2, K-1} * s.
Interval iui(std::span<const double> values, double level = 0.95);

/// Throws UndefinedRatio when the reference spread is zero.
double daf(std::span<const double> benchmark, std::span<const double> reference);

/// 1 if the Sharpe ratios disagree in sign (0 counts as positive).
int csi(std::span<const double> sharpes);

struct RelativeDifference {
    double percent = 0.0;       // signed, (a - b) / base * 100
    bool absolute_fallback = false;

    double magnitude() const;
};

/// Base is min(|a|, |b|); below 1e-9 the plain difference a - b is
/// returned (not scaled) with the fallback flag set.
RelativeDifference relative_difference(double a, double b);

struct FloorSplit {
    double floor_pct = 0.0;
    double residual_pct = 0.0;
};

/// Effective one-way rate an engine charges for a nominal rate.
double effective_rate(const EngineConvention& c, double rate);

/// Part of a total-return divergence explained by pre- vs post-trade
/// reporting of the initial construction cost.
FloorSplit floor_decomposition(double divergence_pct, const EngineConvention& a, const EngineConvention& b,
                               double rate, bool first_rebalance_fully_invested);

/// pct% of aum, per year.
double dollar_ambiguity(double divergence_pct, double aum);

}  // namespace btdiff
