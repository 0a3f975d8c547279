#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "btdiff/marketdata.hpp"

namespace btdiff {

using DayIndex = std::size_t;

/// Sparse rebalance plan: day -> target weights. Days without an entry
/// drift at market prices. Evaluation starts at `start()`.
class WeightSchedule {
public:
    WeightSchedule(std::size_t n_assets, DayIndex start = 0) : n_assets_(n_assets), start_(start) {}

    /// Long-only, sum <= 1 + 1e-12, day >= start. Throws BadSchedule.
    void set(DayIndex day, std::vector<double> weights);

    const std::map<DayIndex, std::vector<double>>& entries() const noexcept { return entries_; }
    const std::vector<double>* find(DayIndex day) const;

    std::size_t n_assets() const noexcept { return n_assets_; }
    DayIndex start() const noexcept { return start_; }
    std::size_t size() const noexcept { return entries_.size(); }

    /// Throws BadSchedule if the schedule does not fit the panel.
    void check_against(const PriceMatrix& p) const;

    friend bool operator==(const WeightSchedule&, const WeightSchedule&) = default;

private:
    std::size_t n_assets_;
    DayIndex start_;
    std::map<DayIndex, std::vector<double>> entries_;
};

struct CostSpec {
    double rate = 0.0;  // one-way, fraction of traded notional

    static CostSpec from_bps(double bps) { return CostSpec{bps * 1e-4}; }
    void validate() const;
};

enum class EquityReporting { post_trade, pre_trade };
enum class RateInterpretation { absolute, percent_divided };
enum class FillSequencing { atomic, fifo_sequential, sells_first_sequential };
enum class ReturnTiming { aligned, shifted_one_day };

/// One engine "personality". The default value is the reference engine.
struct EngineConvention {
    EquityReporting equity_reporting = EquityReporting::post_trade;
    RateInterpretation rate_interpretation = RateInterpretation::absolute;
    unsigned commission_multiplier = 1;
    FillSequencing fill_sequencing = FillSequencing::atomic;
    ReturnTiming return_timing = ReturnTiming::aligned;
    std::optional<std::size_t> truncate_after;

    static EngineConvention reference() { return {}; }

    /// Canonical id, e.g. `post|abs|x1|atomic|aligned|full`.
    std::string id() const;
    static EngineConvention parse(std::string_view id);

    bool is_reference() const { return *this == EngineConvention{}; }

    friend bool operator==(const EngineConvention&, const EngineConvention&) = default;
};

struct TradeRecord {
    DayIndex day = 0;
    std::vector<double> delta;  // signed notional per asset, as charged
    double pre_value = 0.0;     // V before costs
    double cost = 0.0;
    std::size_t rejected = 0;   // orders skipped by sequential fills
};

struct EquitySeries {
    std::vector<DayIndex> days;
    std::vector<double> equity;
    std::vector<TradeRecord> trades;

    std::size_t size() const noexcept { return equity.size(); }
    double total_cost() const;
};

struct PerfStats {
    double total_return_pct = 0.0;
    double cagr_pct = 0.0;
    double ann_vol_pct = 0.0;
    double sharpe = 0.0;
    double max_drawdown_pct = 0.0;
    bool degenerate_sharpe = false;
};

/// rate * ||delta||_1, summed in asset order. Every engine path charges
/// through this function.
double reference_cost(double rate, std::span<const double> delta);

/// Proportional-cost loop with cost-then-allocate semantics and fractional
/// shares; the ground truth the variants are measured against.
EquitySeries run_reference(const WeightSchedule& w, const PriceMatrix& p, double initial_capital, CostSpec cost);

/// Same loop with the convention's deviations applied. Faults are silent.
EquitySeries run_variant(const WeightSchedule& w, const PriceMatrix& p, double initial_capital, CostSpec cost,
                         const EngineConvention& conv);

PerfStats performance_metrics(const EquitySeries& e);

/// sum(||delta_t||_1 / V_t) * 252 / (T - 1).
double annual_turnover(const EquitySeries& e);

double cost_intensity(CostSpec cost, double turnover);

std::string equity_to_csv(const EquitySeries& e, const PriceMatrix& p);
std::string trades_to_json(const EquitySeries& e, const PriceMatrix& p);

}  // namespace btdiff
