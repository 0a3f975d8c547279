#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "btdiff/engine.hpp"
#include "btdiff/marketdata.hpp"
#include "btdiff/mlsignals.hpp"

namespace btdiff {

/// Trading days per "month" on the abstract calendar.
inline constexpr std::size_t kMonth = 21;

/// start, start + every, start + 2*every, ... below n_days.
std::vector<DayIndex> rebalance_days(DayIndex start, std::size_t n_days, std::size_t every);

WeightSchedule equal_weight(const PriceMatrix& p, DayIndex start, std::size_t every);
WeightSchedule buy_and_hold(const PriceMatrix& p, DayIndex start);

/// Equal weight on k assets starting at (rebalance index * k + phase) mod N.
WeightSchedule rotation(const PriceMatrix& p, DayIndex start, std::size_t k, std::size_t every, std::size_t phase = 0);

/// Equal weight on assets whose previous close is strictly above its SMA
/// over the `window` closes ending the day before the rebalance.
WeightSchedule sma_filter(const PriceMatrix& p, DayIndex start, std::size_t window = 200, std::size_t every = kMonth);

/// Weights proportional to 1 / trailing sample stdev of daily returns.
WeightSchedule inverse_vol(const PriceMatrix& p, DayIndex start, std::size_t window = 60, std::size_t every = kMonth);

/// Normalised reciprocals; zero entries share the whole book equally.
std::vector<double> inverse_vol_weights(std::span<const double> vols);

/// Top `top` assets by p[t-skip] / p[t-lookback] - 1; ties to the lower index.
WeightSchedule cross_momentum(const PriceMatrix& p, DayIndex start, std::size_t lookback = 252,
                              std::size_t skip = 21, std::size_t top = 2, std::size_t every = kMonth);

/// Daily switch: 1st, 3rd, ... evaluation day all in `a`; the others all in `b`.
WeightSchedule binary_switch(const PriceMatrix& p, DayIndex start, std::size_t a = 0, std::size_t b = 1);

WeightSchedule tiered_cash(const PriceMatrix& p, DayIndex start, std::span<const double> tiers,
                           std::size_t every = kMonth, std::size_t phase = 0);

/// `weight` in asset (rebalance index mod N); the remainder stays in cash.
WeightSchedule concentrated(const PriceMatrix& p, DayIndex start, double weight = 0.95, std::size_t every = kMonth);

enum class Category { simple, signal, ml, rotation, ablation };
std::string_view category_name(Category c);

struct StrategyParams {
    std::size_t rotation_k = 3;
    std::size_t rotation_phase = 0;
    std::size_t sma_window = 200;
    std::size_t vol_window = 60;
    std::size_t momentum_lookback = 252;
    std::size_t momentum_skip = 21;
    std::size_t momentum_top = 2;
    std::array<double, 3> tiers{0.60, 0.30, 0.10};
    double concentrated_weight = 0.95;
    std::size_t switch_a = 0;
    std::size_t switch_b = 1;
    WalkForwardConfig walk_forward{};
    ElasticNetConfig elastic_net{};
};

struct BenchmarkSpec {
    std::string id;
    std::string name;
    Category category = Category::simple;
    double cost_bps = 18.0;
    std::string cadence;       // "monthly", "daily" or "once"
    std::size_t warmup = 0;    // days of history needed before `start`
    std::string learner;       // ML benchmarks only
    bool available = true;
};

/// All fifteen benchmarks, in suite order.
const std::vector<BenchmarkSpec>& benchmark_registry();
const BenchmarkSpec& find_benchmark(std::string_view id);
/// Ids of the benchmarks that can actually be generated.
std::vector<std::string> default_benchmark_ids();

/// Builds the schedule for a registry entry. Throws NotEnoughHistory when
/// `start` is inside the warm-up, LearnerUnavailable for stub learners.
WeightSchedule build_schedule(const BenchmarkSpec& spec, const PriceMatrix& p, DayIndex start,
                              const StrategyParams& params = {});

std::string schedule_to_csv(const WeightSchedule& w, const PriceMatrix& p);

}  // namespace btdiff
