#include "btdiff/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "btdiff/csv.hpp"
#include "btdiff/error.hpp"

namespace btdiff {

namespace {

void require_history(DayIndex start, std::size_t needed, std::string_view what) {
    if (start < needed) {
        throw NotEnoughHistory(fmt::format("{} needs {} days of history before the first rebalance, got {}", what,
                                           needed, start));
    }
}

std::vector<double> equal_on(std::span<const std::size_t> members, std::size_t n) {
    std::vector<double> w(n, 0.0);
    if (members.empty()) return w;
    const double each = 1.0 / static_cast<double>(members.size());
    for (std::size_t m : members) w[m] = each;
    return w;
}

double sample_stdev_returns(const PriceMatrix& p, std::size_t asset, DayIndex first, DayIndex last) {
    // Daily simple returns for days first..last inclusive.
    const std::size_t k = last - first + 1;
    double mean = 0.0;
    for (DayIndex u = first; u <= last; ++u) mean += p.at(u, asset) / p.at(u - 1, asset) - 1.0;
    mean /= static_cast<double>(k);
    double ss = 0.0;
    for (DayIndex u = first; u <= last; ++u) {
        const double r = p.at(u, asset) / p.at(u - 1, asset) - 1.0;
        ss += (r - mean) * (r - mean);
    }
    return k > 1 ? std::sqrt(ss / static_cast<double>(k - 1)) : 0.0;
}

}  // namespace

std::vector<DayIndex> rebalance_days(DayIndex start, std::size_t n_days, std::size_t every) {
    if (every == 0) throw BadSpec("rebalance spacing must be positive");
    std::vector<DayIndex> days;
    for (DayIndex t = start; t < n_days; t += every) days.push_back(t);
    return days;
}

WeightSchedule equal_weight(const PriceMatrix& p, DayIndex start, std::size_t every) {
    const std::size_t n = p.n_assets();
    WeightSchedule w(n, start);
    std::vector<double> target(n, 1.0 / static_cast<double>(n));
    for (DayIndex t : rebalance_days(start, p.n_days(), every)) w.set(t, target);
    return w;
}

WeightSchedule buy_and_hold(const PriceMatrix& p, DayIndex start) {
    const std::size_t n = p.n_assets();
    WeightSchedule w(n, start);
    w.set(start, std::vector<double>(n, 1.0 / static_cast<double>(n)));
    return w;
}

WeightSchedule rotation(const PriceMatrix& p, DayIndex start, std::size_t k, std::size_t every, std::size_t phase) {
    const std::size_t n = p.n_assets();
    if (k == 0 || k > n) throw BadSpec(fmt::format("rotation subset size {} invalid for {} assets", k, n));
    WeightSchedule w(n, start);
    const auto days = rebalance_days(start, p.n_days(), every);
    for (std::size_t idx = 0; idx < days.size(); ++idx) {
        const std::size_t first = (idx * k + phase) % n;
        std::vector<std::size_t> members(k);
        for (std::size_t j = 0; j < k; ++j) members[j] = (first + j) % n;
        w.set(days[idx], equal_on(members, n));
    }
    return w;
}

WeightSchedule sma_filter(const PriceMatrix& p, DayIndex start, std::size_t window, std::size_t every) {
    if (window == 0) throw BadSpec("SMA window must be positive");
    require_history(start, window, "SMA filter");
    const std::size_t n = p.n_assets();
    WeightSchedule w(n, start);
    for (DayIndex t : rebalance_days(start, p.n_days(), every)) {
        std::vector<std::size_t> members;
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (DayIndex u = t - window; u < t; ++u) sum += p.at(u, j);
            if (p.at(t - 1, j) > sum / static_cast<double>(window)) members.push_back(j);
        }
        w.set(t, equal_on(members, n));
    }
    return w;
}

std::vector<double> inverse_vol_weights(std::span<const double> vols) {
    const std::size_t n = vols.size();
    std::vector<double> w(n, 0.0);
    std::vector<std::size_t> flat;
    for (std::size_t j = 0; j < n; ++j) {
        if (!(vols[j] > 0.0)) flat.push_back(j);
    }
    if (!flat.empty()) return equal_on(flat, n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += 1.0 / vols[j];
    for (std::size_t j = 0; j < n; ++j) w[j] = (1.0 / vols[j]) / total;
    return w;
}

WeightSchedule inverse_vol(const PriceMatrix& p, DayIndex start, std::size_t window, std::size_t every) {
    if (window < 2) throw BadSpec("volatility window must be at least 2");
    require_history(start, window + 1, "inverse volatility");
    const std::size_t n = p.n_assets();
    WeightSchedule w(n, start);
    std::vector<double> vols(n);
    for (DayIndex t : rebalance_days(start, p.n_days(), every)) {
        for (std::size_t j = 0; j < n; ++j) vols[j] = sample_stdev_returns(p, j, t - window, t - 1);
        w.set(t, inverse_vol_weights(vols));
    }
    return w;
}

WeightSchedule cross_momentum(const PriceMatrix& p, DayIndex start, std::size_t lookback, std::size_t skip,
                              std::size_t top, std::size_t every) {
    if (skip == 0 || skip >= lookback) throw BadSpec("momentum skip must lie in (0, lookback)");
    if (top == 0) throw BadSpec("momentum top must be positive");
    require_history(start, lookback, "cross-sectional momentum");
    const std::size_t n = p.n_assets();
    const std::size_t held = std::min(top, n);
    WeightSchedule w(n, start);
    std::vector<double> score(n);
    std::vector<std::size_t> order(n);
    for (DayIndex t : rebalance_days(start, p.n_days(), every)) {
        for (std::size_t j = 0; j < n; ++j) score[j] = p.at(t - skip, j) / p.at(t - lookback, j) - 1.0;
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
        w.set(t, equal_on(std::span(order).first(held), n));
    }
    return w;
}

WeightSchedule binary_switch(const PriceMatrix& p, DayIndex start, std::size_t a, std::size_t b) {
    const std::size_t n = p.n_assets();
    if (a >= n || b >= n) throw BadSpec("switch assets out of range");
    WeightSchedule w(n, start);
    for (DayIndex t = start; t < p.n_days(); ++t) {
        std::vector<double> x(n, 0.0);
        x[(t - start) % 2 == 0 ? a : b] = 1.0;
        w.set(t, std::move(x));
    }
    return w;
}

WeightSchedule tiered_cash(const PriceMatrix& p, DayIndex start, std::span<const double> tiers, std::size_t every,
                           std::size_t phase) {
    const std::size_t n = p.n_assets();
    const std::size_t k = tiers.size();
    if (k == 0 || k > n) throw BadSpec("tier count must lie in [1, n_assets]");
    WeightSchedule w(n, start);
    const auto days = rebalance_days(start, p.n_days(), every);
    for (std::size_t idx = 0; idx < days.size(); ++idx) {
        const std::size_t first = (idx * k + phase) % n;
        std::vector<double> x(n, 0.0);
        for (std::size_t j = 0; j < k; ++j) x[(first + j) % n] = tiers[j];
        w.set(days[idx], std::move(x));
    }
    return w;
}

WeightSchedule concentrated(const PriceMatrix& p, DayIndex start, double weight, std::size_t every) {
    if (!(weight > 0.0 && weight <= 1.0)) throw BadSpec("concentrated weight must lie in (0, 1]");
    const std::size_t n = p.n_assets();
    WeightSchedule w(n, start);
    const auto days = rebalance_days(start, p.n_days(), every);
    for (std::size_t idx = 0; idx < days.size(); ++idx) {
        std::vector<double> x(n, 0.0);
        x[idx % n] = weight;
        w.set(days[idx], std::move(x));
    }
    return w;
}

std::string_view category_name(Category c) {
    switch (c) {
        case Category::simple: return "simple";
        case Category::signal: return "signal";
        case Category::ml: return "ml";
        case Category::rotation: return "rotation";
        case Category::ablation: return "ablation";
    }
    return "unknown";
}

const std::vector<BenchmarkSpec>& benchmark_registry() {
    static const std::vector<BenchmarkSpec> registry = [] {
        const std::size_t ml_warmup = WalkForwardConfig{}.earliest_day();
        return std::vector<BenchmarkSpec>{
            {"bm01", "equal-weight monthly", Category::simple, 18, "monthly", 0, "", true},
            {"bm02", "stay-drift (buy-and-hold)", Category::simple, 18, "once", 0, "", true},
            {"bm03", "large rotation", Category::rotation, 18, "monthly", 0, "", true},
            {"bm04", "large rotation + 2x costs", Category::rotation, 36, "monthly", 0, "", true},
            {"bm05", "SMA momentum (200-day)", Category::signal, 18, "monthly", 200, "", true},
            {"bm06", "inverse-volatility (60d)", Category::simple, 18, "monthly", 61, "", true},
            {"bm07", "cross-momentum (12-1 top-2)", Category::signal, 18, "monthly", 252, "", true},
            {"bm08_gbr", "ML signal (GBR)", Category::ml, 18, "monthly", ml_warmup, "gbr", false},
            {"bm08_rf", "ML signal (RF)", Category::ml, 18, "monthly", ml_warmup, "rf", false},
            {"bm08_mlp", "ML signal (MLP)", Category::ml, 18, "monthly", ml_warmup, "mlp", false},
            {"bm08_enet", "ML signal (elastic net)", Category::ml, 18, "monthly", ml_warmup, "enet", true},
            {"bm09", "daily binary switch", Category::ablation, 0, "daily", 0, "", true},
            {"bm10", "cash-starved settlement", Category::rotation, 18, "monthly", 0, "", true},
            {"bm11", "concentrated cascade", Category::rotation, 60, "monthly", 0, "", true},
            {"bm12", "daily equal-weight", Category::simple, 18, "daily", 0, "", true},
        };
    }();
    return registry;
}

const BenchmarkSpec& find_benchmark(std::string_view id) {
    for (const auto& b : benchmark_registry()) {
        if (b.id == id) return b;
    }
    throw BadSpec("unknown benchmark id '" + std::string(id) + "'");
}

std::vector<std::string> default_benchmark_ids() {
    std::vector<std::string> ids;
    for (const auto& b : benchmark_registry()) {
        if (b.available) ids.push_back(b.id);
    }
    return ids;
}

WeightSchedule build_schedule(const BenchmarkSpec& spec, const PriceMatrix& p, DayIndex start,
                              const StrategyParams& params) {
    require_history(start, spec.warmup, spec.id);
    const auto& id = spec.id;
    if (id == "bm01") return equal_weight(p, start, kMonth);
    if (id == "bm02") return buy_and_hold(p, start);
    if (id == "bm03" || id == "bm04") {
        return rotation(p, start, std::min(params.rotation_k, p.n_assets()), kMonth, params.rotation_phase);
    }
    if (id == "bm05") return sma_filter(p, start, params.sma_window, kMonth);
    if (id == "bm06") return inverse_vol(p, start, params.vol_window, kMonth);
    if (id == "bm07") {
        return cross_momentum(p, start, params.momentum_lookback, params.momentum_skip, params.momentum_top, kMonth);
    }
    if (id == "bm09") return binary_switch(p, start, params.switch_a, params.switch_b);
    if (id == "bm10") return tiered_cash(p, start, params.tiers, kMonth, params.rotation_phase);
    if (id == "bm11") return concentrated(p, start, params.concentrated_weight, kMonth);
    if (id == "bm12") return equal_weight(p, start, 1);
    if (spec.category == Category::ml) {
        auto learner = make_learner(spec.learner, params.elastic_net);
        if (!spec.available) learner->fit(Matrix{}, {});  // throws LearnerUnavailable
        const auto days = rebalance_days(start, p.n_days(), kMonth);
        const auto ranks = walk_forward_signal(p, days, params.walk_forward, *learner);
        return ranking_schedule(ranks, p.n_assets(), start, params.walk_forward.top);
    }
    throw BadSpec("no generator for benchmark '" + id + "'");
}

std::string schedule_to_csv(const WeightSchedule& w, const PriceMatrix& p) {
    std::string out = "date,asset,weight\n";
    for (const auto& [day, weights] : w.entries()) {
        for (std::size_t j = 0; j < weights.size(); ++j) {
            out += fmt::format("{},{},{}\n", p.dates()[day], p.assets()[j], csv::format_double(weights[j]));
        }
    }
    return out;
}

}  // namespace btdiff
