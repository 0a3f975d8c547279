#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "btdiff/error.hpp"
#include "btdiff/strategies.hpp"

using namespace btdiff;

namespace {

PriceMatrix panel(std::size_t n_assets, std::size_t n_days, const std::function<double(std::size_t, std::size_t)>& f) {
    std::vector<std::string> dates, assets;
    std::vector<double> px;
    for (std::size_t t = 0; t < n_days; ++t) dates.push_back(std::to_string(t));
    for (std::size_t i = 0; i < n_assets; ++i) assets.push_back("A" + std::to_string(i));
    for (std::size_t t = 0; t < n_days; ++t) {
        for (std::size_t i = 0; i < n_assets; ++i) px.push_back(f(t, i));
    }
    return PriceMatrix(dates, assets, px);
}

PriceMatrix synthetic(std::size_t n_assets, std::size_t n_days, std::uint64_t seed = 5) {
    SynthSpec s;
    s.n_assets = n_assets;
    s.n_days = n_days;
    s.seed = seed;
    return generate_synthetic(s);
}

std::set<std::size_t> held(const std::vector<double>& w) {
    std::set<std::size_t> out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0) out.insert(i);
    }
    return out;
}

}  // namespace

TEST_CASE("rebalance calendar") {
    CHECK(rebalance_days(0, 63, 21) == std::vector<DayIndex>{0, 21, 42});
    CHECK(rebalance_days(5, 27, 21) == std::vector<DayIndex>{5, 26});
    CHECK(rebalance_days(10, 10, 21).empty());
}

TEST_CASE("equal weight and buy and hold") {
    const auto p = panel(4, 63, [](auto, auto) { return 1.0; });
    const auto w = equal_weight(p, 0, 21);
    CHECK(w.size() == 3);
    for (const auto& [day, x] : w.entries()) CHECK(x == std::vector<double>(4, 0.25));
    const auto bh = buy_and_hold(p, 7);
    CHECK(bh.size() == 1);
    CHECK(bh.entries().begin()->first == 7);
}

TEST_CASE("rotation walks through the universe") {
    const auto p = panel(6, 63, [](auto, auto) { return 1.0; });
    const auto w = rotation(p, 0, 3, 21);
    std::vector<std::set<std::size_t>> got;
    for (const auto& [day, x] : w.entries()) got.push_back(held(x));
    CHECK(got == std::vector<std::set<std::size_t>>{{0, 1, 2}, {3, 4, 5}, {0, 1, 2}});
    CHECK(held(rotation(p, 0, 3, 21, 1).entries().begin()->second) == std::set<std::size_t>{1, 2, 3});
    CHECK(rotation(p, 0, 6, 21) == equal_weight(p, 0, 21));
    CHECK_THROWS_AS(rotation(p, 0, 0, 21), BadSpec);
    CHECK_THROWS_AS(rotation(p, 0, 7, 21), BadSpec);
}

TEST_CASE("SMA filter uses a strict comparison on the previous close") {
    // Asset 0 rises, asset 1 is flat (equal to its SMA), asset 2 falls.
    const auto p = panel(3, 30, [](std::size_t t, std::size_t i) {
        return i == 0 ? 10.0 + t : (i == 1 ? 10.0 : 50.0 - t);
    });
    const auto w = sma_filter(p, 10, 5, 21);
    CHECK(w.entries().at(10) == std::vector<double>{1.0, 0.0, 0.0});
    CHECK_THROWS_AS(sma_filter(p, 4, 5, 21), NotEnoughHistory);

    // A crossing: falls then rises; above the SMA only after the turn.
    const auto v = panel(1, 40, [](std::size_t t, std::size_t) { return t < 20 ? 40.0 - t : 20.0 + 2.0 * (t - 20.0); });
    CHECK(sma_filter(v, 15, 5, 21).entries().at(15) == std::vector<double>{0.0});
    CHECK(sma_filter(v, 30, 5, 21).entries().at(30) == std::vector<double>{1.0});
    // Nothing passes: the whole book stays in cash.
    const auto down = panel(2, 30, [](std::size_t t, std::size_t) { return 100.0 - t; });
    CHECK(sma_filter(down, 10, 5, 21).entries().at(10) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("inverse volatility") {
    const std::vector<double> a{1.0, 2.0};
    const auto w = inverse_vol_weights(a);
    CHECK(w[0] == doctest::Approx(2.0 / 3.0));
    CHECK(w[1] == doctest::Approx(1.0 / 3.0));
    const std::vector<double> b{1.0, 2.0, 4.0};
    const auto v = inverse_vol_weights(b);
    CHECK(v[0] == doctest::Approx(4.0 / 7.0));
    CHECK(v[1] == doctest::Approx(2.0 / 7.0));
    CHECK(v[2] == doctest::Approx(1.0 / 7.0));
    const std::vector<double> z{0.0, 1.0, 0.0};
    CHECK(inverse_vol_weights(z) == std::vector<double>{0.5, 0.0, 0.5});

    const auto p = synthetic(4, 200);
    const auto s = inverse_vol(p, 61, 60, 21);
    for (const auto& [day, x] : s.entries()) CHECK(std::accumulate(x.begin(), x.end(), 0.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(inverse_vol(p, 60, 60, 21), NotEnoughHistory);
}

TEST_CASE("cross-sectional momentum") {
    // Asset i grows at rate proportional to i, so the top two are the last two.
    const auto p = panel(5, 40, [](std::size_t t, std::size_t i) { return std::exp(0.01 * i * t); });
    CHECK(held(cross_momentum(p, 20, 20, 5, 2, 21).entries().at(20)) == std::set<std::size_t>{3, 4});
    const auto flat = panel(5, 40, [](auto, auto) { return 3.0; });
    CHECK(held(cross_momentum(flat, 20, 20, 5, 2, 21).entries().at(20)) == std::set<std::size_t>{0, 1});
    CHECK(cross_momentum(p, 20, 20, 5, 5, 21).entries().at(20) == std::vector<double>(5, 0.2));
    CHECK_THROWS_AS(cross_momentum(p, 19, 20, 5, 2, 21), NotEnoughHistory);
}

TEST_CASE("binary switch, tiers and concentration") {
    const auto p = panel(3, 10, [](auto, auto) { return 1.0; });
    const auto s = binary_switch(p, 2);
    CHECK(s.size() == 8);
    CHECK(s.entries().at(2) == std::vector<double>{1.0, 0.0, 0.0});
    CHECK(s.entries().at(3) == std::vector<double>{0.0, 1.0, 0.0});
    CHECK(s.entries().at(4) == std::vector<double>{1.0, 0.0, 0.0});

    const auto q = panel(4, 50, [](auto, auto) { return 1.0; });
    const std::vector<double> tiers{0.6, 0.3, 0.1};
    const auto t = tiered_cash(q, 0, tiers, 21);
    for (const auto& [day, x] : t.entries()) {
        CHECK(std::accumulate(x.begin(), x.end(), 0.0) <= 1.0 + 1e-12);
    }
    const auto c = concentrated(q, 0, 0.95, 21);
    CHECK(c.entries().at(0) == std::vector<double>{0.95, 0.0, 0.0, 0.0});
    CHECK(c.entries().at(21) == std::vector<double>{0.0, 0.95, 0.0, 0.0});
}

TEST_CASE("registry") {
    const auto& reg = benchmark_registry();
    CHECK(reg.size() == 15);
    std::set<std::string> ids;
    for (const auto& b : reg) {
        ids.insert(b.id);
        CHECK(b.name.find(',') == std::string::npos);
    }
    CHECK(ids.size() == 15);
    CHECK(default_benchmark_ids().size() == 12);
    CHECK(find_benchmark("bm09").cost_bps == 0.0);
    CHECK(find_benchmark("bm04").cost_bps == 36.0);
    CHECK(find_benchmark("bm11").cost_bps == 60.0);
    CHECK(find_benchmark("bm01").cost_bps == 18.0);
    CHECK_THROWS_AS(find_benchmark("bm99"), BadSpec);
}

TEST_CASE("every available benchmark builds a valid, causal schedule") {
    const auto p = synthetic(6, 400);
    const DayIndex start = 300;
    for (const auto& id : default_benchmark_ids()) {
        CAPTURE(id);
        const auto& spec = find_benchmark(id);
        const auto w = build_schedule(spec, p, start);
        CHECK_NOTHROW(w.check_against(p));
        CHECK(w.size() > 0);
        CHECK(w.entries().begin()->first == start);

        // Future prices must not influence today's weights.
        std::vector<double> px = p.raw();
        const std::size_t cut = 330;
        for (std::size_t k = cut * p.n_assets(); k < px.size(); ++k) px[k] *= 1.0 + 0.5 * ((k % 3) == 0);
        const PriceMatrix q(p.dates(), p.assets(), px, p.sectors());
        const auto wq = build_schedule(spec, q, start);
        for (const auto& [day, x] : w.entries()) {
            if (day >= cut) break;
            CHECK(wq.entries().at(day) == x);
        }
    }
}

TEST_CASE("warm-up and unavailable learners") {
    const auto p = synthetic(6, 400);
    CHECK_THROWS_AS(build_schedule(find_benchmark("bm05"), p, 100), NotEnoughHistory);
    CHECK_THROWS_AS(build_schedule(find_benchmark("bm07"), p, 200), NotEnoughHistory);
    CHECK_THROWS_AS(build_schedule(find_benchmark("bm08_enet"), p, 200), NotEnoughHistory);
    CHECK_THROWS_AS(build_schedule(find_benchmark("bm08_gbr"), p, 300), LearnerUnavailable);
    CHECK_THROWS_AS(build_schedule(find_benchmark("bm08_mlp"), p, 300), LearnerUnavailable);
}

TEST_CASE("schedule CSV") {
    const auto p = panel(2, 3, [](auto, auto) { return 1.0; });
    WeightSchedule w(2);
    w.set(1, {0.25, 0.75});
    CHECK(schedule_to_csv(w, p) == "date,asset,weight\n1,A0,0.25\n1,A1,0.75\n");
}
