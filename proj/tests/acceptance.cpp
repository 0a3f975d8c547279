// One line per criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "btdiff/buckets.hpp"
#include "btdiff/distributions.hpp"
#include "btdiff/engine.hpp"
#include "btdiff/harness.hpp"
#include "btdiff/riskmetrics.hpp"
#include "btdiff/rng.hpp"
#include "btdiff/stats.hpp"
#include "btdiff/strategies.hpp"

using namespace btdiff;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    fmt::print("{} {:>2} {}: {} ({:.1f}s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail, secs);
    std::fflush(stdout);
}

RunConfig desk_config() {
    RunConfig c = RunConfig::defaults();
    c.synth.n_days = 1761;
    return c;
}

Universe universe(const RunConfig& c) {
    Universe u{load_or_generate_prices(c), {}, {}};
    u.partition = build_partition(c, u.prices, &u.covariates);
    return u;
}

std::vector<EngineConvention> roster_without(ReturnTiming drop) {
    std::vector<EngineConvention> out;
    for (const auto& e : default_roster()) {
        if (e.return_timing != drop) out.push_back(e);
    }
    return out;
}

EngineConvention with_pct() {
    EngineConvention e;
    e.rate_interpretation = RateInterpretation::percent_divided;
    return e;
}

EngineConvention with_multiplier(unsigned m) {
    EngineConvention e;
    e.commission_multiplier = m;
    return e;
}

// The cost-then-allocate loop transcribed over plain arrays.
std::vector<double> literal_algorithm(const std::vector<std::vector<double>>& prices,
                                      const std::vector<std::vector<double>>& weights,
                                      const std::vector<bool>& rebalance, double c0, double rate) {
    const std::size_t n = prices[0].size();
    std::vector<double> h(n, 0.0);
    double cash = c0;
    std::vector<double> e;
    for (std::size_t t = 0; t < prices.size(); ++t) {
        double v = cash;
        for (std::size_t i = 0; i < n; ++i) v += h[i] * prices[t][i];
        if (!rebalance[t]) {
            e.push_back(v);
            continue;
        }
        double l1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) l1 += std::fabs(weights[t][i] * v - h[i] * prices[t][i]);
        const double v_net = v - rate * l1;
        double hp = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            h[i] = weights[t][i] * v_net / prices[t][i];
            hp += h[i] * prices[t][i];
        }
        cash = v_net - hp;
        e.push_back(v_net);
    }
    return e;
}

double wilcoxon_by_enumeration(const std::vector<double>& x) {
    std::vector<double> nz;
    for (double v : x) {
        if (v != 0.0) nz.push_back(v);
    }
    std::vector<double> mag(nz.size());
    for (std::size_t i = 0; i < nz.size(); ++i) mag[i] = std::fabs(nz[i]);
    const auto r = stats::average_ranks(mag);
    double w = 0.0;
    for (std::size_t i = 0; i < nz.size(); ++i) {
        if (nz[i] > 0) w += r[i];
    }
    std::size_t below = 0, above = 0;
    const std::size_t total = std::size_t{1} << nz.size();
    for (std::size_t mask = 0; mask < total; ++mask) {
        double s = 0.0;
        for (std::size_t i = 0; i < nz.size(); ++i) {
            if (mask >> i & 1U) s += r[i];
        }
        if (s <= w + 1e-9) ++below;
        if (s >= w - 1e-9) ++above;
    }
    return std::min(1.0, 2.0 * static_cast<double>(std::min(below, above)) / static_cast<double>(total));
}

std::vector<bool> bh_by_thresholds(const std::vector<double>& p, double q) {
    const std::size_t m = p.size();
    std::size_t k_max = 0;
    for (std::size_t k = 1; k <= m; ++k) {
        // k-th smallest p against k q / m
        std::vector<double> sorted = p;
        std::sort(sorted.begin(), sorted.end());
        if (sorted[k - 1] <= static_cast<double>(k) * q / static_cast<double>(m)) k_max = k;
    }
    std::vector<bool> out(m, false);
    if (k_max == 0) return out;
    std::vector<double> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < m; ++i) out[i] = p[i] <= sorted[k_max - 1];
    return out;
}

}  // namespace

int main() {
    criterion(1, "zero-cost collapse", [] {
        auto c = desk_config();
        c.cost_bps_all = 0.0;
        c.engines = roster_without(ReturnTiming::shifted_one_day);
        const auto u = universe(c);
        const auto store = run_suite(c, u, true);
        std::size_t cells = 0, unequal = 0, nonzero = 0;
        for (std::size_t b = 0; b < store.benchmarks.size(); ++b) {
            for (std::size_t k = 0; k < store.n_buckets; ++k) {
                const auto& ref = store.at(b, k, 0);
                for (std::size_t e = 0; e < store.engines.size(); ++e) {
                    const auto& cell = store.at(b, k, e);
                    ++cells;
                    if (!cell.ok || cell.equity.empty() || cell.equity != ref.equity) ++unequal;
                }
            }
        }
        for (const auto& r : divergence_records(store)) {
            if (r.divergence_pct != 0.0) ++nonzero;
        }
        const bool ok = store.benchmarks.size() >= 5 && store.n_buckets >= 5 && unequal == 0 && nonzero == 0;
        return Outcome{ok, fmt::format("{} benchmarks x {} buckets x {} engines, {} cells, {} unequal equity "
                                       "vectors, {} nonzero divergences",
                                       store.benchmarks.size(), store.n_buckets, store.engines.size(), cells, unequal,
                                       nonzero)};
    });

    criterion(2, "floor reproduction", [] {
        auto c = desk_config();
        c.benchmarks = {"bm02"};
        EngineConvention pre;
        pre.equity_reporting = EquityReporting::pre_trade;
        c.engines = {EngineConvention{}, pre};
        const auto store = run_suite(c, universe(c));
        const double want = 0.0018 / 0.9982 * 100.0;
        double worst = 0.0;
        std::size_t n = 0;
        for (const auto& r : divergence_records(store)) {
            if (r.metric != 0) continue;
            ++n;
            worst = std::max(worst, std::fabs(r.divergence_pct - want));
        }
        return Outcome{n == store.n_buckets && worst <= 1e-6,
                       fmt::format("{} buckets, target {:.6f}%, max deviation {:.3e} pp", n, want, worst)};
    });

    auto cost_relation = [](const EngineConvention& variant, double factor, const std::function<double(double)>& expected) {
        auto c = desk_config();
        const auto u = universe(c);
        std::size_t trades = 0, mismatched = 0, benchmarks = 0;
        double worst_total = 0.0;
        for (const auto& id : c.benchmarks) {
            const auto& spec = find_benchmark(id);
            const double bps = spec.cost_bps > 0.0 ? spec.cost_bps : 18.0;
            const CostSpec cost = CostSpec::from_bps(bps);
            ++benchmarks;
            for (const auto& bucket : u.partition.buckets) {
                const auto sub = u.prices.select_assets(bucket);
                const auto w = build_schedule(spec, sub, c.warmup, c.strategy);
                const auto e = run_variant(w, sub, c.initial_capital, cost, variant);
                double replay = 0.0;
                for (const auto& t : e.trades) {
                    ++trades;
                    const double ref = reference_cost(cost.rate, t.delta);
                    replay += ref;
                    if (t.cost != expected(ref)) ++mismatched;
                }
                if (replay > 0.0) worst_total = std::max(worst_total, std::fabs(e.total_cost() / replay - factor) / factor);
            }
        }
        return Outcome{mismatched == 0 && trades > 0 && worst_total <= 1e-12,
                       fmt::format("{} benchmarks, {} logged trades, {} differing from the transformed reference charge, factor {}, "
                                   "max relative error of run totals {:.1e}",
                                   benchmarks, trades, mismatched, factor, worst_total)};
    };

    criterion(3, "percent-divided charges reference/100",
              [&] { return cost_relation(with_pct(), 0.01, [](double r) { return r / 100.0; }); });

    criterion(4, "double commission charges 2x reference",
              [&] { return cost_relation(with_multiplier(2), 2.0, [](double r) { return r * 2.0; }); });

    criterion(5, "cost intensity vs engine spread", [] {
        auto base = desk_config();
        base.benchmarks = {"bm02", "bm01", "bm03", "bm12"};
        base.engines = roster_without(ReturnTiming::shifted_one_day);
        base.strategy.rotation_k = 3;
        const auto u = universe(base);
        std::vector<double> intensity, spread;
        for (double bps : {0.0, 18.0, 36.0, 60.0}) {
            auto c = base;
            c.cost_bps_all = bps;
            const auto store = run_suite(c, u);
            AnalysisOptions opt = AnalysisOptions::from(c);
            opt.permutation_draws = 10;
            opt.bootstrap_draws = 10;
            const auto a = analyze(store, opt);
            for (const auto& s : a.benchmarks) {
                intensity.push_back(s.cost_intensity);
                spread.push_back(s.es_range_pp);
            }
        }
        const auto rho = stats::spearman(intensity, spread);
        return Outcome{!rho.degenerate && rho.r >= 0.85,
                       fmt::format("{} (benchmark, regime) points, Spearman rho = {:.4f} (p = {:.2e})",
                                   intensity.size(), rho.r, rho.p_value)};
    });

    criterion(6, "truncation detection", [] {
        auto c = desk_config();
        c.benchmarks = {"bm01"};
        EngineConvention t;
        t.truncate_after = 62;
        c.engines = {EngineConvention{}, t};
        const auto store = run_suite(c, universe(c));
        const auto f = validate_results(store);
        std::size_t hits = 0;
        for (const auto& x : f) {
            if (x.kind == Finding::Kind::LengthMismatch && x.expected == 1258 && x.got == 62 && x.engine == t.id()) {
                ++hits;
            }
        }
        return Outcome{hits == store.n_buckets && f.size() == hits,
                       fmt::format("{} LengthMismatch(1258, 62) findings over {} buckets, {} findings total", hits,
                                   store.n_buckets, f.size())};
    });

    criterion(7, "reference loop oracle", [] {
        CounterRng rng(derive_key(42, fnv1a("oracle")));
        double worst = 0.0;
        for (int rep = 0; rep < 100; ++rep) {
            const std::size_t n = 1 + rng.below(3);
            const std::size_t days = 1 + rng.below(5);
            std::vector<std::string> dates, assets;
            std::vector<double> flat;
            std::vector<std::vector<double>> prices(days), weights(days, std::vector<double>(n, 0.0));
            std::vector<bool> reb(days, false);
            for (std::size_t t = 0; t < days; ++t) dates.push_back(std::to_string(t));
            for (std::size_t i = 0; i < n; ++i) assets.push_back("X" + std::to_string(i));
            for (std::size_t t = 0; t < days; ++t) {
                for (std::size_t i = 0; i < n; ++i) {
                    prices[t].push_back(1.0 + 199.0 * rng.uniform());
                    flat.push_back(prices[t][i]);
                }
            }
            WeightSchedule w(n);
            for (std::size_t t = 0; t < days; ++t) {
                if (t > 0 && rng.coin()) continue;
                double s = 0.0;
                for (auto& v : weights[t]) s += v = rng.uniform();
                const double invest = rng.coin() ? 1.0 : rng.uniform();
                for (auto& v : weights[t]) v = v / s * invest * (1.0 - 1e-15);
                w.set(t, weights[t]);
                reb[t] = true;
            }
            const double rate = 0.02 * rng.uniform();
            const auto want = literal_algorithm(prices, weights, reb, 1e6, rate);
            const auto got = run_reference(w, PriceMatrix(dates, assets, flat), 1e6, CostSpec{rate});
            if (got.equity.size() != want.size()) return Outcome{false, "length differs"};
            for (std::size_t t = 0; t < days; ++t) worst = std::max(worst, std::fabs(got.equity[t] / want[t] - 1.0));
        }
        return Outcome{worst <= 1e-12, fmt::format("100 random instances, max relative error {:.2e}", worst)};
    });

    criterion(8, "statistics oracles", [] {
        CounterRng rng(derive_key(42, fnv1a("stats-oracle")));
        std::size_t wil = 0, wil_bad = 0;
        for (std::size_t n = 1; n <= 12; ++n) {
            for (int rep = 0; rep < 20; ++rep) {
                std::vector<double> x(n);
                for (auto& v : x) v = std::round(rng.normal() * 4.0) / 4.0 + 0.1;
                if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; })) continue;
                ++wil;
                if (std::fabs(stats::wilcoxon_signed_rank(x).p_value - wilcoxon_by_enumeration(x)) > 1e-12) ++wil_bad;
            }
        }
        std::size_t bh_bad = 0;
        for (int rep = 0; rep < 200; ++rep) {
            std::vector<double> p(1 + rng.below(30));
            for (auto& v : p) v = rng.coin() ? 0.05 * rng.uniform() : rng.uniform();
            if (stats::bh_fdr(p, 0.05) != bh_by_thresholds(p, 0.05)) ++bh_bad;
        }
        std::size_t perm_bad = 0;
        for (std::size_t n = 1; n <= 10; ++n) {
            // Equal magnitudes: only the two all-same-sign patterns reach |sum| = n.
            const std::vector<double> ones(n, 1.0);
            if (std::fabs(stats::sign_flip_exhaustive(ones).p_value - std::ldexp(2.0, -static_cast<int>(n))) > 1e-15) {
                ++perm_bad;
            }
            std::vector<double> x(n);
            for (auto& v : x) v = rng.normal();
            const double obs = std::fabs(std::accumulate(x.begin(), x.end(), 0.0));
            std::size_t hits = 0;
            for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += (mask >> i & 1U) ? -x[i] : x[i];
                if (std::fabs(s) >= obs - 1e-12) ++hits;
            }
            if (std::fabs(stats::sign_flip_exhaustive(x).p_value - std::ldexp(static_cast<double>(hits), -static_cast<int>(n))) >
                1e-15) {
                ++perm_bad;
            }
        }
        const double tq = dist::t_quantile(0.975, 4);
        const double c1 = stats::lin_ccc(std::vector<double>{-1, 0, 1}, std::vector<double>{1, 0, -1});
        const double c2 = stats::lin_ccc(std::vector<double>{1, 2, 3}, std::vector<double>{2, 3, 4});
        const double c3 = stats::lin_ccc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3});
        const bool ccc_ok =
            std::fabs(c1 + 1.0) <= 1e-12 && std::fabs(c2 - 4.0 / 7.0) <= 1e-12 && std::fabs(c3 - 1.0) <= 1e-12;
        const bool ok = wil_bad == 0 && bh_bad == 0 && perm_bad == 0 && std::fabs(tq - 2.7764) <= 1e-4 && ccc_ok;
        return Outcome{ok, fmt::format("Wilcoxon {} instances ({} off), BH 200 ({} off), sign-flip 20 ({} off), "
                                       "t_0.975,4 = {:.6f}, CCC = ({:.12f}, {:.12f}, {:.12f})",
                                       wil, wil_bad, bh_bad, perm_bad, tq, c1, c2, c3)};
    });

    criterion(9, "metric identities", [] {
        CounterRng rng(derive_key(42, fnv1a("identities")));
        std::size_t bad = 0;
        for (int rep = 0; rep < 500; ++rep) {
            std::vector<double> s(2 + rng.below(6));
            const double sign = rng.coin() ? 1.0 : -1.0;
            for (auto& v : s) v = sign * (1e-6 + rng.uniform());
            if (csi(s) != 0) ++bad;
            const std::vector<double> b{rng.normal(), rng.normal() + 3.0};
            if (daf(b, b) != 1.0) ++bad;
            const auto i = iui(b);
            if (!i.contains(b[0]) || !i.contains(b[1])) ++bad;
        }
        const bool mixed = csi(std::vector<double>{0.5, -0.1}) == 1;
        const bool listed = csi(std::vector<double>{-0.1151, -0.1219, -0.1151, -0.1225, -0.1211}) == 0;
        return Outcome{bad == 0 && mixed && listed,
                       fmt::format("500 random samples, {} violations; mixed-sign CSI {}, BM11 list CSI {}", bad,
                                   mixed ? 1 : 0, listed ? 0 : 1)};
    });

    criterion(10, "dollar translation", [] {
        const double a = dollar_ambiguity(0.10, 1e9);
        const double b = dollar_ambiguity(3.71, 1e9);
        return Outcome{a == 1e6 && b == 37.1e6, fmt::format("0.10% -> ${:.2f}/yr, 3.71% -> ${:.2f}/yr", a, b)};
    });

    criterion(11, "bucket QC", [] {
        SynthSpec s;
        s.n_assets = 36;
        s.n_days = 1761;
        const auto p = generate_synthetic(s);
        const auto cov = compute_covariates(p);
        BucketConfig bc;
        bc.n_buckets = 6;
        bc.bucket_size = 6;
        bc.n_candidates = 20000;
        const auto part = rerandomize(cov, p.sectors(), bc);
        std::vector<double> scores;
        scores.reserve(bc.n_candidates);
        for (std::size_t i = 0; i < bc.n_candidates; ++i) {
            Partition cand;
            cand.buckets = sample_candidate(p.sectors(), bc, i);
            scores.push_back(mahalanobis_score(cand, cov).score);
        }
        std::nth_element(scores.begin(), scores.begin() + scores.size() / 2, scores.end());
        const double upper = scores[scores.size() / 2];
        std::nth_element(scores.begin(), scores.begin() + scores.size() / 2 - 1, scores.end());
        const double median = 0.5 * (upper + scores[scores.size() / 2 - 1]);
        const bool feasible = partition_is_valid(part, p.sectors(), bc.bucket_size, true);
        const auto bal = sector_balance(part, p.sectors());
        const bool ideal = bal.chi2 == 0.0 && bal.p_value == 1.0 && std::fabs(bal.entropy_ratio - 1.0) <= 1e-12;
        return Outcome{feasible && part.score <= median && ideal,
                       fmt::format("feasible {}, score {:.4f} vs median candidate {:.4f}; chi2 {}, p {}, entropy ratio {}",
                                   feasible, part.score, median, bal.chi2, bal.p_value, bal.entropy_ratio)};
    });

    criterion(12, "end-to-end determinism", [] {
        auto bundle_bytes = [](std::size_t jobs) {
            auto c = desk_config();
            c.jobs = jobs;
            const auto u = universe(c);
            const auto store = run_suite(c, u);
            auto extra = bucket_qc_tables(u.partition, u.prices, u.covariates);
            extra.push_back(universe_stats_table(u.prices));
            return bundle_to_json(
                make_bundle(analyze(store, AnalysisOptions::from(c)), store, validate_results(store), extra));
        };
        const auto a = bundle_bytes(1);
        const auto b = bundle_bytes(1);
        const auto d = bundle_bytes(4);
        return Outcome{a == b && a == d && !a.empty(),
                       fmt::format("bundle of {} bytes, jobs 1 vs 1 {}, jobs 1 vs 4 {}", a.size(),
                                   a == b ? "identical" : "differ", a == d ? "identical" : "differ")};
    });

    fmt::print("{} of 12 criteria passed\n", 12 - failures);
    return failures == 0 ? 0 : 1;
}
