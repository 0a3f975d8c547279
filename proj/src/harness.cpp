#include "btdiff/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "btdiff/csv.hpp"
#include "btdiff/error.hpp"
#include "btdiff/riskmetrics.hpp"
#include "btdiff/rng.hpp"

namespace btdiff {

using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "1.0.0";

void check_keys(const ojson& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
    if (!j.is_object()) throw BadSpec(fmt::format("{} must be an object", where));
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw BadSpec(fmt::format("unknown key '{}' in {}", key, where));
        }
    }
}

template <typename T>
void read_if(const ojson& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::string hex64(std::uint64_t h) { return fmt::format("{:016x}", h); }

std::string clean_field(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    }
    return s;
}

template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
    const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<EngineConvention> default_roster() {
    std::vector<EngineConvention> r(6);
    r[1].equity_reporting = EquityReporting::pre_trade;
    r[2].rate_interpretation = RateInterpretation::percent_divided;
    r[3].commission_multiplier = 2;
    r[4].fill_sequencing = FillSequencing::sells_first_sequential;
    r[5].return_timing = ReturnTiming::shifted_one_day;
    return r;
}

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.synth.n_assets = 180;
    return c;
}

RunConfig RunConfig::from_json(const std::string& text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const std::exception& e) {
        throw BadSpec(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c = defaults();
    try {
        check_keys(j,
                   {"seed", "data", "buckets", "benchmarks", "engines", "cost_bps", "cost_bps_all", "cost_regimes",
                    "strategy", "initial_capital", "warmup", "out_dir", "jobs", "analysis"},
                   "config");
        read_if(j, "seed", c.seed);
        if (j.contains("data")) {
            const auto& d = j.at("data");
            check_keys(d, {"prices_csv", "sectors_csv", "synthetic"}, "data");
            if (d.contains("prices_csv")) c.prices_csv = d.at("prices_csv").get<std::string>();
            if (d.contains("sectors_csv")) c.sectors_csv = d.at("sectors_csv").get<std::string>();
            if (d.contains("synthetic")) {
                const auto& s = d.at("synthetic");
                check_keys(s, {"n_assets", "n_days", "drift_by_sector", "vol_by_asset", "correlation", "seed",
                               "initial_price"},
                           "data.synthetic");
                read_if(s, "n_assets", c.synth.n_assets);
                read_if(s, "n_days", c.synth.n_days);
                read_if(s, "drift_by_sector", c.synth.drift_by_sector);
                read_if(s, "vol_by_asset", c.synth.vol_by_asset);
                read_if(s, "correlation", c.synth.correlation);
                read_if(s, "initial_price", c.synth.initial_price);
                if (s.contains("seed")) {
                    c.synth.seed = s.at("seed").get<std::uint64_t>();
                    c.synth_seed_set = true;
                }
            }
        }
        if (j.contains("buckets")) {
            const auto& b = j.at("buckets");
            check_keys(b, {"n_buckets", "bucket_size", "n_candidates", "seed", "sector_constraint"}, "buckets");
            read_if(b, "n_buckets", c.buckets.n_buckets);
            read_if(b, "bucket_size", c.buckets.bucket_size);
            read_if(b, "n_candidates", c.buckets.n_candidates);
            read_if(b, "sector_constraint", c.buckets.sector_constraint);
            if (b.contains("seed")) {
                c.buckets.seed = b.at("seed").get<std::uint64_t>();
                c.bucket_seed_set = true;
            }
        }
        read_if(j, "benchmarks", c.benchmarks);
        if (j.contains("engines")) {
            c.engines.clear();
            for (const auto& e : j.at("engines")) c.engines.push_back(EngineConvention::parse(e.get<std::string>()));
        }
        if (j.contains("cost_bps")) {
            for (const auto& [k, v] : j.at("cost_bps").items()) c.cost_bps[k] = v.get<double>();
        }
        if (j.contains("cost_bps_all") && !j.at("cost_bps_all").is_null()) {
            c.cost_bps_all = j.at("cost_bps_all").get<double>();
        }
        read_if(j, "cost_regimes", c.cost_regimes);
        if (j.contains("strategy")) {
            const auto& s = j.at("strategy");
            check_keys(s, {"rotation_k", "rotation_phase", "sma_window", "vol_window", "momentum_lookback",
                           "momentum_skip", "momentum_top", "tiers", "concentrated_weight", "switch_a", "switch_b",
                           "walk_forward", "elastic_net"},
                       "strategy");
            auto& p = c.strategy;
            read_if(s, "rotation_k", p.rotation_k);
            read_if(s, "rotation_phase", p.rotation_phase);
            read_if(s, "sma_window", p.sma_window);
            read_if(s, "vol_window", p.vol_window);
            read_if(s, "momentum_lookback", p.momentum_lookback);
            read_if(s, "momentum_skip", p.momentum_skip);
            read_if(s, "momentum_top", p.momentum_top);
            read_if(s, "tiers", p.tiers);
            read_if(s, "concentrated_weight", p.concentrated_weight);
            read_if(s, "switch_a", p.switch_a);
            read_if(s, "switch_b", p.switch_b);
            if (s.contains("walk_forward")) {
                const auto& w = s.at("walk_forward");
                check_keys(w, {"train_window", "gap", "horizon", "top"}, "strategy.walk_forward");
                read_if(w, "train_window", p.walk_forward.train_window);
                read_if(w, "gap", p.walk_forward.gap);
                read_if(w, "horizon", p.walk_forward.horizon);
                read_if(w, "top", p.walk_forward.top);
            }
            if (s.contains("elastic_net")) {
                const auto& e = s.at("elastic_net");
                check_keys(e, {"lambda", "alpha", "max_iter", "tol"}, "strategy.elastic_net");
                read_if(e, "lambda", p.elastic_net.lambda);
                read_if(e, "alpha", p.elastic_net.alpha);
                read_if(e, "max_iter", p.elastic_net.max_iter);
                read_if(e, "tol", p.elastic_net.tol);
            }
        }
        read_if(j, "initial_capital", c.initial_capital);
        read_if(j, "warmup", c.warmup);
        if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
        read_if(j, "jobs", c.jobs);
        if (j.contains("analysis")) {
            const auto& a = j.at("analysis");
            check_keys(a, {"permutation_draws", "bootstrap_draws", "fdr_q", "tost_alpha", "tost_margins_pct", "aum",
                           "dollar_reference_pct"},
                       "analysis");
            read_if(a, "permutation_draws", c.permutation_draws);
            read_if(a, "bootstrap_draws", c.bootstrap_draws);
            read_if(a, "fdr_q", c.fdr_q);
            read_if(a, "tost_alpha", c.tost_alpha);
            read_if(a, "tost_margins_pct", c.tost_margins_pct);
            read_if(a, "aum", c.aum);
            read_if(a, "dollar_reference_pct", c.dollar_reference_pct);
        }
    } catch (const nlohmann::json::exception& e) {
        throw BadSpec(std::string("config field has the wrong type: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return from_json(csv::read_text(path)); }

namespace {

ojson config_object(const RunConfig& c, bool include_host_fields) {
    ojson j;
    j["seed"] = c.seed;
    ojson data;
    if (c.prices_csv) data["prices_csv"] = c.prices_csv->string();
    if (c.sectors_csv) data["sectors_csv"] = c.sectors_csv->string();
    data["synthetic"] = {{"n_assets", c.synth.n_assets},
                         {"n_days", c.synth.n_days},
                         {"drift_by_sector", c.synth.drift_by_sector},
                         {"vol_by_asset", c.synth.vol_by_asset},
                         {"correlation", c.synth.correlation},
                         {"seed", c.data_seed()},
                         {"initial_price", c.synth.initial_price}};
    j["data"] = data;
    j["buckets"] = {{"n_buckets", c.buckets.n_buckets},
                    {"bucket_size", c.buckets.bucket_size},
                    {"n_candidates", c.buckets.n_candidates},
                    {"seed", c.bucket_seed()},
                    {"sector_constraint", c.buckets.sector_constraint}};
    j["benchmarks"] = c.benchmarks;
    auto engines = ojson::array();
    for (const auto& e : c.engines) engines.push_back(e.id());
    j["engines"] = engines;
    ojson costs = ojson::object();
    for (const auto& b : c.benchmarks) costs[b] = c.cost_for(b);
    j["cost_bps"] = costs;
    j["cost_regimes"] = c.cost_regimes;
    const auto& p = c.strategy;
    j["strategy"] = {{"rotation_k", p.rotation_k},
                     {"rotation_phase", p.rotation_phase},
                     {"sma_window", p.sma_window},
                     {"vol_window", p.vol_window},
                     {"momentum_lookback", p.momentum_lookback},
                     {"momentum_skip", p.momentum_skip},
                     {"momentum_top", p.momentum_top},
                     {"tiers", p.tiers},
                     {"concentrated_weight", p.concentrated_weight},
                     {"switch_a", p.switch_a},
                     {"switch_b", p.switch_b},
                     {"walk_forward",
                      {{"train_window", p.walk_forward.train_window},
                       {"gap", p.walk_forward.gap},
                       {"horizon", p.walk_forward.horizon},
                       {"top", p.walk_forward.top}}},
                     {"elastic_net",
                      {{"lambda", p.elastic_net.lambda},
                       {"alpha", p.elastic_net.alpha},
                       {"max_iter", p.elastic_net.max_iter},
                       {"tol", p.elastic_net.tol}}}};
    j["initial_capital"] = c.initial_capital;
    j["warmup"] = c.warmup;
    if (include_host_fields) {
        j["out_dir"] = c.out_dir.string();
        j["jobs"] = c.jobs;
    }
    j["analysis"] = {{"permutation_draws", c.permutation_draws}, {"bootstrap_draws", c.bootstrap_draws},
                     {"fdr_q", c.fdr_q},
                     {"tost_alpha", c.tost_alpha},
                     {"tost_margins_pct", c.tost_margins_pct},
                     {"aum", c.aum},
                     {"dollar_reference_pct", c.dollar_reference_pct}};
    return j;
}

}  // namespace

std::string RunConfig::to_json() const { return config_object(*this, true).dump(2) + "\n"; }

std::uint64_t RunConfig::data_seed() const { return synth_seed_set ? synth.seed : derive_key(seed, fnv1a("data")); }

std::uint64_t RunConfig::bucket_seed() const {
    return bucket_seed_set ? buckets.seed : derive_key(seed, fnv1a("buckets"));
}

double RunConfig::cost_for(const std::string& benchmark) const {
    if (cost_bps_all) return *cost_bps_all;
    if (auto it = cost_bps.find(benchmark); it != cost_bps.end()) return it->second;
    return find_benchmark(benchmark).cost_bps;
}

void RunConfig::validate() const {
    if (engines.size() < 2) throw NotEnoughEngines("the engine roster needs at least 2 conventions");
    std::set<std::string> ids;
    for (const auto& e : engines) {
        if (!ids.insert(e.id()).second) throw BadSpec("duplicate engine convention " + e.id());
    }
    if (benchmarks.empty()) throw BadSpec("no benchmarks selected");
    std::set<std::string> seen;
    for (const auto& b : benchmarks) {
        find_benchmark(b);
        if (!seen.insert(b).second) throw BadSpec("duplicate benchmark " + b);
        const double bps = cost_for(b);
        if (std::find(cost_regimes.begin(), cost_regimes.end(), bps) == cost_regimes.end()) {
            throw BadSpec(fmt::format("cost {} bps for {} is not a configured regime", bps, b));
        }
        CostSpec::from_bps(bps).validate();
    }
    for (const auto& [b, v] : cost_bps) find_benchmark(b);
    if (!(initial_capital > 0.0) || !std::isfinite(initial_capital)) throw BadSpec("initial capital must be > 0");
    if (!prices_csv) {
        synth.validate();
        if (warmup + 2 > synth.n_days) throw BadSpec("warm-up leaves fewer than 2 evaluation days");
    }
    if (permutation_draws == 0 || bootstrap_draws == 0) throw BadSpec("resampling draws must be positive");
    if (!(fdr_q > 0.0 && fdr_q < 1.0)) throw BadSpec("fdr_q must lie in (0, 1)");
    for (double m : tost_margins_pct) {
        if (!(m > 0.0)) throw BadSpec("TOST margins must be positive");
    }
    strategy.walk_forward.validate();
    strategy.elastic_net.validate();
}

PriceMatrix load_or_generate_prices(const RunConfig& cfg) {
    if (cfg.prices_csv) {
        return load_prices_csv(*cfg.prices_csv, cfg.sectors_csv);
    }
    SynthSpec s = cfg.synth;
    s.seed = cfg.data_seed();
    return generate_synthetic(s);
}

Partition build_partition(const RunConfig& cfg, const PriceMatrix& p, CovariateTable* covariates) {
    CovariateTable cov = compute_covariates(p);
    BucketConfig bc = cfg.buckets;
    bc.seed = cfg.bucket_seed();
    bc.jobs = cfg.jobs;
    Partition part = rerandomize(cov, p.sectors(), bc);
    if (covariates) *covariates = std::move(cov);
    return part;
}

const CellResult& ResultStore::at(std::size_t b, std::size_t bucket, std::size_t e) const {
    return cells.at((b * n_buckets + bucket) * engines.size() + e);
}

CellResult& ResultStore::at(std::size_t b, std::size_t bucket, std::size_t e) {
    return cells.at((b * n_buckets + bucket) * engines.size() + e);
}

namespace {

std::string fingerprint_prices(const PriceMatrix& p) {
    std::uint64_t h = fnv1a("prices");
    for (std::size_t j = 0; j < p.n_assets(); ++j) h = derive_key(h, fnv1a(p.assets()[j] + "/" + p.sectors()[j]));
    for (const auto& d : p.dates()) h = derive_key(h, fnv1a(d));
    for (double v : p.raw()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        h = derive_key(h, bits);
    }
    return hex64(h);
}

std::string fingerprint_partition(const Partition& part) {
    std::uint64_t h = fnv1a("partition");
    for (const auto& b : part.buckets) {
        h = derive_key(h, b.size());
        for (std::size_t a : b) h = derive_key(h, a);
    }
    return hex64(h);
}

ojson make_metadata(const RunConfig& cfg, const Universe& u, std::size_t expected_length) {
    ojson m;
    m["tool"] = "btdiff";
    m["version"] = kVersion;
    m["config"] = config_object(cfg, false);
    m["grid"] = {{"benchmarks", cfg.benchmarks},
                 {"engines", config_object(cfg, false)["engines"]},
                 {"n_buckets", u.partition.buckets.size()},
                 {"expected_length", expected_length}};
    m["data"] = {{"n_assets", u.prices.n_assets()},
                 {"n_days", u.prices.n_days()},
                 {"first_date", u.prices.dates().front()},
                 {"last_date", u.prices.dates().back()},
                 {"fingerprint", fingerprint_prices(u.prices)}};
    m["partition"] = {{"fingerprint", fingerprint_partition(u.partition)},
                      {"score", u.partition.score},
                      {"selected_candidate", u.partition.selected_candidate},
                      {"singular_covariance", u.partition.singular_covariance}};
    m["constants"] = {{"trading_days_per_year", kTradingDaysPerYear},
                      {"rebalance_spacing_days", kMonth},
                      {"schedule_sum_tolerance", 1e-12},
                      {"relative_difference_base", "min(|a|,|b|), absolute below 1e-9"},
                      {"total_return_divergence_basis", "terminal wealth multiple E_T/E_1"},
                      {"spread_divisor", "K-1"},
                      {"csi_zero_sign", "positive"},
                      {"ccc_moments", "population"},
                      {"wilcoxon_zeros", "dropped"},
                      {"wilcoxon_exact_max_n", stats::kWilcoxonExactMax},
                      {"permutation_estimator", "add-one"},
                      {"es_cv_unstable_below", 1e-12}};
    return m;
}

CellResult run_cell(const WeightSchedule& w, const PriceMatrix& sub, const RunConfig& cfg, double bps,
                    const EngineConvention& conv, bool keep_equity) {
    CellResult c;
    c.engine = conv.id();
    c.rate = CostSpec::from_bps(bps).rate;
    try {
        const EquitySeries e = run_variant(w, sub, cfg.initial_capital, CostSpec::from_bps(bps), conv);
        if (e.size() == 0) throw BadSchedule("engine produced an empty equity series");
        c.length = e.size();
        c.initial_equity = e.equity.front();
        c.final_equity = e.equity.back();
        c.min_equity = *std::min_element(e.equity.begin(), e.equity.end());
        c.total_cost = e.total_cost();
        for (const auto& t : e.trades) c.rejected_orders += t.rejected;
        if (e.size() >= 2) {
            c.perf = performance_metrics(e);
            c.turnover = annual_turnover(e);
            c.cost_intensity = cost_intensity(CostSpec{c.rate}, c.turnover);
        }
        if (keep_equity) c.equity = e.equity;
        c.ok = true;
    } catch (const std::exception& ex) {
        c.ok = false;
        c.error = ex.what();
    }
    return c;
}

}  // namespace

ResultStore run_suite(const RunConfig& cfg, const Universe& u, bool keep_equity) {
    cfg.validate();
    const auto& p = u.prices;
    if (cfg.warmup + 2 > p.n_days()) throw BadSpec("warm-up leaves fewer than 2 evaluation days");
    ResultStore store;
    store.benchmarks = cfg.benchmarks;
    for (const auto& e : cfg.engines) store.engines.push_back(e.id());
    store.n_buckets = u.partition.buckets.size();
    store.expected_length = p.n_days() - cfg.warmup;
    store.cells.resize(store.benchmarks.size() * store.n_buckets * store.engines.size());

    std::vector<PriceMatrix> panels;
    panels.reserve(store.n_buckets);
    for (const auto& b : u.partition.buckets) panels.push_back(p.select_assets(b));

    const std::size_t n_tasks = store.benchmarks.size() * store.n_buckets;
    parallel_for(n_tasks, cfg.jobs, [&](std::size_t task) {
        const std::size_t bi = task / store.n_buckets;
        const std::size_t k = task % store.n_buckets;
        const auto& spec = find_benchmark(store.benchmarks[bi]);
        const double bps = cfg.cost_for(spec.id);
        const PriceMatrix& sub = panels[k];
        std::optional<WeightSchedule> schedule;
        std::string failure;
        try {
            schedule = build_schedule(spec, sub, cfg.warmup, cfg.strategy);
        } catch (const std::exception& ex) {
            failure = ex.what();
        }
        bool fully_invested = false;
        if (schedule && !schedule->entries().empty()) {
            const auto& [day, w] = *schedule->entries().begin();
            fully_invested = day == cfg.warmup && std::accumulate(w.begin(), w.end(), 0.0) >= 1.0 - 1e-12;
        }
        for (std::size_t e = 0; e < cfg.engines.size(); ++e) {
            CellResult c;
            if (schedule) {
                c = run_cell(*schedule, sub, cfg, bps, cfg.engines[e], keep_equity);
            } else {
                c.engine = store.engines[e];
                c.rate = CostSpec::from_bps(bps).rate;
                c.error = failure;
            }
            c.benchmark = spec.id;
            c.bucket = k;
            c.first_fully_invested = fully_invested;
            store.at(bi, k, e) = std::move(c);
        }
    });

    ojson meta = make_metadata(cfg, u, store.expected_length);
    store.run_hash = hex64(fnv1a(meta.dump()));
    meta["run_hash"] = store.run_hash;
    store.metadata_json = meta.dump(2) + "\n";
    return store;
}

namespace {

const std::vector<std::string> kResultColumns = {
    "benchmark",      "bucket",     "engine",      "status",         "error",
    "length",         "initial_equity", "final_equity", "min_equity", "total_return_pct",
    "cagr_pct",       "ann_vol_pct", "sharpe",     "max_drawdown_pct", "degenerate_sharpe",
    "rate",           "total_cost", "turnover",    "cost_intensity", "first_fully_invested",
    "rejected_orders"};

double field_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    const auto v = csv::parse_double(s);
    if (!v) throw BadSpec("bad number '" + s + "' in results");
    return *v;
}

std::size_t field_size(const std::string& s) {
    const auto v = csv::parse_int(s);
    if (!v || *v < 0) throw BadSpec("bad count '" + s + "' in results");
    return static_cast<std::size_t>(*v);
}

}  // namespace

std::string results_to_csv(const ResultStore& store) {
    std::string out = csv::join(kResultColumns) + "\n";
    for (const auto& c : store.cells) {
        const auto f = csv::format_double;
        out += csv::join({c.benchmark, std::to_string(c.bucket), c.engine, c.ok ? "ok" : "failed",
                          clean_field(c.error), std::to_string(c.length), f(c.initial_equity), f(c.final_equity),
                          f(c.min_equity), f(c.perf.total_return_pct), f(c.perf.cagr_pct), f(c.perf.ann_vol_pct),
                          f(c.perf.sharpe), f(c.perf.max_drawdown_pct), c.perf.degenerate_sharpe ? "1" : "0",
                          f(c.rate), f(c.total_cost), f(c.turnover), f(c.cost_intensity),
                          c.first_fully_invested ? "1" : "0", std::to_string(c.rejected_orders)});
        out += "\n";
    }
    return out;
}

ResultStore results_from_csv(const std::string& text, const std::string& metadata_json) {
    ResultStore store;
    ojson meta;
    try {
        meta = ojson::parse(metadata_json);
        const auto& g = meta.at("grid");
        store.benchmarks = g.at("benchmarks").get<std::vector<std::string>>();
        store.engines = g.at("engines").get<std::vector<std::string>>();
        store.n_buckets = g.at("n_buckets").get<std::size_t>();
        store.expected_length = g.at("expected_length").get<std::size_t>();
        store.run_hash = meta.at("run_hash").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BadSpec(std::string("run metadata is malformed: ") + e.what());
    }
    store.metadata_json = metadata_json;
    store.cells.resize(store.benchmarks.size() * store.n_buckets * store.engines.size());
    std::vector<bool> filled(store.cells.size(), false);

    const auto rows = csv::parse(text);
    if (rows.empty() || rows[0] != kResultColumns) throw BadSpec("results file has an unexpected header");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != kResultColumns.size()) throw BadSpec(fmt::format("results row {} has the wrong width", r));
        const auto bi = std::find(store.benchmarks.begin(), store.benchmarks.end(), row[0]);
        const auto ei = std::find(store.engines.begin(), store.engines.end(), row[2]);
        const std::size_t k = field_size(row[1]);
        if (bi == store.benchmarks.end() || ei == store.engines.end() || k >= store.n_buckets) {
            throw BadSpec(fmt::format("results row {} is outside the run grid", r));
        }
        const std::size_t b = static_cast<std::size_t>(bi - store.benchmarks.begin());
        const std::size_t e = static_cast<std::size_t>(ei - store.engines.begin());
        CellResult c;
        c.benchmark = row[0];
        c.bucket = k;
        c.engine = row[2];
        c.ok = row[3] == "ok";
        c.error = row[4];
        c.length = field_size(row[5]);
        c.initial_equity = field_double(row[6]);
        c.final_equity = field_double(row[7]);
        c.min_equity = field_double(row[8]);
        c.perf.total_return_pct = field_double(row[9]);
        c.perf.cagr_pct = field_double(row[10]);
        c.perf.ann_vol_pct = field_double(row[11]);
        c.perf.sharpe = field_double(row[12]);
        c.perf.max_drawdown_pct = field_double(row[13]);
        c.perf.degenerate_sharpe = row[14] == "1";
        c.rate = field_double(row[15]);
        c.total_cost = field_double(row[16]);
        c.turnover = field_double(row[17]);
        c.cost_intensity = field_double(row[18]);
        c.first_fully_invested = row[19] == "1";
        c.rejected_orders = field_size(row[20]);
        const std::size_t idx = (b * store.n_buckets + k) * store.engines.size() + e;
        store.cells[idx] = std::move(c);
        filled[idx] = true;
    }
    // Absent rows become failed cells so validation reports them.
    for (std::size_t b = 0; b < store.benchmarks.size(); ++b) {
        for (std::size_t k = 0; k < store.n_buckets; ++k) {
            for (std::size_t e = 0; e < store.engines.size(); ++e) {
                const std::size_t idx = (b * store.n_buckets + k) * store.engines.size() + e;
                if (filled[idx]) continue;
                auto& c = store.cells[idx];
                c.benchmark = store.benchmarks[b];
                c.bucket = k;
                c.engine = store.engines[e];
                c.error = "no result row";
            }
        }
    }
    return store;
}

std::string_view finding_name(Finding::Kind k) {
    switch (k) {
        case Finding::Kind::LengthMismatch: return "LengthMismatch";
        case Finding::Kind::NonPositiveEquity: return "NonPositiveEquity";
        case Finding::Kind::MissingCell: return "MissingCell";
    }
    return "Unknown";
}

std::vector<Finding> validate_results(const ResultStore& store) {
    std::vector<Finding> out;
    for (const auto& c : store.cells) {
        if (!c.ok) {
            out.push_back({Finding::Kind::MissingCell, c.benchmark, c.bucket, c.engine, 0, 0, c.error});
            continue;
        }
        if (c.length != store.expected_length) {
            out.push_back({Finding::Kind::LengthMismatch, c.benchmark, c.bucket, c.engine, store.expected_length,
                           c.length, fmt::format("expected {}, got {}", store.expected_length, c.length)});
        }
        if (!(c.min_equity > 0.0)) {
            out.push_back({Finding::Kind::NonPositiveEquity, c.benchmark, c.bucket, c.engine, 0, 0,
                           "minimum equity " + csv::format_double(c.min_equity)});
        }
    }
    return out;
}

double metric_value(const CellResult& c, std::size_t metric) {
    switch (metric) {
        case 0: return c.wealth_multiple();
        case 1: return c.perf.cagr_pct;
        case 2: return c.perf.ann_vol_pct;
        case 3: return c.perf.sharpe;
        case 4: return c.perf.max_drawdown_pct;
        default: throw BadSpec(fmt::format("unknown metric index {}", metric));
    }
}

std::vector<DivergenceRecord> divergence_records(const ResultStore& store) {
    std::vector<DivergenceRecord> out;
    const std::size_t n_eng = store.engines.size();
    for (std::size_t b = 0; b < store.benchmarks.size(); ++b) {
        for (std::size_t k = 0; k < store.n_buckets; ++k) {
            for (std::size_t i = 0; i < n_eng; ++i) {
                for (std::size_t j = i + 1; j < n_eng; ++j) {
                    const auto& ci = store.at(b, k, i);
                    const auto& cj = store.at(b, k, j);
                    if (!ci.ok || !cj.ok) continue;
                    for (std::size_t m = 0; m < kMetricCount; ++m) {
                        const auto rd = relative_difference(metric_value(ci, m), metric_value(cj, m));
                        out.push_back({store.benchmarks[b], k, i, j, m, rd.magnitude(), rd.percent,
                                       rd.absolute_fallback});
                    }
                }
            }
        }
    }
    return out;
}

AnalysisOptions AnalysisOptions::from(const RunConfig& cfg) {
    AnalysisOptions o;
    o.permutation_draws = cfg.permutation_draws;
    o.bootstrap_draws = cfg.bootstrap_draws;
    o.fdr_q = cfg.fdr_q;
    o.tost_alpha = cfg.tost_alpha;
    o.tost_margins_pct = cfg.tost_margins_pct;
    o.aum = cfg.aum;
    o.dollar_reference_pct = cfg.dollar_reference_pct;
    o.seed = cfg.seed;
    return o;
}

namespace {

/// Per (benchmark, bucket) cross-engine quantities, only when every engine succeeded.
struct BucketSpread {
    bool complete = false;
    double es_range_pp = 0.0;
    SpreadCv cv;
    Interval iui;
    int csi = 0;
    double cagr_gap_pp = 0.0;
    double cost_intensity = 0.0;
    double turnover = 0.0;
};

std::size_t reference_engine_index(const ResultStore& store) {
    const std::string ref = EngineConvention::reference().id();
    const auto it = std::find(store.engines.begin(), store.engines.end(), ref);
    return it == store.engines.end() ? 0 : static_cast<std::size_t>(it - store.engines.begin());
}

}  // namespace

Analysis analyze(const ResultStore& store, const AnalysisOptions& opt) {
    Analysis a;
    a.run_hash = store.run_hash;
    a.engines = store.engines;
    a.records = divergence_records(store);
    const std::size_t n_b = store.benchmarks.size();
    const std::size_t n_k = store.n_buckets;
    const std::size_t n_e = store.engines.size();
    const std::size_t ref_e = reference_engine_index(store);

    std::vector<EngineConvention> conv;
    for (const auto& id : store.engines) conv.push_back(EngineConvention::parse(id));

    std::vector<std::vector<BucketSpread>> spread(n_b, std::vector<BucketSpread>(n_k));
    for (std::size_t b = 0; b < n_b; ++b) {
        for (std::size_t k = 0; k < n_k; ++k) {
            auto& s = spread[b][k];
            std::vector<double> tr, sharpe, cagr;
            bool all_ok = n_e >= 2;
            for (std::size_t e = 0; e < n_e; ++e) {
                const auto& c = store.at(b, k, e);
                if (!c.ok) {
                    all_ok = false;
                    break;
                }
                tr.push_back(c.perf.total_return_pct);
                sharpe.push_back(c.perf.sharpe);
                cagr.push_back(c.perf.cagr_pct);
            }
            if (!all_ok) continue;
            s.complete = true;
            s.es_range_pp = es_range(tr);
            s.cv = es_cv(tr);
            s.iui = iui(tr);
            s.csi = csi(sharpe);
            s.cagr_gap_pp = es_range(cagr);
            s.cost_intensity = store.at(b, k, ref_e).cost_intensity;
            s.turnover = store.at(b, k, ref_e).turnover;
        }
    }

    const auto ref_it = std::find(store.benchmarks.begin(), store.benchmarks.end(), opt.daf_reference);
    const bool have_ref = ref_it != store.benchmarks.end();
    const std::size_t ref_b = have_ref ? static_cast<std::size_t>(ref_it - store.benchmarks.begin()) : 0;

    // Index records for per-benchmark aggregation.
    std::vector<std::vector<const DivergenceRecord*>> tr_records(n_b);
    {
        std::size_t b = 0;
        for (const auto& r : a.records) {
            while (store.benchmarks[b] != r.benchmark) ++b;
            if (r.metric == 0) tr_records[b].push_back(&r);
        }
    }

    for (std::size_t b = 0; b < n_b; ++b) {
        BenchmarkSummary s;
        s.benchmark = store.benchmarks[b];
        s.n_records = tr_records[b].size();
        for (std::size_t k = 0; k < n_k; ++k) {
            for (std::size_t e = 0; e < n_e; ++e) {
                if (!store.at(b, k, e).ok) ++s.failed_cells;
            }
        }
        s.cost_bps = store.at(b, 0, 0).rate * 1e4;
        if (!tr_records[b].empty()) {
            double sum = 0.0;
            for (const auto* r : tr_records[b]) {
                sum += r->divergence_pct;
                s.max_tr_div_pct = std::max(s.max_tr_div_pct, r->divergence_pct);
            }
            s.mean_tr_div_pct = sum / static_cast<double>(tr_records[b].size());
        }
        std::vector<double> es, cv, lo, hi, width, dafs, gaps, ci, to;
        for (std::size_t k = 0; k < n_k; ++k) {
            const auto& sp = spread[b][k];
            if (!sp.complete) continue;
            es.push_back(sp.es_range_pp);
            if (sp.cv.unstable) {
                ++s.es_cv_unstable;
            } else {
                cv.push_back(sp.cv.percent);
            }
            lo.push_back(sp.iui.lo);
            hi.push_back(sp.iui.hi);
            width.push_back(sp.iui.width());
            if (sp.csi) ++s.csi_buckets;
            gaps.push_back(sp.cagr_gap_pp);
            ci.push_back(sp.cost_intensity);
            to.push_back(sp.turnover);
            if (have_ref && spread[ref_b][k].complete && spread[ref_b][k].es_range_pp > 0.0) {
                dafs.push_back(sp.es_range_pp / spread[ref_b][k].es_range_pp);
            } else {
                ++s.daf_undefined;
            }
        }
        s.es_range_pp = mean_of(es);
        s.es_cv_pct = mean_of(cv);
        s.iui_lo = mean_of(lo);
        s.iui_hi = mean_of(hi);
        s.iui_width_pp = mean_of(width);
        s.daf_defined = !dafs.empty();
        s.daf = mean_of(dafs);
        s.csi = s.csi_buckets > 0 ? 1 : 0;
        s.dollar_pp = mean_of(gaps);
        s.cost_intensity = mean_of(ci);
        s.turnover = mean_of(to);

        std::vector<double> series;
        for (std::size_t k = 0; k < n_k; ++k) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto* r : tr_records[b]) {
                if (r->bucket == k) {
                    sum += r->divergence_pct;
                    ++n;
                }
            }
            if (n > 0) series.push_back(sum / static_cast<double>(n));
        }
        const auto ac = stats::lag1_autocorr(series);
        s.lag1 = ac.r;
        s.lag1_degenerate = ac.degenerate;
        a.benchmarks.push_back(std::move(s));
    }

    // Per (benchmark, pair) battery on signed total-return differences.
    std::vector<double> t_p;
    for (std::size_t b = 0; b < n_b; ++b) {
        for (std::size_t i = 0; i < n_e; ++i) {
            for (std::size_t j = i + 1; j < n_e; ++j) {
                PairTests pt;
                pt.benchmark = store.benchmarks[b];
                pt.engine_a = i;
                pt.engine_b = j;
                std::vector<double> diffs, floors, residuals;
                for (const auto* r : tr_records[b]) {
                    if (r->engine_a != i || r->engine_b != j) continue;
                    diffs.push_back(r->signed_pct);
                    const auto& cell = store.at(b, r->bucket, i);
                    const auto fs = floor_decomposition(r->divergence_pct, conv[i], conv[j], cell.rate,
                                                        cell.first_fully_invested);
                    floors.push_back(fs.floor_pct);
                    residuals.push_back(fs.residual_pct);
                }
                if (!diffs.empty()) {
                    pt.t = stats::one_sample_t(diffs);
                    pt.wilcoxon = stats::wilcoxon_signed_rank(diffs);
                    const std::uint64_t key =
                        derive_key(opt.seed, fnv1a(pt.benchmark + "/" + store.engines[i] + "/" + store.engines[j]));
                    pt.permutation = stats::sign_flip_permutation(diffs, opt.permutation_draws, key);
                    for (double m : opt.tost_margins_pct) pt.tost.push_back(stats::tost(diffs, m, opt.tost_alpha));
                    pt.mean_floor_pct = mean_of(floors);
                    pt.mean_residual_pct = mean_of(residuals);
                } else {
                    pt.t.degenerate = pt.wilcoxon.degenerate = pt.permutation.degenerate = true;
                    pt.t.p_value = pt.wilcoxon.p_value = pt.permutation.p_value =
                        std::numeric_limits<double>::quiet_NaN();
                    pt.tost.resize(opt.tost_margins_pct.size());
                    for (auto& t : pt.tost) t.degenerate = true;
                }
                t_p.push_back(pt.t.p_value);
                a.tests.push_back(std::move(pt));
            }
        }
    }
    a.bh_family = t_p.size();
    const auto reject = stats::bh_fdr(t_p, opt.fdr_q);
    for (std::size_t i = 0; i < a.tests.size(); ++i) a.tests[i].bh_reject = reject[i];

    // Concordance between engine pairs over all complete (benchmark, bucket) cells.
    a.ccc.assign(kMetricCount, {});
    a.ccc_min.assign(kMetricCount, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        for (std::size_t i = 0; i < n_e; ++i) {
            for (std::size_t j = i + 1; j < n_e; ++j) {
                std::vector<double> x, y;
                for (std::size_t b = 0; b < n_b; ++b) {
                    for (std::size_t k = 0; k < n_k; ++k) {
                        const auto& ci = store.at(b, k, i);
                        const auto& cj = store.at(b, k, j);
                        if (!ci.ok || !cj.ok) continue;
                        x.push_back(metric_value(ci, m));
                        y.push_back(metric_value(cj, m));
                    }
                }
                const double v = x.empty() ? std::numeric_limits<double>::quiet_NaN() : stats::lin_ccc(x, y);
                a.ccc[m].push_back(v);
                if (!std::isnan(v) && !(a.ccc_min[m] <= v)) a.ccc_min[m] = v;
            }
        }
    }

    // Cost intensity vs engine spread across benchmarks.
    auto benchmark_means = [&](std::span<const std::size_t> buckets, std::vector<double>& xs, std::vector<double>& ys) {
        xs.clear();
        ys.clear();
        for (std::size_t b = 0; b < n_b; ++b) {
            double sx = 0.0, sy = 0.0;
            std::size_t n = 0;
            for (std::size_t k : buckets) {
                const auto& sp = spread[b][k];
                if (!sp.complete) continue;
                sx += sp.cost_intensity;
                sy += sp.es_range_pp;
                ++n;
            }
            if (n == 0) continue;
            xs.push_back(sx / static_cast<double>(n));
            ys.push_back(sy / static_cast<double>(n));
        }
    };
    std::vector<std::size_t> all_buckets(n_k);
    std::iota(all_buckets.begin(), all_buckets.end(), std::size_t{0});
    std::vector<double> xs, ys;
    benchmark_means(all_buckets, xs, ys);
    a.intensity_pearson = stats::pearson(xs, ys);
    a.intensity_spearman = stats::spearman(xs, ys);
    if (n_k >= 2) {
        a.intensity_bootstrap = stats::cluster_bootstrap(
            n_k,
            [&](std::span<const std::size_t> ids) {
                std::vector<double> bx, by;
                benchmark_means(ids, bx, by);
                return stats::spearman(bx, by).r;
            },
            opt.bootstrap_draws, derive_key(opt.seed, fnv1a("cluster_bootstrap")));
    } else {
        a.intensity_bootstrap.point = a.intensity_spearman.r;
        a.intensity_bootstrap.lo = a.intensity_bootstrap.hi = std::numeric_limits<double>::quiet_NaN();
    }

    a.aum = opt.aum;
    a.tost_margins = opt.tost_margins_pct;
    for (double pct : opt.dollar_reference_pct) a.dollar_reference.emplace_back(pct, dollar_ambiguity(pct, opt.aum));
    return a;
}

}  // namespace btdiff
