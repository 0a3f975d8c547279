#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "btdiff/csv.hpp"
#include "btdiff/error.hpp"
#include "btdiff/harness.hpp"

using namespace btdiff;
namespace fs = std::filesystem;

namespace {

RunConfig small_config() {
    RunConfig c;
    c.seed = 11;
    c.synth.n_assets = 12;
    c.synth.n_days = 260;
    c.buckets.n_buckets = 3;
    c.buckets.bucket_size = 4;
    c.buckets.n_candidates = 40;
    c.benchmarks = {"bm01", "bm02", "bm03"};
    c.warmup = 100;
    c.permutation_draws = 200;
    c.bootstrap_draws = 100;
    return c;
}

Universe universe(const RunConfig& c) {
    Universe u{load_or_generate_prices(c), {}, {}};
    u.partition = build_partition(c, u.prices, &u.covariates);
    return u;
}

EngineConvention pre_trade() {
    EngineConvention e;
    e.equity_reporting = EquityReporting::pre_trade;
    return e;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("btdiff_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("default roster") {
    const auto r = default_roster();
    REQUIRE(r.size() == 6);
    CHECK(r[0].is_reference());
    std::set<std::string> ids;
    for (const auto& e : r) ids.insert(e.id());
    CHECK(ids.size() == 6);
}

TEST_CASE("config JSON") {
    const auto c = small_config();
    const auto back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.data_seed() == c.data_seed());
    CHECK(RunConfig::defaults().synth.n_assets == 180);

    CHECK_THROWS_AS(RunConfig::from_json("{\"sed\": 1}"), BadSpec);
    CHECK_THROWS_AS(RunConfig::from_json("{\"buckets\": {\"n_bucket\": 3}}"), BadSpec);
    CHECK_THROWS_AS(RunConfig::from_json("{\"seed\": \"x\"}"), BadSpec);
    CHECK_THROWS_AS(RunConfig::from_json("not json"), BadSpec);
    CHECK_THROWS_AS(RunConfig::from_json("{\"engines\": [\"post|abs|x1|atomic|aligned|full\"]}"), NotEnoughEngines);
    CHECK_THROWS_AS(RunConfig::from_json("{\"cost_bps\": {\"bm01\": 25}}"), BadSpec);
    CHECK_THROWS_AS(RunConfig::from_json("{\"benchmarks\": [\"bm01\", \"bm01\"]}"), BadSpec);
    CHECK_THROWS_AS(RunConfig::from_json("{\"benchmarks\": [\"nope\"]}"), BadSpec);

    auto d = RunConfig::from_json("{\"cost_bps_all\": 0}");
    CHECK(d.cost_for("bm04") == 0.0);
    CHECK(RunConfig::defaults().cost_for("bm04") == 36.0);
}

TEST_CASE("grid size and failures") {
    auto c = small_config();
    c.benchmarks = {"bm01"};
    c.engines = {EngineConvention{}, pre_trade()};
    c.buckets.n_buckets = 1;
    const auto store = run_suite(c, universe(c));
    CHECK(store.cells.size() == 2);
    CHECK(store.expected_length == 160);
    for (const auto& cell : store.cells) {
        CHECK(cell.ok);
        CHECK(cell.length == 160);
    }
    CHECK(validate_results(store).empty());

    c.benchmarks = {"bm01", "bm08_gbr"};
    const auto failed = run_suite(c, universe(c));
    CHECK(failed.cells.size() == 4);
    CHECK_FALSE(failed.at(1, 0, 0).ok);
    CHECK_FALSE(failed.at(1, 0, 0).error.empty());
    const auto findings = validate_results(failed);
    REQUIRE(findings.size() == 2);
    CHECK(findings[0].kind == Finding::Kind::MissingCell);
}

TEST_CASE("results do not depend on the number of workers") {
    auto c = small_config();
    const auto u = universe(c);
    const auto a = run_suite(c, u);
    c.jobs = 3;
    const auto b = run_suite(c, u);
    CHECK(results_to_csv(a) == results_to_csv(b));
    CHECK(a.metadata_json == b.metadata_json);
    CHECK(a.run_hash == b.run_hash);
    CHECK(a.run_hash.size() == 16);
    c.seed = 12;
    CHECK(run_suite(c, universe(c)).run_hash != a.run_hash);
}

TEST_CASE("results CSV round trip") {
    auto c = small_config();
    const auto store = run_suite(c, universe(c));
    const auto text = results_to_csv(store);
    const auto back = results_from_csv(text, store.metadata_json);
    CHECK(results_to_csv(back) == text);
    CHECK(back.run_hash == store.run_hash);

    // Drop the last row: that cell comes back as missing.
    const auto cut = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
    const auto partial = results_from_csv(cut, store.metadata_json);
    const auto f = validate_results(partial);
    REQUIRE(f.size() == 1);
    CHECK(f[0].kind == Finding::Kind::MissingCell);
    CHECK_THROWS_AS(results_from_csv("a,b\n", store.metadata_json), BadSpec);
    CHECK_THROWS_AS(results_from_csv(text, "{}"), BadSpec);
}

TEST_CASE("truncated engines are detected") {
    RunConfig c;
    c.synth.n_assets = 4;
    c.synth.n_days = 1761;
    c.buckets.n_buckets = 1;
    c.buckets.bucket_size = 4;
    c.buckets.n_candidates = 1;
    c.benchmarks = {"bm01"};
    EngineConvention t;
    t.truncate_after = 62;
    c.engines = {EngineConvention{}, t};
    const auto store = run_suite(c, universe(c));
    CHECK(store.expected_length == 1258);
    const auto f = validate_results(store);
    REQUIRE(f.size() == 1);
    CHECK(f[0].kind == Finding::Kind::LengthMismatch);
    CHECK(f[0].expected == 1258);
    CHECK(f[0].got == 62);
    CHECK(f[0].engine == t.id());
}

TEST_CASE("zero-cost store has zero divergence everywhere") {
    auto c = small_config();
    c.cost_bps_all = 0.0;
    EngineConvention pct, x2, sf;
    pct.rate_interpretation = RateInterpretation::percent_divided;
    x2.commission_multiplier = 2;
    sf.fill_sequencing = FillSequencing::sells_first_sequential;
    c.engines = {EngineConvention{}, pre_trade(), pct, x2, sf};
    const auto store = run_suite(c, universe(c));
    const auto a = analyze(store, AnalysisOptions::from(c));
    CHECK(a.records.size() == 3 * 3 * 10 * kMetricCount);
    for (const auto& r : a.records) CHECK(r.divergence_pct == 0.0);
    for (const auto& t : a.tests) {
        CHECK(t.t.degenerate);
        CHECK(std::isnan(t.t.p_value));
        CHECK_FALSE(t.bh_reject);
        for (const auto& e : t.tost) {
            CHECK(e.degenerate);
            CHECK(e.equivalent);
        }
    }
    for (const auto& s : a.benchmarks) CHECK(s.es_range_pp == 0.0);
}

TEST_CASE("buy-and-hold pre/post pair sits exactly on the floor") {
    auto c = small_config();
    c.benchmarks = {"bm02"};
    c.engines = {EngineConvention{}, pre_trade()};
    const auto store = run_suite(c, universe(c));
    const auto a = analyze(store, AnalysisOptions::from(c));
    const double floor = 0.0018 / 0.9982 * 100.0;
    std::size_t n = 0;
    for (const auto& r : a.records) {
        if (r.metric != 0) continue;
        ++n;
        CHECK(std::fabs(r.divergence_pct - floor) <= 1e-6);
    }
    CHECK(n == 3);
    REQUIRE(a.tests.size() == 1);
    CHECK(a.tests[0].mean_floor_pct == doctest::Approx(floor).epsilon(1e-12));
    CHECK(std::fabs(a.tests[0].mean_residual_pct) <= 1e-6);
}

TEST_CASE("BH family covers every benchmark and pair") {
    RunConfig c;
    c.synth.n_assets = 8;
    c.synth.n_days = 300;
    c.buckets.n_buckets = 2;
    c.buckets.bucket_size = 4;
    c.buckets.n_candidates = 10;
    c.warmup = 280;
    c.benchmarks.clear();
    for (const auto& b : benchmark_registry()) c.benchmarks.push_back(b.id);
    c.permutation_draws = 50;
    c.bootstrap_draws = 50;
    const auto store = run_suite(c, universe(c));
    const auto a = analyze(store, AnalysisOptions::from(c));
    CHECK(a.bh_family == 225);
    CHECK(a.tests.size() == 225);
    CHECK(validate_results(store).size() == 3 * 2 * 6);
    for (const auto& s : a.benchmarks) {
        if (s.benchmark == "bm08_gbr") CHECK(s.failed_cells == 12);
    }
}

TEST_CASE("report bundle round trips through disk") {
    auto c = small_config();
    const auto u = universe(c);
    const auto store = run_suite(c, u);
    const auto a = analyze(store, AnalysisOptions::from(c));
    auto extra = bucket_qc_tables(u.partition, u.prices, u.covariates);
    extra.push_back(universe_stats_table(u.prices));
    const auto bundle = make_bundle(a, store, validate_results(store), extra);

    const auto json = bundle_to_json(bundle);
    const auto back = bundle_from_json(json);
    CHECK(bundle_to_json(back) == json);
    CHECK(back.run_hash == store.run_hash);

    const auto dir = scratch("emit");
    emit_reports(bundle, dir);
    for (const auto& t : bundle.tables) {
        CAPTURE(t.name);
        CHECK(fs::exists(dir / (t.name + ".json")));
        const auto reloaded = table_from_csv(t.name, csv::read_text(dir / (t.name + ".csv")));
        CHECK(reloaded.columns == t.columns);
        CHECK(reloaded.rows == t.rows);
        CHECK(table_to_json(t, bundle.run_hash).find(bundle.run_hash) != std::string::npos);
    }
    const auto meta = csv::read_text(dir / "metadata.json");
    CHECK(meta.find("\"seed\": 11") != std::string::npos);
    CHECK(meta.find("post|abs|x1|atomic|aligned|full") != std::string::npos);

    bool found = false;
    for (const auto& row : bundle.table("dollar_ambiguity").rows) {
        if (row[0] == "reference" && row[3] == "1000000.00") found = true;
    }
    CHECK(found);
    CHECK_THROWS(bundle.table("no_such_table"));

    const auto blocker = scratch("blocker");
    csv::write_text(blocker, "x");
    CHECK_THROWS_AS(emit_reports(bundle, blocker / "sub"), IoError);
    fs::remove_all(dir);
    fs::remove(blocker);
}
