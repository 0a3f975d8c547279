#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "btdiff/buckets.hpp"
#include "btdiff/engine.hpp"
#include "btdiff/marketdata.hpp"
#include "btdiff/stats.hpp"
#include "btdiff/strategies.hpp"

namespace btdiff {

/// Six conventions: reference, pre-trade, percent-divided, double
/// commission, sells-first sequential fills, one-day shifted returns.
std::vector<EngineConvention> default_roster();

struct RunConfig {
    std::optional<std::filesystem::path> prices_csv;
    std::optional<std::filesystem::path> sectors_csv;
    SynthSpec synth{};
    bool synth_seed_set = false;

    BucketConfig buckets{};
    bool bucket_seed_set = false;

    std::vector<std::string> benchmarks = default_benchmark_ids();
    std::vector<EngineConvention> engines = default_roster();
    std::map<std::string, double> cost_bps;      // per-benchmark overrides
    std::optional<double> cost_bps_all;          // overrides everything
    std::vector<double> cost_regimes{0.0, 18.0, 36.0, 60.0};
    StrategyParams strategy{};

    double initial_capital = 1'000'000.0;
    std::size_t warmup = 503;                    // first evaluation day
    std::filesystem::path out_dir = "out";
    std::size_t jobs = 1;
    std::uint64_t seed = 42;

    std::size_t permutation_draws = 10000;
    std::size_t bootstrap_draws = 5000;
    double fdr_q = 0.05;
    double tost_alpha = 0.05;
    std::vector<double> tost_margins_pct{0.10, 0.50};
    double aum = 1e9;
    std::vector<double> dollar_reference_pct{0.10, 3.71};

    /// Default shape: 180 synthetic assets in 6 sectors, 30 buckets of 6.
    static RunConfig defaults();
    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    std::string to_json() const;

    /// Seeds actually used: explicit values win, otherwise derived from `seed`.
    std::uint64_t data_seed() const;
    std::uint64_t bucket_seed() const;
    double cost_for(const std::string& benchmark) const;

    void validate() const;
};

struct Universe {
    PriceMatrix prices;
    Partition partition;
    CovariateTable covariates;
};

PriceMatrix load_or_generate_prices(const RunConfig& cfg);
Partition build_partition(const RunConfig& cfg, const PriceMatrix& p, CovariateTable* covariates = nullptr);

struct CellResult {
    std::string benchmark;
    std::size_t bucket = 0;
    std::string engine;
    bool ok = false;
    std::string error;

    std::size_t length = 0;
    double initial_equity = 0.0;
    double final_equity = 0.0;
    double min_equity = 0.0;
    PerfStats perf{};
    double rate = 0.0;
    double total_cost = 0.0;
    double turnover = 0.0;
    double cost_intensity = 0.0;
    bool first_fully_invested = false;
    std::size_t rejected_orders = 0;

    std::vector<double> equity;  // kept in memory only

    /// E_T / E_1, the basis of total-return divergence.
    double wealth_multiple() const { return final_equity / initial_equity; }
};

struct ResultStore {
    std::vector<std::string> benchmarks;
    std::vector<std::string> engines;        // canonical ids, roster order
    std::size_t n_buckets = 0;
    std::size_t expected_length = 0;
    std::vector<CellResult> cells;           // benchmark-major, then bucket, then engine
    std::string metadata_json;
    std::string run_hash;

    const CellResult& at(std::size_t b, std::size_t bucket, std::size_t e) const;
    CellResult& at(std::size_t b, std::size_t bucket, std::size_t e);
};

/// Every (benchmark, bucket, engine) cell. Failures are recorded, not thrown.
/// The store is identical for any `cfg.jobs`.
ResultStore run_suite(const RunConfig& cfg, const Universe& u, bool keep_equity = false);

std::string results_to_csv(const ResultStore& store);
ResultStore results_from_csv(const std::string& text, const std::string& metadata_json);

struct Finding {
    enum class Kind { LengthMismatch, NonPositiveEquity, MissingCell };
    Kind kind;
    std::string benchmark;
    std::size_t bucket = 0;
    std::string engine;
    std::size_t expected = 0;
    std::size_t got = 0;
    std::string detail;
};

std::string_view finding_name(Finding::Kind k);
std::vector<Finding> validate_results(const ResultStore& store);

inline constexpr const char* kMetricNames[] = {"total_return", "cagr", "ann_vol", "sharpe", "max_drawdown"};
inline constexpr std::size_t kMetricCount = 5;

/// Metric m of a cell, in the units divergences are measured on.
double metric_value(const CellResult& c, std::size_t metric);

struct DivergenceRecord {
    std::string benchmark;
    std::size_t bucket = 0;
    std::size_t engine_a = 0;
    std::size_t engine_b = 0;
    std::size_t metric = 0;
    double divergence_pct = 0.0;  // |relative difference|
    double signed_pct = 0.0;
    bool absolute_fallback = false;
};

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

struct PairTests {
    std::string benchmark;
    std::size_t engine_a = 0;
    std::size_t engine_b = 0;
    stats::TestResult t;
    bool bh_reject = false;
    stats::TestResult wilcoxon;
    stats::TestResult permutation;
    std::vector<stats::TostResult> tost;  // one per margin
    double mean_floor_pct = 0.0;
    double mean_residual_pct = 0.0;
};

struct BenchmarkSummary {
    std::string benchmark;
    double cost_bps = 0.0;
    std::size_t n_records = 0;
    std::size_t failed_cells = 0;
    double mean_tr_div_pct = 0.0;
    double max_tr_div_pct = 0.0;
    double es_range_pp = 0.0;      // mean over buckets
    double es_cv_pct = 0.0;        // mean over stable buckets
    std::size_t es_cv_unstable = 0;
    double iui_lo = 0.0;
    double iui_hi = 0.0;
    double iui_width_pp = 0.0;
    double daf = 0.0;
    std::size_t daf_undefined = 0;
    bool daf_defined = false;
    int csi = 0;
    std::size_t csi_buckets = 0;
    double turnover = 0.0;
    double cost_intensity = 0.0;
    double lag1 = 0.0;
    bool lag1_degenerate = true;
    double dollar_pp = 0.0;        // mean over buckets of max pairwise CAGR gap
};

struct Analysis {
    std::string run_hash;
    std::vector<std::string> engines;
    std::vector<DivergenceRecord> records;
    std::vector<BenchmarkSummary> benchmarks;
    std::vector<PairTests> tests;
    std::size_t bh_family = 0;
    std::vector<std::vector<double>> ccc;  // [metric][pair]
    std::vector<double> ccc_min;           // per metric
    stats::Correlation intensity_pearson;
    stats::Correlation intensity_spearman;
    stats::BootstrapResult intensity_bootstrap;
    std::vector<std::pair<double, double>> dollar_reference;  // (pct, dollars)
    double aum = 0.0;
    std::vector<double> tost_margins;
};

struct AnalysisOptions {
    std::size_t permutation_draws = 10000;
    std::size_t bootstrap_draws = 5000;
    double fdr_q = 0.05;
    double tost_alpha = 0.05;
    std::vector<double> tost_margins_pct{0.10, 0.50};
    double aum = 1e9;
    std::vector<double> dollar_reference_pct{0.10, 3.71};
    std::string daf_reference = "bm01";
    std::uint64_t seed = 42;

    static AnalysisOptions from(const RunConfig& cfg);
};

std::vector<DivergenceRecord> divergence_records(const ResultStore& store);
Analysis analyze(const ResultStore& store, const AnalysisOptions& opt);

struct ReportBundle {
    std::string run_hash;
    std::string metadata_json;
    std::vector<Table> tables;

    const Table& table(std::string_view name) const;
};

/// `extra` tables (bucket QC, universe stats) are appended unchanged.
ReportBundle make_bundle(const Analysis& a, const ResultStore& store, const std::vector<Finding>& findings,
                         std::vector<Table> extra = {});
std::string bundle_to_json(const ReportBundle& b);
ReportBundle bundle_from_json(const std::string& text);

std::string table_to_csv(const Table& t);
Table table_from_csv(const std::string& name, const std::string& text);
std::string table_to_json(const Table& t, const std::string& run_hash);

/// Writes <dir>/<table>.csv and <dir>/<table>.json for every table plus
/// metadata.json. Throws IoError when the directory cannot be written.
void emit_reports(const ReportBundle& b, const std::filesystem::path& dir);

/// `bucket_qc` (per-bucket covariate means and sectors) and
/// `bucket_qc_summary` (score, chi-square, entropy ratio).
std::vector<Table> bucket_qc_tables(const Partition& part, const PriceMatrix& p, const CovariateTable& cov);

Table universe_stats_table(const PriceMatrix& p);

}  // namespace btdiff
