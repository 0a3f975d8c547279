#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "btdiff/csv.hpp"
#include "btdiff/error.hpp"
#include "btdiff/harness.hpp"

namespace fs = std::filesystem;
using namespace btdiff;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kFindings = 2;

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> jobs;
    std::string engines;
    std::string benchmarks;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

RunConfig resolve(const Overrides& o) {
    RunConfig cfg = o.config.empty() ? RunConfig::defaults() : RunConfig::load(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (o.jobs) cfg.jobs = std::max<std::size_t>(1, *o.jobs);
    if (!o.engines.empty()) {
        cfg.engines.clear();
        for (const auto& id : split_list(o.engines)) cfg.engines.push_back(EngineConvention::parse(id));
    }
    if (!o.benchmarks.empty()) cfg.benchmarks = split_list(o.benchmarks);
    cfg.validate();
    return cfg;
}

void write(const fs::path& path, const std::string& text) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
    csv::write_text(path, text);
}

void stage_data(const RunConfig& cfg, const PriceMatrix& p) {
    const fs::path dir = cfg.out_dir / "data";
    fs::create_directories(dir);
    write_prices_csv(p, dir / "prices.csv");
    write_sectors_csv(p, dir / "sectors.csv");
    write(dir / "universe_stats.csv", table_to_csv(universe_stats_table(p)));
    fmt::print("data: {} assets x {} days -> {}\n", p.n_assets(), p.n_days(), dir.string());
}

Universe stage_buckets(const RunConfig& cfg, PriceMatrix p) {
    Universe u{std::move(p), {}, {}};
    u.partition = build_partition(cfg, u.prices, &u.covariates);
    const fs::path dir = cfg.out_dir / "buckets";
    write(dir / "partition.json", partition_to_json(u.partition, u.prices.assets()));
    for (const auto& t : bucket_qc_tables(u.partition, u.prices, u.covariates)) {
        write(dir / (t.name + ".csv"), table_to_csv(t));
    }
    fmt::print("buckets: {} x {} (candidate {} of {}, score {})\n", u.partition.buckets.size(),
               cfg.buckets.bucket_size, u.partition.selected_candidate, u.partition.n_candidates,
               csv::format_double(u.partition.score));
    return u;
}

ResultStore stage_run(const RunConfig& cfg, const Universe& u, std::vector<Finding>& findings) {
    ResultStore store = run_suite(cfg, u);
    const fs::path dir = cfg.out_dir / "results";
    write(dir / "results.csv", results_to_csv(store));
    write(dir / "metadata.json", store.metadata_json);
    findings = validate_results(store);
    std::string v = "finding,benchmark,bucket,engine,expected,got\n";
    for (const auto& f : findings) {
        v += fmt::format("{},{},{},{},{},{}\n", finding_name(f.kind), f.benchmark, f.bucket, f.engine, f.expected,
                         f.got);
    }
    write(dir / "validation.csv", v);
    fmt::print("run: {} cells, {} validation findings, hash {}\n", store.cells.size(), findings.size(),
               store.run_hash);
    return store;
}

ResultStore load_store(const RunConfig& cfg) {
    const fs::path dir = cfg.out_dir / "results";
    return results_from_csv(csv::read_text(dir / "results.csv"), csv::read_text(dir / "metadata.json"));
}

ReportBundle stage_analyze(const RunConfig& cfg, const ResultStore& store, const std::vector<Finding>& findings,
                           std::vector<Table> extra) {
    const Analysis a = analyze(store, AnalysisOptions::from(cfg));
    ReportBundle b = make_bundle(a, store, findings, std::move(extra));
    write(cfg.out_dir / "analysis" / "bundle.json", bundle_to_json(b));
    fmt::print("analyze: {} divergence records, BH family {}\n", a.records.size(), a.bh_family);
    return b;
}

void stage_report(const RunConfig& cfg, const ReportBundle& b) {
    emit_reports(b, cfg.out_dir / "reports");
    fmt::print("report: {} tables -> {}\n", b.tables.size(), (cfg.out_dir / "reports").string());
}

std::vector<Table> qc_tables_from_disk(const RunConfig& cfg) {
    std::vector<Table> out;
    const std::pair<const char*, const char*> sources[] = {
        {"buckets", "bucket_qc"}, {"buckets", "bucket_qc_summary"}, {"data", "universe_stats"}};
    for (const auto& [stage, name] : sources) {
        const fs::path path = cfg.out_dir / stage / (std::string(name) + ".csv");
        if (fs::exists(path)) out.push_back(table_from_csv(name, csv::read_text(path)));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-engine backtest divergence harness"};
    app.require_subcommand(1);
    Overrides o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "master seed");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--jobs", o.jobs, "worker threads");
        sub->add_option("--engines", o.engines, "comma-separated convention ids");
        sub->add_option("--benchmarks", o.benchmarks, "comma-separated benchmark ids");
    };
    auto* gen = app.add_subcommand("gen-data", "write the price panel and sector map");
    auto* buckets = app.add_subcommand("buckets", "rerandomised bucket assignment and QC");
    auto* run = app.add_subcommand("run", "simulate every benchmark x bucket x engine cell");
    auto* an = app.add_subcommand("analyze", "divergence, metrics and tests from saved results");
    auto* rep = app.add_subcommand("report", "write CSV/JSON tables from the analysis bundle");
    auto* all = app.add_subcommand("all", "every stage in order");
    for (auto* sub : {gen, buckets, run, an, rep, all}) add_common(sub);

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig cfg = resolve(o);
        std::vector<Finding> findings;
        if (gen->parsed()) {
            stage_data(cfg, load_or_generate_prices(cfg));
        } else if (buckets->parsed()) {
            stage_buckets(cfg, load_or_generate_prices(cfg));
        } else if (run->parsed()) {
            const Universe u = stage_buckets(cfg, load_or_generate_prices(cfg));
            stage_run(cfg, u, findings);
        } else if (an->parsed()) {
            const ResultStore store = load_store(cfg);
            findings = validate_results(store);
            stage_analyze(cfg, store, findings, qc_tables_from_disk(cfg));
        } else if (rep->parsed()) {
            const ReportBundle b = bundle_from_json(csv::read_text(cfg.out_dir / "analysis" / "bundle.json"));
            stage_report(cfg, b);
            if (!b.table("validation").rows.empty()) return kFindings;
        } else if (all->parsed()) {
            const PriceMatrix p = load_or_generate_prices(cfg);
            stage_data(cfg, p);
            const Universe u = stage_buckets(cfg, p);
            const ResultStore store = stage_run(cfg, u, findings);
            auto extra = bucket_qc_tables(u.partition, u.prices, u.covariates);
            extra.push_back(universe_stats_table(u.prices));
            stage_report(cfg, stage_analyze(cfg, store, findings, std::move(extra)));
        }
        return findings.empty() ? kOk : kFindings;
    } catch (const std::exception& e) {
        std::cerr << "btdiff: " << e.what() << "\n";
        return kError;
    }
}
