#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "btdiff/csv.hpp"
#include "btdiff/error.hpp"
#include "btdiff/harness.hpp"
#include "btdiff/riskmetrics.hpp"

namespace btdiff {

using ojson = nlohmann::ordered_json;

namespace {

std::string num(double x) { return csv::format_double(x); }
std::string flag(bool b) { return b ? "1" : "0"; }
std::string count(std::size_t n) { return std::to_string(n); }

std::string dollars(double x) { return fmt::format("{:.2f}", x); }

}  // namespace

const Table& ReportBundle::table(std::string_view name) const {
    for (const auto& t : tables) {
        if (t.name == name) return t;
    }
    throw BadSpec("bundle has no table '" + std::string(name) + "'");
}

ReportBundle make_bundle(const Analysis& a, const ResultStore& store, const std::vector<Finding>& findings,
                         std::vector<Table> extra) {
    ReportBundle out;
    out.run_hash = a.run_hash;
    out.metadata_json = store.metadata_json;
    const auto& eng = a.engines;

    Table t2{"table2",
             {"benchmark", "name", "category", "cost_bps", "mean_tr_divergence_pct", "max_tr_divergence_pct",
              "n_records", "failed_cells"},
             {}};
    Table metrics{"metrics",
                  {"benchmark", "es_range_pp", "es_cv_pct", "es_cv_unstable", "iui_lo_pct", "iui_hi_pct",
                   "iui_width_pp", "daf", "daf_undefined_buckets", "csi", "csi_buckets"},
                  {}};
    Table intensity{"cost_intensity", {"benchmark", "cost_bps", "turnover", "cost_intensity", "es_range_pp"}, {}};
    Table autocorr{"autocorrelation", {"benchmark", "lag1", "degenerate"}, {}};
    Table dollar{"dollar_ambiguity", {"label", "divergence_pp", "aum", "dollars_per_year"}, {}};
    for (const auto& s : a.benchmarks) {
        const auto& spec = find_benchmark(s.benchmark);
        t2.rows.push_back({s.benchmark, spec.name, std::string(category_name(spec.category)), num(s.cost_bps),
                           num(s.mean_tr_div_pct), num(s.max_tr_div_pct), count(s.n_records), count(s.failed_cells)});
        metrics.rows.push_back({s.benchmark, num(s.es_range_pp), num(s.es_cv_pct), count(s.es_cv_unstable),
                                num(s.iui_lo), num(s.iui_hi), num(s.iui_width_pp),
                                s.daf_defined ? num(s.daf) : "undefined", count(s.daf_undefined),
                                std::to_string(s.csi), count(s.csi_buckets)});
        intensity.rows.push_back(
            {s.benchmark, num(s.cost_bps), num(s.turnover), num(s.cost_intensity), num(s.es_range_pp)});
        autocorr.rows.push_back({s.benchmark, num(s.lag1), flag(s.lag1_degenerate)});
    }
    for (const auto& s : a.benchmarks) {
        dollar.rows.push_back({s.benchmark, num(s.dollar_pp), dollars(a.aum), dollars(dollar_ambiguity(s.dollar_pp, a.aum))});
    }
    for (const auto& [pct, usd] : a.dollar_reference) {
        dollar.rows.push_back({"reference", num(pct), dollars(a.aum), dollars(usd)});
    }

    Table div{"divergence",
              {"benchmark", "bucket", "engine_a", "engine_b", "metric", "divergence_pct", "signed_pct",
               "absolute_fallback"},
              {}};
    for (const auto& r : a.records) {
        div.rows.push_back({r.benchmark, count(r.bucket), eng[r.engine_a], eng[r.engine_b], kMetricNames[r.metric],
                            num(r.divergence_pct), num(r.signed_pct), flag(r.absolute_fallback)});
    }

    // Per-pair heatmap of total-return divergence.
    Table heat{"pair_heatmap", {"benchmark", "engine_a", "engine_b", "mean_tr_divergence_pct", "max_tr_divergence_pct", "n"},
               {}};
    {
        std::map<std::tuple<std::string, std::size_t, std::size_t>, std::tuple<double, double, std::size_t>> acc;
        std::vector<std::tuple<std::string, std::size_t, std::size_t>> order;
        for (const auto& r : a.records) {
            if (r.metric != 0) continue;
            const auto key = std::make_tuple(r.benchmark, r.engine_a, r.engine_b);
            auto [it, fresh] = acc.try_emplace(key, 0.0, 0.0, 0);
            if (fresh) order.push_back(key);
            auto& [sum, mx, n] = it->second;
            sum += r.divergence_pct;
            mx = std::max(mx, r.divergence_pct);
            ++n;
        }
        for (const auto& key : order) {
            const auto& [sum, mx, n] = acc.at(key);
            heat.rows.push_back({std::get<0>(key), eng[std::get<1>(key)], eng[std::get<2>(key)],
                                 num(sum / static_cast<double>(n)), num(mx), count(n)});
        }
    }

    Table tests{"tests",
                {"benchmark", "engine_a", "engine_b", "test", "statistic", "p_value", "n", "bh_reject", "degenerate"},
                {}};
    Table tost{"tost",
               {"benchmark", "engine_a", "engine_b", "margin_pct", "equivalent", "p_value", "p_lower", "p_upper",
                "ci90_lo", "ci90_hi", "ci_equivalent", "degenerate"},
               {}};
    Table floor{"floor", {"benchmark", "engine_a", "engine_b", "mean_floor_pct", "mean_residual_pct"}, {}};
    for (const auto& pt : a.tests) {
        const auto& ea = eng[pt.engine_a];
        const auto& eb = eng[pt.engine_b];
        tests.rows.push_back({pt.benchmark, ea, eb, "t", num(pt.t.statistic), num(pt.t.p_value), count(pt.t.n),
                              flag(pt.bh_reject), flag(pt.t.degenerate)});
        tests.rows.push_back({pt.benchmark, ea, eb, "wilcoxon", num(pt.wilcoxon.statistic),
                              num(pt.wilcoxon.p_value), count(pt.wilcoxon.n), "", flag(pt.wilcoxon.degenerate)});
        tests.rows.push_back({pt.benchmark, ea, eb, "permutation", num(pt.permutation.statistic),
                              num(pt.permutation.p_value), count(pt.permutation.n), "",
                              flag(pt.permutation.degenerate)});
        for (std::size_t m = 0; m < pt.tost.size(); ++m) {
            const auto& r = pt.tost[m];
            const double margin = m < a.tost_margins.size() ? a.tost_margins[m] : std::nan("");
            tost.rows.push_back({pt.benchmark, ea, eb, num(margin), flag(r.equivalent), num(r.p_value),
                                 num(r.p_lower), num(r.p_upper), num(r.ci_lo), num(r.ci_hi), flag(r.ci_equivalent),
                                 flag(r.degenerate)});
        }
        floor.rows.push_back({pt.benchmark, ea, eb, num(pt.mean_floor_pct), num(pt.mean_residual_pct)});
    }

    Table ccc{"ccc", {"metric", "engine_a", "engine_b", "ccc"}, {}};
    Table ccc_min{"ccc_min", {"metric", "min_ccc"}, {}};
    for (std::size_t m = 0; m < a.ccc.size(); ++m) {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < eng.size(); ++i) {
            for (std::size_t j = i + 1; j < eng.size(); ++j, ++idx) {
                ccc.rows.push_back({kMetricNames[m], eng[i], eng[j], num(a.ccc[m][idx])});
            }
        }
        ccc_min.rows.push_back({kMetricNames[m], num(a.ccc_min[m])});
    }

    Table corr{"intensity_correlation", {"statistic", "value", "p_value", "n", "ci95_lo", "ci95_hi"}, {}};
    corr.rows.push_back({"pearson", num(a.intensity_pearson.r), num(a.intensity_pearson.p_value),
                         count(a.intensity_pearson.n), "", ""});
    corr.rows.push_back({"spearman", num(a.intensity_spearman.r), num(a.intensity_spearman.p_value),
                         count(a.intensity_spearman.n), num(a.intensity_bootstrap.lo),
                         num(a.intensity_bootstrap.hi)});

    Table summary{"summary", {"key", "value"}, {}};
    summary.rows.push_back({"run_hash", a.run_hash});
    summary.rows.push_back({"engines", count(eng.size())});
    summary.rows.push_back({"benchmarks", count(a.benchmarks.size())});
    summary.rows.push_back({"buckets", count(store.n_buckets)});
    summary.rows.push_back({"cells", count(store.cells.size())});
    summary.rows.push_back({"divergence_records", count(a.records.size())});
    summary.rows.push_back({"bh_family_size", count(a.bh_family)});
    summary.rows.push_back({"bootstrap_failed_draws", count(a.intensity_bootstrap.failed_draws)});
    summary.rows.push_back({"validation_findings", count(findings.size())});

    Table validation{"validation", {"finding", "benchmark", "bucket", "engine", "expected", "got", "detail"}, {}};
    for (const auto& f : findings) {
        std::string detail = f.detail;
        std::replace(detail.begin(), detail.end(), ',', ';');
        validation.rows.push_back({std::string(finding_name(f.kind)), f.benchmark, count(f.bucket), f.engine,
                                   count(f.expected), count(f.got), detail});
    }

    out.tables = {std::move(summary), std::move(t2),    std::move(metrics), std::move(div),     std::move(heat),
                  std::move(tests),   std::move(tost),  std::move(floor),   std::move(ccc),     std::move(ccc_min),
                  std::move(intensity), std::move(corr), std::move(autocorr), std::move(dollar), std::move(validation)};
    for (auto& t : extra) out.tables.push_back(std::move(t));
    return out;
}

std::string bundle_to_json(const ReportBundle& b) {
    ojson j;
    j["run_hash"] = b.run_hash;
    j["metadata"] = b.metadata_json.empty() ? ojson::object() : ojson::parse(b.metadata_json);
    auto tables = ojson::array();
    for (const auto& t : b.tables) tables.push_back({{"name", t.name}, {"columns", t.columns}, {"rows", t.rows}});
    j["tables"] = tables;
    return j.dump(1) + "\n";
}

ReportBundle bundle_from_json(const std::string& text) {
    ReportBundle b;
    try {
        const auto j = ojson::parse(text);
        b.run_hash = j.at("run_hash").get<std::string>();
        b.metadata_json = j.at("metadata").dump(2) + "\n";
        for (const auto& t : j.at("tables")) {
            b.tables.push_back({t.at("name").get<std::string>(), t.at("columns").get<std::vector<std::string>>(),
                                t.at("rows").get<std::vector<std::vector<std::string>>>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw BadSpec(std::string("report bundle is malformed: ") + e.what());
    }
    return b;
}

std::string table_to_csv(const Table& t) {
    std::string out = csv::join(t.columns) + "\n";
    for (const auto& r : t.rows) out += csv::join(r) + "\n";
    return out;
}

Table table_from_csv(const std::string& name, const std::string& text) {
    Table t;
    t.name = name;
    auto rows = csv::parse(text);
    if (rows.empty()) throw BadSpec("table " + name + " has no header");
    t.columns = std::move(rows.front());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        rows[i].resize(t.columns.size());
        t.rows.push_back(std::move(rows[i]));
    }
    return t;
}

std::string table_to_json(const Table& t, const std::string& run_hash) {
    ojson j;
    j["run_hash"] = run_hash;
    j["table"] = t.name;
    j["columns"] = t.columns;
    j["rows"] = t.rows;
    return j.dump(1) + "\n";
}

void emit_reports(const ReportBundle& b, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());
    csv::write_text(dir / "metadata.json", b.metadata_json);
    for (const auto& t : b.tables) {
        csv::write_text(dir / (t.name + ".csv"), table_to_csv(t));
        csv::write_text(dir / (t.name + ".json"), table_to_json(t, b.run_hash));
    }
}

std::vector<Table> bucket_qc_tables(const Partition& part, const PriceMatrix& p, const CovariateTable& cov) {
    Table per{"bucket_qc", {"bucket", "tickers", "sectors", "mean_ann_vol", "mean_corr", "mean_log_return"}, {}};
    for (std::size_t k = 0; k < part.buckets.size(); ++k) {
        std::string tickers, sectors;
        CovariateRow m{};
        for (std::size_t a : part.buckets[k]) {
            if (!tickers.empty()) {
                tickers += ' ';
                sectors += ' ';
            }
            tickers += p.assets()[a];
            sectors += p.sectors()[a];
            for (std::size_t c = 0; c < kCovariates; ++c) m[c] += cov.rows[a][c];
        }
        const double n = static_cast<double>(part.buckets[k].size());
        per.rows.push_back({count(k), tickers, sectors, num(m[0] / n), num(m[1] / n), num(m[2] / n)});
    }
    const auto sb = sector_balance(part, p.sectors());
    Table summary{"bucket_qc_summary", {"key", "value"}, {}};
    summary.rows = {{"n_buckets", count(part.buckets.size())},
                    {"bucket_size", count(part.buckets.empty() ? 0 : part.buckets.front().size())},
                    {"seed", std::to_string(part.seed)},
                    {"n_candidates", count(part.n_candidates)},
                    {"selected_candidate", count(part.selected_candidate)},
                    {"mahalanobis_score", num(part.score)},
                    {"singular_covariance", flag(part.singular_covariance)},
                    {"chi2", num(sb.chi2)},
                    {"chi2_df", count(sb.df)},
                    {"chi2_p_value", num(sb.p_value)},
                    {"entropy_ratio", num(sb.entropy_ratio)}};
    return {std::move(per), std::move(summary)};
}

Table universe_stats_table(const PriceMatrix& p) {
    const auto u = descriptive_stats(p);
    Table t{"universe_stats", {"asset", "sector", "annual_return_pct", "annual_vol_pct", "max_drawdown_pct"}, {}};
    for (const auto& a : u.assets) {
        t.rows.push_back({a.asset, a.sector, num(a.annual_return_pct), num(a.annual_vol_pct), num(a.max_drawdown_pct)});
    }
    t.rows.push_back({"mean", "", num(u.mean_return_pct), num(u.mean_vol_pct), num(u.mean_max_drawdown_pct)});
    return t;
}

}  // namespace btdiff
