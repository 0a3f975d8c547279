#include "btdiff/marketdata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "btdiff/csv.hpp"
#include "btdiff/error.hpp"
#include "btdiff/rng.hpp"

namespace btdiff {

namespace {

bool is_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
        if (s[i] < '0' || s[i] > '9') return false;
    }
    const int month = std::stoi(s.substr(5, 2));
    const int day = std::stoi(s.substr(8, 2));
    return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

void check_calendar(const std::vector<std::string>& dates) {
    if (dates.empty()) throw BadCalendar("empty calendar");
    bool all_int = true;
    for (const auto& d : dates) {
        if (!csv::parse_int(d)) {
            all_int = false;
            break;
        }
    }
    if (all_int) {
        for (std::size_t i = 1; i < dates.size(); ++i) {
            if (*csv::parse_int(dates[i]) <= *csv::parse_int(dates[i - 1])) {
                throw BadCalendar("dates not strictly increasing at " + dates[i]);
            }
        }
        return;
    }
    for (const auto& d : dates) {
        if (!is_iso_date(d)) throw BadCalendar("unrecognised date '" + d + "'");
    }
    for (std::size_t i = 1; i < dates.size(); ++i) {
        if (dates[i] <= dates[i - 1]) throw BadCalendar("dates not strictly increasing at " + dates[i]);
    }
}

std::vector<double> simple_returns(std::span<const double> prices) {
    std::vector<double> r;
    r.reserve(prices.size() > 0 ? prices.size() - 1 : 0);
    for (std::size_t t = 1; t < prices.size(); ++t) r.push_back(prices[t] / prices[t - 1] - 1.0);
    return r;
}

double sample_stdev(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

}  // namespace

PriceMatrix::PriceMatrix(std::vector<std::string> dates,
                         std::vector<std::string> assets,
                         std::vector<double> prices,
                         std::vector<std::string> sectors)
    : dates_(std::move(dates)),
      assets_(std::move(assets)),
      prices_(std::move(prices)),
      sectors_(std::move(sectors)) {
    if (assets_.empty()) throw BadSpec("panel has no assets");
    check_calendar(dates_);
    if (prices_.size() != dates_.size() * assets_.size()) {
        throw BadSpec(fmt::format("panel size {} does not match {} days x {} assets", prices_.size(),
                                  dates_.size(), assets_.size()));
    }
    for (std::size_t t = 0; t < dates_.size(); ++t) {
        for (std::size_t j = 0; j < assets_.size(); ++j) {
            const double v = prices_[t * assets_.size() + j];
            if (std::isnan(v)) throw HoleInPanel(assets_[j], dates_[t]);
            if (!std::isfinite(v) || v <= 0.0) {
                throw BadPrice(fmt::format("non-positive or non-finite price {} for {} on {}", v, assets_[j],
                                           dates_[t]));
            }
        }
    }
    if (sectors_.empty()) sectors_.assign(assets_.size(), "unknown");
    if (sectors_.size() != assets_.size()) throw BadSpec("sector list does not match asset list");
}

std::vector<double> PriceMatrix::column(std::size_t asset) const {
    std::vector<double> out(n_days());
    for (std::size_t t = 0; t < n_days(); ++t) out[t] = at(t, asset);
    return out;
}

PriceMatrix PriceMatrix::select_assets(std::span<const std::size_t> columns) const {
    std::vector<std::string> assets;
    std::vector<std::string> sectors;
    for (std::size_t c : columns) {
        assets.push_back(assets_.at(c));
        sectors.push_back(sectors_.at(c));
    }
    std::vector<double> prices;
    prices.reserve(n_days() * columns.size());
    for (std::size_t t = 0; t < n_days(); ++t) {
        for (std::size_t c : columns) prices.push_back(at(t, c));
    }
    return PriceMatrix(dates_, std::move(assets), std::move(prices), std::move(sectors));
}

PriceMatrix load_prices_csv(const std::filesystem::path& path,
                            const std::optional<std::filesystem::path>& sector_path) {
    const auto rows = csv::read_file(path);
    if (rows.empty()) throw BadSpec("empty price file: " + path.string());
    const auto& header = rows.front();
    if (header.size() < 2 || header[0] != "date") {
        throw BadSpec("price header must be 'date' followed by tickers");
    }
    std::vector<std::string> assets(header.begin() + 1, header.end());
    std::vector<std::string> dates;
    std::vector<double> prices;
    prices.reserve((rows.size() - 1) * assets.size());
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.empty() || row[0].empty()) throw BadCalendar(fmt::format("row {} has no date", r + 1));
        dates.push_back(row[0]);
        for (std::size_t j = 0; j < assets.size(); ++j) {
            if (j + 1 >= row.size() || row[j + 1].empty()) throw HoleInPanel(assets[j], row[0]);
            auto v = csv::parse_double(row[j + 1]);
            if (!v) throw BadPrice("unparseable price '" + row[j + 1] + "' for " + assets[j] + " on " + row[0]);
            if (!(*v > 0.0)) throw BadPrice(fmt::format("non-positive price {} for {} on {}", *v, assets[j], row[0]));
            prices.push_back(*v);
        }
        if (row.size() > assets.size() + 1) throw BadSpec(fmt::format("row {} has extra cells", r + 1));
    }

    std::vector<std::string> sectors;
    if (sector_path) {
        std::map<std::string, std::string> by_ticker;
        for (const auto& row : csv::read_file(*sector_path)) {
            if (row.size() != 2) throw BadSpec("sector file rows must be ticker,sector");
            if (row[0] == "ticker" && row[1] == "sector") continue;
            by_ticker[row[0]] = row[1];
        }
        for (const auto& a : assets) {
            auto it = by_ticker.find(a);
            if (it == by_ticker.end()) throw BadSpec("no sector for " + a);
            sectors.push_back(it->second);
        }
    }
    return PriceMatrix(std::move(dates), std::move(assets), std::move(prices), std::move(sectors));
}

void write_prices_csv(const PriceMatrix& p, const std::filesystem::path& path) {
    std::string out = "date";
    for (const auto& a : p.assets()) out += "," + a;
    out += '\n';
    for (std::size_t t = 0; t < p.n_days(); ++t) {
        out += p.dates()[t];
        for (double v : p.row(t)) {
            out += ',';
            out += csv::format_double(v);
        }
        out += '\n';
    }
    csv::write_text(path, out);
}

void write_sectors_csv(const PriceMatrix& p, const std::filesystem::path& path) {
    std::string out = "ticker,sector\n";
    for (std::size_t j = 0; j < p.n_assets(); ++j) out += p.assets()[j] + "," + p.sectors()[j] + "\n";
    csv::write_text(path, out);
}

void SynthSpec::validate() const {
    if (n_assets < 2) throw BadSpec("n_assets must be >= 2");
    if (n_days < 2) throw BadSpec("n_days must be >= 2");
    if (drift_by_sector.empty()) throw BadSpec("need at least one sector drift");
    if (vol_by_asset.size() != 1 && vol_by_asset.size() != n_assets) {
        throw BadSpec("vol_by_asset must have one entry or one per asset");
    }
    for (double v : vol_by_asset) {
        if (!std::isfinite(v) || v < 0.0) throw BadSpec("volatility must be finite and non-negative");
    }
    for (double d : drift_by_sector) {
        if (!std::isfinite(d)) throw BadSpec("drift must be finite");
    }
    if (!(correlation >= 0.0 && correlation < 1.0)) throw BadSpec("correlation must lie in [0, 1)");
    if (!(initial_price > 0.0) || !std::isfinite(initial_price)) throw BadSpec("initial price must be positive");
}

double SynthSpec::vol(std::size_t asset) const {
    return vol_by_asset.size() == 1 ? vol_by_asset[0] : vol_by_asset[asset];
}

PriceMatrix generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    const std::size_t n = spec.n_assets;
    const std::size_t n_sectors = spec.drift_by_sector.size();
    const double dt = 1.0 / kTradingDaysPerYear;
    const double load_common = std::sqrt(spec.correlation);
    const double load_idio = std::sqrt(1.0 - spec.correlation);

    std::vector<std::string> dates(spec.n_days);
    for (std::size_t t = 0; t < spec.n_days; ++t) dates[t] = std::to_string(t);
    std::vector<std::string> assets(n);
    std::vector<std::string> sectors(n);
    for (std::size_t j = 0; j < n; ++j) {
        assets[j] = fmt::format("A{:03}", j);
        sectors[j] = fmt::format("S{:02}", j % n_sectors);
    }

    CounterRng rng(spec.seed);
    std::vector<double> log_price(n, std::log(spec.initial_price));
    std::vector<double> prices(spec.n_days * n);
    for (std::size_t j = 0; j < n; ++j) prices[j] = spec.initial_price;
    for (std::size_t t = 1; t < spec.n_days; ++t) {
        const double common = rng.normal();
        for (std::size_t j = 0; j < n; ++j) {
            const double sigma = spec.vol(j);
            const double mu = spec.drift_by_sector[j % n_sectors];
            const double shock = load_common * common + load_idio * rng.normal();
            log_price[j] += (mu - 0.5 * sigma * sigma) * dt + sigma * std::sqrt(dt) * shock;
            prices[t * n + j] = sigma == 0.0 && mu == 0.0 ? spec.initial_price : std::exp(log_price[j]);
        }
    }
    return PriceMatrix(std::move(dates), std::move(assets), std::move(prices), std::move(sectors));
}

double max_drawdown(std::span<const double> series) {
    double peak = -std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (double v : series) {
        peak = std::max(peak, v);
        worst = std::max(worst, 1.0 - v / peak);
    }
    return worst;
}

double correlation(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = std::min(x.size(), y.size());
    if (n < 2) return 0.0;
    const double mx = std::accumulate(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

UniverseStats descriptive_stats(const PriceMatrix& p) {
    if (p.n_days() < 2) throw BadSpec("descriptive statistics need at least two dates");
    const std::size_t n = p.n_assets();
    const double years_factor = kTradingDaysPerYear / static_cast<double>(p.n_days() - 1);

    UniverseStats out;
    std::vector<std::vector<double>> returns(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto col = p.column(j);
        returns[j] = simple_returns(col);
        AssetStats a;
        a.asset = p.assets()[j];
        a.sector = p.sectors()[j];
        a.annual_return_pct = (std::pow(col.back() / col.front(), years_factor) - 1.0) * 100.0;
        a.annual_vol_pct = sample_stdev(returns[j]) * std::sqrt(kTradingDaysPerYear) * 100.0;
        a.max_drawdown_pct = max_drawdown(col) * 100.0;
        out.assets.push_back(a);
    }

    double corr_sum = 0.0;
    std::size_t corr_n = 0;
    out.min_pairwise_corr = 1.0;
    out.max_pairwise_corr = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double c = correlation(returns[i], returns[j]);
            corr_sum += c;
            ++corr_n;
            out.min_pairwise_corr = std::min(out.min_pairwise_corr, c);
            out.max_pairwise_corr = std::max(out.max_pairwise_corr, c);
        }
    }
    out.mean_pairwise_corr = corr_n ? corr_sum / static_cast<double>(corr_n) : 0.0;

    std::map<std::string, SectorStats> by_sector;
    for (const auto& a : out.assets) {
        auto& s = by_sector[a.sector];
        s.sector = a.sector;
        ++s.n;
        s.mean_vol_pct += a.annual_vol_pct;
        s.mean_return_pct += a.annual_return_pct;
        s.mean_max_drawdown_pct += a.max_drawdown_pct;
        out.mean_return_pct += a.annual_return_pct;
        out.mean_vol_pct += a.annual_vol_pct;
        out.mean_max_drawdown_pct += a.max_drawdown_pct;
    }
    for (auto& [name, s] : by_sector) {
        const double k = static_cast<double>(s.n);
        s.mean_vol_pct /= k;
        s.mean_return_pct /= k;
        s.mean_max_drawdown_pct /= k;
        out.sectors.push_back(s);
    }
    out.mean_return_pct /= static_cast<double>(n);
    out.mean_vol_pct /= static_cast<double>(n);
    out.mean_max_drawdown_pct /= static_cast<double>(n);
    return out;
}

}  // namespace btdiff
