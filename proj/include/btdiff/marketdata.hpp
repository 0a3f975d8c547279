#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace btdiff {

/// Trading days x assets panel of adjusted-close prices. Immutable once
/// built; the constructor enforces every invariant.
class PriceMatrix {
public:
    /// `prices` is row-major: prices[day * n_assets + asset].
    /// `sectors` may be empty (all assets get sector "unknown").
    PriceMatrix(std::vector<std::string> dates,
                std::vector<std::string> assets,
                std::vector<double> prices,
                std::vector<std::string> sectors = {});

    std::size_t n_days() const noexcept { return dates_.size(); }
    std::size_t n_assets() const noexcept { return assets_.size(); }

    const std::vector<std::string>& dates() const noexcept { return dates_; }
    const std::vector<std::string>& assets() const noexcept { return assets_; }
    const std::vector<std::string>& sectors() const noexcept { return sectors_; }

    double at(std::size_t day, std::size_t asset) const noexcept {
        return prices_[day * assets_.size() + asset];
    }

    std::span<const double> row(std::size_t day) const noexcept {
        return {prices_.data() + day * assets_.size(), assets_.size()};
    }

    std::vector<double> column(std::size_t asset) const;

    const std::vector<double>& raw() const noexcept { return prices_; }

    /// Panel restricted to the given asset columns, in the given order.
    PriceMatrix select_assets(std::span<const std::size_t> columns) const;

    friend bool operator==(const PriceMatrix&, const PriceMatrix&) = default;

private:
    std::vector<std::string> dates_;
    std::vector<std::string> assets_;
    std::vector<double> prices_;
    std::vector<std::string> sectors_;
};

/// Parameters for the one-factor geometric Brownian generator.
struct SynthSpec {
    std::size_t n_assets = 36;
    std::size_t n_days = 1761;
    /// One annual drift per sector; assets are assigned to sectors
    /// round-robin, so the sector count is drift_by_sector.size().
    std::vector<double> drift_by_sector{0.08, 0.10, 0.06, 0.12, 0.09, 0.07};
    /// Annual volatility per asset; a single value is broadcast.
    std::vector<double> vol_by_asset{0.30};
    double correlation = 0.35;
    std::uint64_t seed = 20240101;
    double initial_price = 100.0;

    void validate() const;
    double vol(std::size_t asset) const;
};

struct AssetStats {
    std::string asset;
    std::string sector;
    double annual_return_pct = 0.0;
    double annual_vol_pct = 0.0;
    double max_drawdown_pct = 0.0;
};

struct SectorStats {
    std::string sector;
    std::size_t n = 0;
    double mean_vol_pct = 0.0;
    double mean_return_pct = 0.0;
    double mean_max_drawdown_pct = 0.0;
};

struct UniverseStats {
    std::vector<AssetStats> assets;
    std::vector<SectorStats> sectors;
    double mean_return_pct = 0.0;
    double mean_vol_pct = 0.0;
    double mean_max_drawdown_pct = 0.0;
    double mean_pairwise_corr = 0.0;
    double min_pairwise_corr = 0.0;
    double max_pairwise_corr = 0.0;
};

inline constexpr double kTradingDaysPerYear = 252.0;

/// Loads a panel: header `date,<tickers...>`, one row per trading day.
/// `sector_path`, when given, is a two-column ticker,sector CSV.
PriceMatrix load_prices_csv(const std::filesystem::path& path,
                            const std::optional<std::filesystem::path>& sector_path = std::nullopt);

void write_prices_csv(const PriceMatrix& p, const std::filesystem::path& path);
void write_sectors_csv(const PriceMatrix& p, const std::filesystem::path& path);

PriceMatrix generate_synthetic(const SynthSpec& spec);

UniverseStats descriptive_stats(const PriceMatrix& p);

/// Largest peak-to-trough decline of a positive series, as a fraction.
double max_drawdown(std::span<const double> series);

/// Pearson correlation; returns 0 when either side has zero variance.
double correlation(std::span<const double> x, std::span<const double> y);

}  // namespace btdiff
