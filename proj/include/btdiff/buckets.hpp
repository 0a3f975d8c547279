#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "btdiff/marketdata.hpp"

namespace btdiff {

inline constexpr std::size_t kCovariates = 3;
using CovariateRow = std::array<double, kCovariates>;

/// Per-asset balance covariates: annualised volatility of daily log returns,
/// mean pairwise correlation of daily log returns, and ln(p_T / p_1).
struct CovariateTable {
    std::vector<std::string> assets;
    std::vector<CovariateRow> rows;

    std::size_t size() const noexcept { return rows.size(); }
};

struct Partition {
    std::vector<std::vector<std::size_t>> buckets;  // asset indices
    double score = 0.0;
    bool singular_covariance = false;
    std::uint64_t seed = 0;
    std::size_t n_candidates = 0;
    std::size_t selected_candidate = 0;
};

struct BucketConfig {
    std::size_t n_buckets = 30;
    std::size_t bucket_size = 6;
    std::size_t n_candidates = 20000;
    std::uint64_t seed = 7;
    bool sector_constraint = true;
    std::size_t jobs = 1;
};

struct BalanceScore {
    double score = 0.0;
    bool singular = false;
};

struct SectorBalance {
    double chi2 = 0.0;
    double p_value = 1.0;
    double entropy_ratio = 1.0;
    std::size_t df = 0;
};

CovariateTable compute_covariates(const PriceMatrix& p);

/// Sum over buckets of (m_b - m)' (S / bucket_size)^-1 (m_b - m), with S the
/// sample covariance of the covariates over the whole table and m their
/// mean. Falls back to a pseudo-inverse (flagged) when S is singular.
BalanceScore mahalanobis_score(const Partition& part, const CovariateTable& cov);

/// Same quadratic form with a caller-supplied precision matrix (row-major).
double balance_quadratic_form(std::span<const CovariateRow> bucket_means,
                              const CovariateRow& center,
                              const std::array<double, kCovariates * kCovariates>& precision);

/// Draws candidate `index` of the stream keyed by `seed`: shuffle, then fill
/// buckets greedily under the sector constraint, restarting on dead ends.
/// Throws InfeasibleConstraint after 100 restarts.
std::vector<std::vector<std::size_t>> sample_candidate(std::span<const std::string> sectors,
                                                       const BucketConfig& cfg,
                                                       std::size_t index);

Partition rerandomize(const CovariateTable& cov, std::span<const std::string> sectors, const BucketConfig& cfg);

SectorBalance sector_balance(const Partition& part, std::span<const std::string> sectors);

/// Checks disjointness, bucket sizes and (optionally) sector distinctness.
bool partition_is_valid(const Partition& part, std::span<const std::string> sectors, std::size_t bucket_size,
                        bool sector_constraint);

std::string partition_to_json(const Partition& part, std::span<const std::string> tickers);
Partition partition_from_json(const std::string& text, std::span<const std::string> tickers);

}  // namespace btdiff
