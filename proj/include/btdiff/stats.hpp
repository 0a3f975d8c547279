#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace btdiff::stats {

/// p-values are clamped to (0, 1]. A degenerate result carries p = NaN.
struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::string method;
    std::size_t n = 0;
    bool degenerate = false;
};

/// Two-sided one-sample t-test of mean zero.
TestResult one_sample_t(std::span<const double> x);

/// Benjamini-Hochberg step-up. NaN p-values are never rejected but count in m.
std::vector<bool> bh_fdr(std::span<const double> p_values, double q);

/// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(std::span<const double> x);

/// Zeros dropped; exact null distribution for n <= 20, otherwise the normal
/// approximation with tie and continuity corrections. statistic = W+.
TestResult wilcoxon_signed_rank(std::span<const double> x);

inline constexpr std::size_t kWilcoxonExactMax = 20;

/// statistic = |mean|; p = (hits + 1) / (draws + 1).
TestResult sign_flip_permutation(std::span<const double> x, std::size_t draws, std::uint64_t seed);

/// All 2^n sign vectors; p = hits / 2^n. n <= 24.
TestResult sign_flip_exhaustive(std::span<const double> x);

struct TostResult {
    bool equivalent = false;
    double p_value = 1.0;  // max of the one-sided p's
    double p_lower = 1.0;
    double p_upper = 1.0;
    double ci_lo = 0.0;    // (1 - 2 alpha) interval for the mean
    double ci_hi = 0.0;
    bool ci_equivalent = false;
    bool degenerate = false;
};

TostResult tost(std::span<const double> x, double margin, double alpha = 0.05);

/// Lin's concordance with population moments.
double lin_ccc(std::span<const double> x, std::span<const double> y);

struct Correlation {
    double r = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
    bool degenerate = false;
};

Correlation pearson(std::span<const double> x, std::span<const double> y);
Correlation spearman(std::span<const double> x, std::span<const double> y);

/// Lag-1 Pearson autocorrelation; degenerate when either half is constant.
Correlation lag1_autocorr(std::span<const double> x);

struct BootstrapResult {
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t draws = 0;
    std::size_t failed_draws = 0;  // statistic not finite
};

/// Statistic evaluated on a multiset of cluster indices.
using ClusterStatistic = std::function<double(std::span<const std::size_t>)>;

/// Percentile 95% CI from resampling clusters with replacement. Throws
/// NotEnoughClusters below 2 clusters. Draw d uses substream (seed, d).
BootstrapResult cluster_bootstrap(std::size_t n_clusters, const ClusterStatistic& statistic, std::size_t draws,
                                  std::uint64_t seed);

}  // namespace btdiff::stats
