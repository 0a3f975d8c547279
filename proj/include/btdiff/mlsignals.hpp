#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "btdiff/engine.hpp"
#include "btdiff/marketdata.hpp"

namespace btdiff {

inline constexpr std::size_t kFeatureCount = 5;
inline constexpr std::size_t kFeatureHistory = 126;

struct FeatureRow {
    double r21 = 0.0;
    double r63 = 0.0;
    double r126 = 0.0;
    double vol20 = 0.0;
    double vol60 = 0.0;

    std::array<double, kFeatureCount> values() const { return {r21, r63, r126, vol20, vol60}; }
};

/// Features of every asset at day t from prices up to and including t.
/// Throws NotEnoughHistory when t < 126.
std::vector<FeatureRow> build_features(const PriceMatrix& p, DayIndex t);

struct WalkForwardConfig {
    std::size_t train_window = 126;
    std::size_t gap = 21;
    std::size_t horizon = 21;
    std::size_t top = 2;

    void validate() const;
    /// First rebalance day the protocol can serve.
    DayIndex earliest_day() const { return kFeatureHistory + gap + train_window; }
};

struct ElasticNetConfig {
    double lambda = 1e-3;
    double alpha = 0.5;
    std::size_t max_iter = 10000;
    double tol = 1e-10;

    void validate() const;
};

/// Dense row-major design matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct ElasticNetFit {
    std::vector<double> coef;  // original feature scale
    double intercept = 0.0;
    bool converged = false;
    std::size_t iterations = 0;

    double predict(std::span<const double> x) const;
};

/// Cyclic coordinate descent on
///   (1/2n)||y - b0 - Xb||^2 + lambda (alpha ||b||_1 + (1-alpha)/2 ||b||^2)
/// over internally standardised columns (population sd); intercept free.
/// Zero-variance columns get coefficient 0. Never throws on
/// non-convergence: the last iterate is returned with converged = false.
ElasticNetFit fit_elastic_net(const Matrix& x, std::span<const double> y, const ElasticNetConfig& cfg);

class Learner {
public:
    virtual ~Learner() = default;
    virtual std::string name() const = 0;
    virtual void fit(const Matrix& x, std::span<const double> y) = 0;
    virtual double predict(std::span<const double> x) const = 0;
};

class ElasticNetLearner final : public Learner {
public:
    explicit ElasticNetLearner(ElasticNetConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    std::string name() const override { return "enet"; }
    void fit(const Matrix& x, std::span<const double> y) override { fit_ = fit_elastic_net(x, y, cfg_); }
    double predict(std::span<const double> x) const override { return fit_.predict(x); }

    const ElasticNetFit& last_fit() const noexcept { return fit_; }

private:
    ElasticNetConfig cfg_;
    ElasticNetFit fit_;
};

/// Placeholder for learners that are not built (gbr, rf, mlp).
class UnavailableLearner final : public Learner {
public:
    explicit UnavailableLearner(std::string tag) : tag_(std::move(tag)) {}

    std::string name() const override { return tag_; }
    void fit(const Matrix&, std::span<const double>) override;
    double predict(std::span<const double>) const override;

private:
    std::string tag_;
};

std::unique_ptr<Learner> make_learner(std::string_view tag, const ElasticNetConfig& enet);

struct Ranking {
    DayIndex day = 0;
    std::vector<double> predicted;     // per asset
    std::vector<std::size_t> order;    // asset indices, best first
    bool degenerate_target = false;
    bool converged = true;
    std::size_t max_target_day = 0;    // last price day any training target used
};

/// Pooled walk-forward: at each rebalance day t, fit on (features at s,
/// forward return over (s, s+horizon]) for s in [t-gap-train_window, t-gap-1]
/// across all assets, then rank assets by the prediction from features at t-1.
std::vector<Ranking> walk_forward_signal(const PriceMatrix& p, std::span<const DayIndex> rebalance_days,
                                         const WalkForwardConfig& wf, Learner& learner);

WeightSchedule ranking_schedule(std::span<const Ranking> rankings, std::size_t n_assets, DayIndex start,
                                std::size_t top);

std::string rankings_to_csv(std::span<const Ranking> rankings, const PriceMatrix& p);

}  // namespace btdiff
