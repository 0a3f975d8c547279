#include "btdiff/mlsignals.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "btdiff/csv.hpp"
#include "btdiff/error.hpp"

namespace btdiff {

namespace {

double trailing_return(const PriceMatrix& p, DayIndex t, std::size_t k, std::size_t asset) {
    return p.at(t, asset) / p.at(t - k, asset) - 1.0;
}

double trailing_vol(const PriceMatrix& p, DayIndex t, std::size_t k, std::size_t asset) {
    double mean = 0.0;
    for (DayIndex u = t - k + 1; u <= t; ++u) mean += p.at(u, asset) / p.at(u - 1, asset) - 1.0;
    mean /= static_cast<double>(k);
    double ss = 0.0;
    for (DayIndex u = t - k + 1; u <= t; ++u) {
        const double r = p.at(u, asset) / p.at(u - 1, asset) - 1.0;
        ss += (r - mean) * (r - mean);
    }
    return std::sqrt(ss / static_cast<double>(k - 1));
}

double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

}  // namespace

std::vector<FeatureRow> build_features(const PriceMatrix& p, DayIndex t) {
    if (t < kFeatureHistory || t >= p.n_days()) {
        throw NotEnoughHistory(fmt::format("features at day {} need {} prior days", t, kFeatureHistory));
    }
    std::vector<FeatureRow> out(p.n_assets());
    for (std::size_t j = 0; j < p.n_assets(); ++j) {
        out[j].r21 = trailing_return(p, t, 21, j);
        out[j].r63 = trailing_return(p, t, 63, j);
        out[j].r126 = trailing_return(p, t, 126, j);
        out[j].vol20 = trailing_vol(p, t, 20, j);
        out[j].vol60 = trailing_vol(p, t, 60, j);
    }
    return out;
}

void WalkForwardConfig::validate() const {
    if (train_window == 0 || gap == 0 || horizon == 0 || top == 0) {
        throw BadSpec("walk-forward windows and top must be positive");
    }
    if (horizon > gap) throw BadSpec("forward horizon longer than the gap would leak future prices");
}

void ElasticNetConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw BadSpec("lambda must be >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw BadSpec("alpha must lie in [0, 1]");
    if (max_iter == 0) throw BadSpec("max_iter must be positive");
    if (!(tol > 0.0)) throw BadSpec("tol must be positive");
}

double ElasticNetFit::predict(std::span<const double> x) const {
    double v = intercept;
    for (std::size_t j = 0; j < coef.size(); ++j) v += coef[j] * x[j];
    return v;
}

ElasticNetFit fit_elastic_net(const Matrix& x, std::span<const double> y, const ElasticNetConfig& cfg) {
    cfg.validate();
    const std::size_t n = x.rows();
    const std::size_t k = x.cols();
    if (n < 1) throw BadSpec("elastic net needs at least one row");
    if (y.size() != n) throw BadSpec("target length does not match design rows");
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<double> mu(k, 0.0), sd(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < n; ++i) mu[j] += x(i, j);
        mu[j] *= inv_n;
        for (std::size_t i = 0; i < n; ++i) sd[j] += (x(i, j) - mu[j]) * (x(i, j) - mu[j]);
        sd[j] = std::sqrt(sd[j] * inv_n);
    }
    const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) * inv_n;

    Matrix z(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) z(i, j) = sd[j] > 0.0 ? (x(i, j) - mu[j]) / sd[j] : 0.0;
    }
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - y_mean;

    std::vector<double> b(k, 0.0);
    const double l1 = cfg.lambda * cfg.alpha;
    const double shrink = 1.0 + cfg.lambda * (1.0 - cfg.alpha);

    ElasticNetFit fit;
    for (std::size_t iter = 1; iter <= cfg.max_iter; ++iter) {
        double max_change = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (sd[j] == 0.0) continue;
            double rho = 0.0;
            for (std::size_t i = 0; i < n; ++i) rho += z(i, j) * resid[i];
            rho = rho * inv_n + b[j];
            const double updated = soft_threshold(rho, l1) / shrink;
            const double change = updated - b[j];
            if (change != 0.0) {
                for (std::size_t i = 0; i < n; ++i) resid[i] -= z(i, j) * change;
                b[j] = updated;
            }
            max_change = std::max(max_change, std::fabs(change));
        }
        fit.iterations = iter;
        if (max_change < cfg.tol) {
            fit.converged = true;
            break;
        }
    }

    fit.coef.assign(k, 0.0);
    fit.intercept = y_mean;
    for (std::size_t j = 0; j < k; ++j) {
        if (sd[j] == 0.0) continue;
        fit.coef[j] = b[j] / sd[j];
        fit.intercept -= fit.coef[j] * mu[j];
    }
    return fit;
}

void UnavailableLearner::fit(const Matrix&, std::span<const double>) {
    throw LearnerUnavailable("learner '" + tag_ + "' is not built; only the elastic net is available");
}

double UnavailableLearner::predict(std::span<const double>) const {
    throw LearnerUnavailable("learner '" + tag_ + "' is not built; only the elastic net is available");
}

std::unique_ptr<Learner> make_learner(std::string_view tag, const ElasticNetConfig& enet) {
    if (tag == "enet") return std::make_unique<ElasticNetLearner>(enet);
    if (tag == "gbr" || tag == "rf" || tag == "mlp") return std::make_unique<UnavailableLearner>(std::string(tag));
    throw BadSpec("unknown learner '" + std::string(tag) + "'");
}

std::vector<Ranking> walk_forward_signal(const PriceMatrix& p, std::span<const DayIndex> rebalance_days,
                                         const WalkForwardConfig& wf, Learner& learner) {
    wf.validate();
    const std::size_t n = p.n_assets();
    std::vector<Ranking> out;
    out.reserve(rebalance_days.size());
    for (DayIndex t : rebalance_days) {
        if (t < wf.earliest_day() || t >= p.n_days()) {
            throw NotEnoughHistory(
                fmt::format("walk-forward at day {} needs {} days of history", t, wf.earliest_day()));
        }
        const DayIndex s_hi = t - 1 - wf.gap;
        const DayIndex s_lo = s_hi + 1 - wf.train_window;

        Matrix x(wf.train_window * n, kFeatureCount);
        std::vector<double> y(wf.train_window * n);
        Ranking rank;
        rank.day = t;
        std::size_t row = 0;
        for (DayIndex s = s_lo; s <= s_hi; ++s) {
            const auto feats = build_features(p, s);
            for (std::size_t j = 0; j < n; ++j, ++row) {
                const auto v = feats[j].values();
                for (std::size_t c = 0; c < kFeatureCount; ++c) x(row, c) = v[c];
                y[row] = p.at(s + wf.horizon, j) / p.at(s, j) - 1.0;
            }
            rank.max_target_day = std::max(rank.max_target_day, s + wf.horizon);
        }

        const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
        const bool flat = std::all_of(y.begin(), y.end(), [&](double v) { return v == y_mean; });
        rank.predicted.assign(n, 0.0);
        if (flat) {
            rank.degenerate_target = true;
        } else {
            learner.fit(x, y);
            if (const auto* enet = dynamic_cast<const ElasticNetLearner*>(&learner)) {
                rank.converged = enet->last_fit().converged;
            }
            const auto now = build_features(p, t - 1);
            for (std::size_t j = 0; j < n; ++j) rank.predicted[j] = learner.predict(now[j].values());
        }
        rank.order.resize(n);
        std::iota(rank.order.begin(), rank.order.end(), std::size_t{0});
        std::stable_sort(rank.order.begin(), rank.order.end(),
                         [&](std::size_t a, std::size_t b) { return rank.predicted[a] > rank.predicted[b]; });
        out.push_back(std::move(rank));
    }
    return out;
}

WeightSchedule ranking_schedule(std::span<const Ranking> rankings, std::size_t n_assets, DayIndex start,
                                std::size_t top) {
    WeightSchedule w(n_assets, start);
    const std::size_t held = std::min(top, n_assets);
    for (const auto& r : rankings) {
        std::vector<double> weights(n_assets, 0.0);
        for (std::size_t i = 0; i < held; ++i) weights[r.order[i]] = 1.0 / static_cast<double>(held);
        w.set(r.day, std::move(weights));
    }
    return w;
}

std::string rankings_to_csv(std::span<const Ranking> rankings, const PriceMatrix& p) {
    std::string out = "date,asset,predicted_return,rank\n";
    for (const auto& r : rankings) {
        for (std::size_t pos = 0; pos < r.order.size(); ++pos) {
            const std::size_t a = r.order[pos];
            out += fmt::format("{},{},{},{}\n", p.dates()[r.day], p.assets()[a], csv::format_double(r.predicted[a]),
                               pos + 1);
        }
    }
    return out;
}

}  // namespace btdiff
