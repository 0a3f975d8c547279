#include "btdiff/buckets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "btdiff/distributions.hpp"
#include "btdiff/error.hpp"
#include "btdiff/rng.hpp"

namespace btdiff {

namespace {

constexpr std::size_t kMaxRestarts = 100;

struct Precision {
    Eigen::Matrix3d inverse = Eigen::Matrix3d::Zero();
    CovariateRow center{};
    bool singular = false;
};

Precision covariate_precision(const CovariateTable& cov) {
    const std::size_t n = cov.size();
    Precision out;
    for (const auto& r : cov.rows) {
        for (std::size_t k = 0; k < kCovariates; ++k) out.center[k] += r[k];
    }
    for (auto& c : out.center) c /= static_cast<double>(n);

    Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
    if (n >= 2) {
        for (const auto& r : cov.rows) {
            Eigen::Vector3d d(r[0] - out.center[0], r[1] - out.center[1], r[2] - out.center[2]);
            s += d * d.transpose();
        }
        s /= static_cast<double>(n - 1);
    }

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(s);
    const auto& ev = eig.eigenvalues();
    const double largest = ev.cwiseAbs().maxCoeff();
    if (largest > 0.0 && ev.minCoeff() > 1e-12 * largest) {
        out.inverse = s.inverse();
        return out;
    }
    out.singular = true;
    Eigen::Vector3d inv_ev = Eigen::Vector3d::Zero();
    for (int k = 0; k < 3; ++k) {
        if (ev[k] > 1e-12 * largest && largest > 0.0) inv_ev[k] = 1.0 / ev[k];
    }
    out.inverse = eig.eigenvectors() * inv_ev.asDiagonal() * eig.eigenvectors().transpose();
    return out;
}

double score_buckets(const std::vector<std::vector<std::size_t>>& buckets, const CovariateTable& cov,
                     const Precision& prec) {
    double total = 0.0;
    for (const auto& b : buckets) {
        if (b.empty()) continue;
        Eigen::Vector3d d = Eigen::Vector3d::Zero();
        for (std::size_t a : b) {
            for (int k = 0; k < 3; ++k) d[k] += cov.rows[a][static_cast<std::size_t>(k)];
        }
        d /= static_cast<double>(b.size());
        for (int k = 0; k < 3; ++k) d[k] -= prec.center[static_cast<std::size_t>(k)];
        // (S / k)^-1 = k S^-1
        total += static_cast<double>(b.size()) * d.dot(prec.inverse * d);
    }
    return total;
}

void check_feasible(std::span<const std::string> sectors, const BucketConfig& cfg) {
    if (cfg.bucket_size == 0 || cfg.n_buckets == 0) throw BadSpec("bucket size and count must be positive");
    if (cfg.bucket_size * cfg.n_buckets > sectors.size()) {
        throw InfeasibleConstraint("bucket_size x n_buckets exceeds the universe");
    }
    if (!cfg.sector_constraint) return;
    std::map<std::string, std::size_t> counts;
    for (const auto& s : sectors) ++counts[s];
    // Each sector can contribute at most one asset per bucket.
    std::size_t capacity = 0;
    for (const auto& [s, c] : counts) capacity += std::min(c, cfg.n_buckets);
    if (counts.size() < cfg.bucket_size || capacity < cfg.bucket_size * cfg.n_buckets) {
        throw InfeasibleConstraint("sector-distinct buckets are impossible for this universe");
    }
}

}  // namespace

CovariateTable compute_covariates(const PriceMatrix& p) {
    if (p.n_days() < 2) throw BadSpec("covariates need at least two dates");
    const std::size_t n = p.n_assets();
    const std::size_t t_len = p.n_days();
    std::vector<std::vector<double>> log_ret(n, std::vector<double>(t_len - 1));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t t = 1; t < t_len; ++t) log_ret[j][t - 1] = std::log(p.at(t, j) / p.at(t - 1, j));
    }

    CovariateTable out;
    out.assets = p.assets();
    out.rows.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto& r = log_ret[j];
        double vol = 0.0;
        if (r.size() >= 2) {
            const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
            double ss = 0.0;
            for (double v : r) ss += (v - mean) * (v - mean);
            vol = std::sqrt(ss / static_cast<double>(r.size() - 1)) * std::sqrt(kTradingDaysPerYear);
        }
        double corr = 0.0;
        if (n > 1) {
            for (std::size_t k = 0; k < n; ++k) {
                if (k != j) corr += correlation(r, log_ret[k]);
            }
            corr /= static_cast<double>(n - 1);
        }
        out.rows[j] = {vol, corr, std::log(p.at(t_len - 1, j) / p.at(0, j))};
    }
    return out;
}

double balance_quadratic_form(std::span<const CovariateRow> bucket_means,
                              const CovariateRow& center,
                              const std::array<double, kCovariates * kCovariates>& precision) {
    double total = 0.0;
    for (const auto& m : bucket_means) {
        for (std::size_t i = 0; i < kCovariates; ++i) {
            for (std::size_t j = 0; j < kCovariates; ++j) {
                total += (m[i] - center[i]) * precision[i * kCovariates + j] * (m[j] - center[j]);
            }
        }
    }
    return total;
}

BalanceScore mahalanobis_score(const Partition& part, const CovariateTable& cov) {
    for (const auto& b : part.buckets) {
        for (std::size_t a : b) {
            if (a >= cov.size()) throw BadSpec("partition refers to an asset outside the covariate table");
        }
    }
    const Precision prec = covariate_precision(cov);
    return {score_buckets(part.buckets, cov, prec), prec.singular};
}

std::vector<std::vector<std::size_t>> sample_candidate(std::span<const std::string> sectors,
                                                       const BucketConfig& cfg,
                                                       std::size_t index) {
    check_feasible(sectors, cfg);
    const std::size_t n = sectors.size();
    CounterRng rng(derive_key(cfg.seed, index));
    std::vector<std::size_t> order(n);

    for (std::size_t attempt = 0; attempt < kMaxRestarts; ++attempt) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        std::vector<std::vector<std::size_t>> buckets(cfg.n_buckets);
        std::vector<bool> used(n, false);
        bool dead_end = false;
        for (auto& bucket : buckets) {
            std::set<std::string_view> taken;
            for (std::size_t pos = 0; pos < n && bucket.size() < cfg.bucket_size; ++pos) {
                const std::size_t a = order[pos];
                if (used[a]) continue;
                if (cfg.sector_constraint && taken.contains(sectors[a])) continue;
                used[a] = true;
                taken.insert(sectors[a]);
                bucket.push_back(a);
            }
            if (bucket.size() < cfg.bucket_size) {
                dead_end = true;
                break;
            }
            std::sort(bucket.begin(), bucket.end());
        }
        if (!dead_end) return buckets;
    }
    throw InfeasibleConstraint("no sector-feasible partition found after 100 restarts");
}

Partition rerandomize(const CovariateTable& cov, std::span<const std::string> sectors, const BucketConfig& cfg) {
    if (cfg.n_candidates < 1) throw BadSpec("need at least one candidate");
    if (sectors.size() != cov.size()) throw BadSpec("sector list does not match covariate table");
    check_feasible(sectors, cfg);
    const Precision prec = covariate_precision(cov);

    const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, cfg.n_candidates));
    std::vector<double> best_score(jobs, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> best_index(jobs, 0);
    std::vector<std::exception_ptr> errors(jobs);

    auto worker = [&](std::size_t w) {
        try {
            for (std::size_t i = w; i < cfg.n_candidates; i += jobs) {
                const double s = score_buckets(sample_candidate(sectors, cfg, i), cov, prec);
                // Strict '<' over increasing i keeps the lowest index on ties.
                if (s < best_score[w]) {
                    best_score[w] = s;
                    best_index[w] = i;
                }
            }
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (jobs == 1) {
        worker(0);
    } else {
        std::vector<std::jthread> threads;
        for (std::size_t w = 0; w < jobs; ++w) threads.emplace_back(worker, w);
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    std::size_t winner = 0;
    for (std::size_t w = 1; w < jobs; ++w) {
        if (best_score[w] < best_score[winner] ||
            (best_score[w] == best_score[winner] && best_index[w] < best_index[winner])) {
            winner = w;
        }
    }

    Partition out;
    out.buckets = sample_candidate(sectors, cfg, best_index[winner]);
    out.score = best_score[winner];
    out.singular_covariance = prec.singular;
    out.seed = cfg.seed;
    out.n_candidates = cfg.n_candidates;
    out.selected_candidate = best_index[winner];
    return out;
}

SectorBalance sector_balance(const Partition& part, std::span<const std::string> sectors) {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : sectors) counts.emplace(s, 0);
    std::size_t total = 0;
    for (const auto& b : part.buckets) {
        for (std::size_t a : b) {
            ++counts.at(sectors[a]);
            ++total;
        }
    }
    SectorBalance out;
    const std::size_t k = counts.size();
    out.df = k > 1 ? k - 1 : 0;
    if (total == 0 || k == 0) return out;

    const double expected = static_cast<double>(total) / static_cast<double>(k);
    double entropy = 0.0;
    for (const auto& [s, c] : counts) {
        const double diff = static_cast<double>(c) - expected;
        out.chi2 += diff * diff / expected;
        if (c > 0) {
            const double q = static_cast<double>(c) / static_cast<double>(total);
            entropy -= q * std::log(q);
        }
    }
    out.entropy_ratio = k > 1 ? entropy / std::log(static_cast<double>(k)) : 0.0;
    out.p_value = out.df > 0 ? dist::chi2_sf(out.chi2, static_cast<double>(out.df)) : 1.0;
    return out;
}

bool partition_is_valid(const Partition& part, std::span<const std::string> sectors, std::size_t bucket_size,
                        bool sector_constraint) {
    std::vector<bool> seen(sectors.size(), false);
    for (const auto& b : part.buckets) {
        if (b.size() != bucket_size) return false;
        std::set<std::string_view> taken;
        for (std::size_t a : b) {
            if (a >= sectors.size() || seen[a]) return false;
            seen[a] = true;
            if (sector_constraint && !taken.insert(sectors[a]).second) return false;
        }
    }
    return true;
}

std::string partition_to_json(const Partition& part, std::span<const std::string> tickers) {
    nlohmann::ordered_json j;
    j["seed"] = part.seed;
    j["n_candidates"] = part.n_candidates;
    j["selected_candidate"] = part.selected_candidate;
    j["score"] = part.score;
    j["singular_covariance"] = part.singular_covariance;
    j["aggregation"] = "sum over buckets of (m_b-m)'(S/k)^-1(m_b-m)";
    auto& buckets = j["buckets"] = nlohmann::ordered_json::array();
    for (const auto& b : part.buckets) {
        auto names = nlohmann::ordered_json::array();
        for (std::size_t a : b) names.push_back(tickers[a]);
        buckets.push_back(std::move(names));
    }
    return j.dump(2) + "\n";
}

Partition partition_from_json(const std::string& text, std::span<const std::string> tickers) {
    const auto j = nlohmann::json::parse(text);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < tickers.size(); ++i) index[tickers[i]] = i;
    Partition out;
    out.seed = j.at("seed").get<std::uint64_t>();
    out.n_candidates = j.at("n_candidates").get<std::size_t>();
    out.selected_candidate = j.value("selected_candidate", std::size_t{0});
    out.score = j.at("score").get<double>();
    out.singular_covariance = j.value("singular_covariance", false);
    for (const auto& b : j.at("buckets")) {
        std::vector<std::size_t> bucket;
        for (const auto& name : b) {
            auto it = index.find(name.get<std::string>());
            if (it == index.end()) throw BadSpec("partition names unknown ticker " + name.get<std::string>());
            bucket.push_back(it->second);
        }
        out.buckets.push_back(std::move(bucket));
    }
    return out;
}

}  // namespace btdiff
