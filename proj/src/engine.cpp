#include "btdiff/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "btdiff/csv.hpp"
#include "btdiff/error.hpp"

namespace btdiff {

namespace {

constexpr double kWeightSlack = 1e-12;
// Sequential fills tolerate this much overdraft (relative to V) as rounding.
constexpr double kCashSlack = 1e-9;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double charge(double rate, std::span<const double> delta, const EngineConvention& conv) {
    const double base = reference_cost(rate, delta);
    const double divisor = conv.rate_interpretation == RateInterpretation::percent_divided ? 100.0 : 1.0;
    return base * static_cast<double>(conv.commission_multiplier) / divisor;
}

WeightSchedule shifted(const WeightSchedule& w, std::size_t n_days) {
    WeightSchedule out(w.n_assets(), w.start());
    for (const auto& [day, weights] : w.entries()) {
        if (day + 1 < n_days) out.set(day + 1, weights);
    }
    return out;
}

struct Book {
    std::vector<double> holdings;
    double cash = 0.0;
};

// Orders are processed one at a time against running cash; buys that would
// overdraw are skipped. Returns the accepted mask.
std::vector<bool> sequence_orders(const Book& book, std::span<const double> trades, std::span<const double> delta,
                                  double rate, double pre_value, const EngineConvention& conv) {
    const std::size_t n = trades.size();
    std::vector<std::size_t> order;
    if (conv.fill_sequencing == FillSequencing::sells_first_sequential) {
        for (std::size_t i = 0; i < n; ++i) {
            if (trades[i] < 0.0) order.push_back(i);
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!(trades[i] < 0.0)) order.push_back(i);
        }
    } else {
        order.resize(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
    }

    std::vector<bool> accepted(n, true);
    double running = book.cash;
    const double floor = -kCashSlack * std::max(pre_value, 1.0);
    for (std::size_t i : order) {
        const double single[1] = {delta[i]};
        const double fee = charge(rate, single, conv);
        const double after = running - trades[i] - fee;
        if (trades[i] > 0.0 && after < floor) {
            accepted[i] = false;
            continue;
        }
        running = after;
    }
    return accepted;
}

EquitySeries simulate(const WeightSchedule& schedule, const PriceMatrix& p, double c0, double rate,
                      const EngineConvention& conv) {
    const std::size_t n = p.n_assets();
    const std::size_t n_days = p.n_days();
    EquitySeries out;
    Book book{std::vector<double>(n, 0.0), c0};
    std::vector<double> delta(n);
    std::vector<double> trades(n);
    const std::size_t limit = conv.truncate_after.value_or(n_days);

    for (DayIndex t = schedule.start(); t < n_days && out.size() < limit; ++t) {
        const auto prices = p.row(t);
        const auto* weights = schedule.find(t);
        if (!weights) {
            out.days.push_back(t);
            out.equity.push_back(book.cash + dot(book.holdings, prices));
            continue;
        }
        const auto& w = *weights;
        const double value = book.cash + dot(book.holdings, prices);
        for (std::size_t i = 0; i < n; ++i) delta[i] = w[i] * value - book.holdings[i] * prices[i];
        const double full_cost = charge(rate, delta, conv);
        const double net = value - full_cost;

        TradeRecord rec;
        rec.day = t;
        rec.pre_value = value;

        bool all_accepted = true;
        std::vector<bool> accepted;
        if (conv.fill_sequencing != FillSequencing::atomic) {
            for (std::size_t i = 0; i < n; ++i) trades[i] = w[i] * net - book.holdings[i] * prices[i];
            accepted = sequence_orders(book, trades, delta, rate, value, conv);
            all_accepted = std::all_of(accepted.begin(), accepted.end(), [](bool a) { return a; });
        }

        double reported_net = net;
        if (all_accepted) {
            for (std::size_t i = 0; i < n; ++i) book.holdings[i] = w[i] * net / prices[i];
            book.cash = net - dot(book.holdings, prices);
            rec.delta = delta;
            rec.cost = full_cost;
        } else {
            rec.delta.assign(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                if (accepted[i]) rec.delta[i] = delta[i];
                else ++rec.rejected;
            }
            rec.cost = charge(rate, rec.delta, conv);
            reported_net = value - rec.cost;
            for (std::size_t i = 0; i < n; ++i) {
                if (accepted[i]) book.holdings[i] = w[i] * net / prices[i];
            }
            book.cash = reported_net - dot(book.holdings, prices);
        }
        out.trades.push_back(std::move(rec));
        out.days.push_back(t);
        out.equity.push_back(conv.equity_reporting == EquityReporting::pre_trade ? value : reported_net);
    }
    return out;
}

void check_inputs(const WeightSchedule& w, const PriceMatrix& p, double c0, CostSpec cost) {
    if (!(c0 > 0.0) || !std::isfinite(c0)) throw BadSpec("initial capital must be positive");
    cost.validate();
    w.check_against(p);
}

std::string_view token(std::string_view& rest) {
    const auto bar = rest.find('|');
    std::string_view head = rest.substr(0, bar);
    rest = bar == std::string_view::npos ? std::string_view{} : rest.substr(bar + 1);
    return head;
}

}  // namespace

void WeightSchedule::set(DayIndex day, std::vector<double> weights) {
    if (weights.size() != n_assets_) {
        throw BadSchedule(fmt::format("weight vector has {} entries, expected {}", weights.size(), n_assets_));
    }
    if (day < start_) throw BadSchedule(fmt::format("rebalance day {} precedes evaluation start {}", day, start_));
    double sum = 0.0;
    for (double x : weights) {
        if (!std::isfinite(x) || x < 0.0) throw BadSchedule(fmt::format("invalid weight {} on day {}", x, day));
        sum += x;
    }
    if (sum > 1.0 + kWeightSlack) throw BadSchedule(fmt::format("weights sum to {} on day {}", sum, day));
    entries_[day] = std::move(weights);
}

const std::vector<double>* WeightSchedule::find(DayIndex day) const {
    auto it = entries_.find(day);
    return it == entries_.end() ? nullptr : &it->second;
}

void WeightSchedule::check_against(const PriceMatrix& p) const {
    if (n_assets_ != p.n_assets()) throw BadSchedule("schedule and panel disagree on asset count");
    if (start_ >= p.n_days()) throw BadSchedule("evaluation start is beyond the calendar");
    if (!entries_.empty() && entries_.rbegin()->first >= p.n_days()) {
        throw BadSchedule("rebalance day outside the calendar");
    }
}

void CostSpec::validate() const {
    if (!(rate >= 0.0 && rate < 1.0)) throw BadSpec(fmt::format("cost rate {} outside [0, 1)", rate));
}

std::string EngineConvention::id() const {
    std::string s = equity_reporting == EquityReporting::post_trade ? "post" : "pre";
    s += rate_interpretation == RateInterpretation::absolute ? "|abs" : "|pct";
    s += fmt::format("|x{}", commission_multiplier);
    switch (fill_sequencing) {
        case FillSequencing::atomic: s += "|atomic"; break;
        case FillSequencing::fifo_sequential: s += "|fifo"; break;
        case FillSequencing::sells_first_sequential: s += "|sellsfirst"; break;
    }
    s += return_timing == ReturnTiming::aligned ? "|aligned" : "|shifted";
    s += truncate_after ? fmt::format("|t{}", *truncate_after) : std::string("|full");
    return s;
}

EngineConvention EngineConvention::parse(std::string_view id) {
    EngineConvention c;
    std::string_view rest = id;
    auto fail = [&](std::string_view what) {
        return BadSpec(fmt::format("bad engine id '{}': {}", id, what));
    };
    const auto eq = token(rest);
    if (eq == "post") c.equity_reporting = EquityReporting::post_trade;
    else if (eq == "pre") c.equity_reporting = EquityReporting::pre_trade;
    else throw fail("equity reporting must be post|pre");

    const auto rate = token(rest);
    if (rate == "abs") c.rate_interpretation = RateInterpretation::absolute;
    else if (rate == "pct") c.rate_interpretation = RateInterpretation::percent_divided;
    else throw fail("rate interpretation must be abs|pct");

    const auto mult = token(rest);
    if (mult.size() < 2 || mult[0] != 'x') throw fail("multiplier must look like x1");
    auto m = csv::parse_int(mult.substr(1));
    if (!m || *m < 1) throw fail("multiplier must be a positive integer");
    c.commission_multiplier = static_cast<unsigned>(*m);

    const auto fill = token(rest);
    if (fill == "atomic") c.fill_sequencing = FillSequencing::atomic;
    else if (fill == "fifo") c.fill_sequencing = FillSequencing::fifo_sequential;
    else if (fill == "sellsfirst") c.fill_sequencing = FillSequencing::sells_first_sequential;
    else throw fail("fill sequencing must be atomic|fifo|sellsfirst");

    const auto timing = token(rest);
    if (timing == "aligned") c.return_timing = ReturnTiming::aligned;
    else if (timing == "shifted") c.return_timing = ReturnTiming::shifted_one_day;
    else throw fail("timing must be aligned|shifted");

    const auto trunc = token(rest);
    if (trunc == "full") {
        c.truncate_after.reset();
    } else if (trunc.size() > 1 && trunc[0] == 't') {
        auto k = csv::parse_int(trunc.substr(1));
        if (!k || *k < 1) throw fail("truncation must be t<positive days>");
        c.truncate_after = static_cast<std::size_t>(*k);
    } else {
        throw fail("truncation must be full|t<k>");
    }
    if (!rest.empty()) throw fail("too many fields");
    return c;
}

double EquitySeries::total_cost() const {
    double s = 0.0;
    for (const auto& t : trades) s += t.cost;
    return s;
}

double reference_cost(double rate, std::span<const double> delta) {
    double l1 = 0.0;
    for (double d : delta) l1 += std::fabs(d);
    return rate * l1;
}

EquitySeries run_reference(const WeightSchedule& w, const PriceMatrix& p, double initial_capital, CostSpec cost) {
    check_inputs(w, p, initial_capital, cost);
    return simulate(w, p, initial_capital, cost.rate, EngineConvention::reference());
}

EquitySeries run_variant(const WeightSchedule& w, const PriceMatrix& p, double initial_capital, CostSpec cost,
                         const EngineConvention& conv) {
    check_inputs(w, p, initial_capital, cost);
    if (conv.commission_multiplier < 1) throw BadSpec("commission multiplier must be >= 1");
    if (conv.return_timing == ReturnTiming::shifted_one_day) {
        return simulate(shifted(w, p.n_days()), p, initial_capital, cost.rate, conv);
    }
    return simulate(w, p, initial_capital, cost.rate, conv);
}

PerfStats performance_metrics(const EquitySeries& e) {
    const auto& eq = e.equity;
    if (eq.size() < 2) throw BadSpec("performance metrics need at least two equity points");
    PerfStats s;
    const double growth = eq.back() / eq.front();
    s.total_return_pct = (growth - 1.0) * 100.0;
    s.cagr_pct = (std::pow(growth, kTradingDaysPerYear / static_cast<double>(eq.size() - 1)) - 1.0) * 100.0;

    std::vector<double> r(eq.size() - 1);
    for (std::size_t t = 1; t < eq.size(); ++t) r[t - 1] = eq[t] / eq[t - 1] - 1.0;
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
    double sd = 0.0;
    if (r.size() >= 2) {
        double ss = 0.0;
        for (double x : r) ss += (x - mean) * (x - mean);
        sd = std::sqrt(ss / static_cast<double>(r.size() - 1));
    }
    const double root_year = std::sqrt(kTradingDaysPerYear);
    s.ann_vol_pct = sd * root_year * 100.0;
    if (sd > 0.0) {
        s.sharpe = mean / sd * root_year;
    } else {
        s.sharpe = 0.0;
        s.degenerate_sharpe = true;
    }
    s.max_drawdown_pct = max_drawdown(eq) * 100.0;
    return s;
}

double annual_turnover(const EquitySeries& e) {
    if (e.size() < 2) return 0.0;
    double traded = 0.0;
    for (const auto& t : e.trades) {
        if (t.pre_value <= 0.0) continue;
        double l1 = 0.0;
        for (double d : t.delta) l1 += std::fabs(d);
        traded += l1 / t.pre_value;
    }
    return traded * kTradingDaysPerYear / static_cast<double>(e.size() - 1);
}

double cost_intensity(CostSpec cost, double turnover) { return cost.rate * turnover; }

std::string equity_to_csv(const EquitySeries& e, const PriceMatrix& p) {
    std::string out = "date,equity\n";
    for (std::size_t i = 0; i < e.size(); ++i) {
        out += p.dates().at(e.days[i]) + "," + csv::format_double(e.equity[i]) + "\n";
    }
    return out;
}

std::string trades_to_json(const EquitySeries& e, const PriceMatrix& p) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& t : e.trades) {
        nlohmann::ordered_json j;
        j["date"] = p.dates().at(t.day);
        j["pre_value"] = t.pre_value;
        j["cost"] = t.cost;
        j["rejected"] = t.rejected;
        auto& d = j["delta"] = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < t.delta.size(); ++i) d[p.assets()[i]] = t.delta[i];
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

}  // namespace btdiff
