#include <doctest.h>

#include <cmath>
#include <vector>

#include "btdiff/error.hpp"
#include "btdiff/riskmetrics.hpp"

using namespace btdiff;

using V = std::vector<double>;

TEST_CASE("implementation risk") {
    CHECK(implementation_risk(V{3, 3, 3}) == 0.0);
    CHECK(implementation_risk(V{0, 2}) == doctest::Approx(2.0));
    CHECK(implementation_risk(V{100, 102}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(implementation_risk(V{1}), NotEnoughEngines);
}

TEST_CASE("engine spread") {
    CHECK(es_cv(V{2, 4}).percent == doctest::Approx(100.0 * std::sqrt(2.0) / 3.0));
    CHECK(es_cv(V{2, 4}).percent == doctest::Approx(47.14).epsilon(1e-4));
    CHECK(es_cv(V{5, 5, 5}).percent == 0.0);
    CHECK(es_cv(V{-1, 1}).unstable);
    CHECK(es_range(V{2, 4}) == 2.0);
    CHECK(es_range(V{4, 2, 3}) == 2.0);
    CHECK(es_range(V{1, 1}) == 0.0);
    CHECK_THROWS(es_range(V{}));
}

TEST_CASE("implementation uncertainty interval") {
    const auto i = iui(V{1.0, 1.1, 1.2, 1.3, 1.4});
    CHECK(i.mean == doctest::Approx(1.2));
    CHECK(i.lo == doctest::Approx(0.7610).epsilon(1e-4));
    CHECK(i.hi == doctest::Approx(1.6390).epsilon(1e-4));
    const auto z = iui(V{2, 2, 2});
    CHECK(z.width() == 0.0);
    CHECK(z.contains(2.0));
    const auto two = iui(V{1, 3});
    CHECK(two.contains(1.0));
    CHECK(two.contains(3.0));
    CHECK_THROWS_AS(iui(V{1}), NotEnoughEngines);
}

TEST_CASE("divergence amplification factor") {
    CHECK(daf(V{0, 2}, V{1, 1.5}) == doctest::Approx(4.0));
    CHECK(daf(V{1, 3}, V{1, 3}) == 1.0);
    CHECK_THROWS_AS(daf(V{1, 3}, V{2, 2}), UndefinedRatio);
}

TEST_CASE("conclusion sensitivity") {
    CHECK(csi(V{0.5, 0.3, 0.2}) == 0);
    CHECK(csi(V{0.5, -0.1}) == 1);
    CHECK(csi(V{-0.1151, -0.1219, -0.1151, -0.1225, -0.1211}) == 0);
    CHECK(csi(V{0.0, 0.1}) == 0);
    CHECK(csi(V{0.0, -0.1}) == 1);
    CHECK(csi(V{-5.0, 10.0}) == csi(V{-0.5, 1.0}));
}

TEST_CASE("relative difference") {
    CHECK(relative_difference(1000.0, 990.0).percent == doctest::Approx(100.0 / 99.0));
    CHECK(relative_difference(990.0, 1000.0).percent == doctest::Approx(-100.0 / 99.0));
    CHECK(relative_difference(990.0, 1000.0).magnitude() == relative_difference(1000.0, 990.0).magnitude());
    CHECK(relative_difference(7.0, 7.0).percent == 0.0);
    CHECK_FALSE(relative_difference(7.0, 7.0).absolute_fallback);
    const auto f = relative_difference(0.0, 0.25);
    CHECK(f.absolute_fallback);
    CHECK(f.percent == -0.25);
}

TEST_CASE("floor decomposition") {
    EngineConvention post;
    EngineConvention pre;
    pre.equity_reporting = EquityReporting::pre_trade;
    const auto s = floor_decomposition(0.2, post, pre, 0.0018, true);
    CHECK(std::fabs(s.floor_pct - 0.180324) < 1e-6);
    CHECK(s.floor_pct == doctest::Approx(0.0018 / 0.9982 * 100.0).epsilon(1e-14));
    CHECK(s.residual_pct == doctest::Approx(0.2 - s.floor_pct));
    CHECK(floor_decomposition(0.2, pre, post, 0.0018, true).floor_pct == s.floor_pct);
    CHECK(floor_decomposition(0.2, post, post, 0.0018, true).floor_pct == 0.0);
    CHECK(floor_decomposition(0.2, post, pre, 0.0, true).floor_pct == 0.0);
    CHECK(floor_decomposition(0.2, post, pre, 0.0018, false).floor_pct == 0.0);
    const auto neg = floor_decomposition(0.1, post, pre, 0.0018, true);
    CHECK(neg.residual_pct < 0.0);

    EngineConvention pct;
    pct.rate_interpretation = RateInterpretation::percent_divided;
    CHECK(effective_rate(pct, 0.0018) == doctest::Approx(0.000018));
    EngineConvention x2;
    x2.commission_multiplier = 2;
    CHECK(effective_rate(x2, 0.0018) == doctest::Approx(0.0036));
}

TEST_CASE("dollar ambiguity") {
    CHECK(dollar_ambiguity(0.10, 1e9) == doctest::Approx(1e6));
    CHECK(dollar_ambiguity(3.71, 1e9) == doctest::Approx(37.1e6));
    CHECK(dollar_ambiguity(0.0, 1e9) == 0.0);
}
