#include <gtest/gtest.h>

#include <cmath>

#include "levykit/penalization.hpp"
#include "oracles.hpp"

using namespace levykit;

namespace {

// reflected BM from 0, u = 1, h = 1_{[0,1)}: (|B|, L) = (M - B, M), mpmath 30 digits
constexpr double bm_x_on_l_below_1 = 0.63125361962749275911;   // E[X_1 1{L_1 < 1}]
constexpr double bm_one_minus_l_pos = 0.36874638037250724089;  // E[(1 - L_1)^+]

}  // namespace

TEST(WeightFunction, IndicatorAndTriangular) {
    auto h = WeightFunction::indicator(2.0);
    EXPECT_DOUBLE_EQ(h.h(1.0), 0.5);
    EXPECT_DOUBLE_EQ(h.h(2.0), 0.0);
    EXPECT_DOUBLE_EQ(h.H(1.0), 0.5);
    EXPECT_DOUBLE_EQ(h.H(5.0), 1.0);
    auto t = WeightFunction::triangular(2.0);
    EXPECT_DOUBLE_EQ(t.h(0.0), 1.0);
    EXPECT_DOUBLE_EQ(t.H(1.0), 0.75);
    EXPECT_DOUBLE_EQ(t.upper_mass(1.0), 0.25);
}

TEST(WeightFunction, RejectsBadInput) {
    EXPECT_THROW(WeightFunction::indicator(0.0), ValidationError);
    EXPECT_THROW(WeightFunction::indicator(-1.0), ValidationError);
    EXPECT_THROW(WeightFunction::triangular(0.0), ValidationError);
    EXPECT_THROW(WeightFunction::table({0.0, 1.0}, {1.0, 0.5}), ValidationError);  // mass 0.75
    EXPECT_THROW(WeightFunction::table({0.0, 1.0}, {1.0, -1.0}), ValidationError);
    EXPECT_THROW(WeightFunction::table({0.5, 1.0}, {1.0, 1.0}), ValidationError);
    // increasing h is fine in general, not in compact mode
    EXPECT_NO_THROW(WeightFunction::table({0.0, 1.0}, {0.5, 1.5}));
    EXPECT_THROW(WeightFunction::table({0.0, 1.0}, {0.5, 1.5}, WeightMode::Compact), ValidationError);
}

TEST(WeightFunction, TableAndFunction) {
    auto t = WeightFunction::table({0.0, 1.0, 2.0}, {1.0, 0.5, 0.0}, WeightMode::Compact);
    EXPECT_DOUBLE_EQ(t.h(0.5), 0.75);
    EXPECT_NEAR(t.H(1.0), 0.75, 1e-15);
    EXPECT_NEAR(t.H(2.0), 1.0, 1e-15);
    // exponential density, unbounded support
    auto e = WeightFunction::from_function([](double x) { return std::exp(-x); }, std::numeric_limits<double>::infinity());
    EXPECT_NEAR(e.H(1.0), 1.0 - std::exp(-1.0), 1e-9);
    EXPECT_THROW(WeightFunction::from_function([](double x) { return std::exp(-x); },
                                               std::numeric_limits<double>::infinity(), WeightMode::Compact),
                 ValidationError);
    EXPECT_THROW(WeightFunction::from_function([](double x) { return 2 * std::exp(-x); }, 50.0), ValidationError);
}

TEST(WeightFunction, SamplerFollowsDensity) {
    Rng rng = block_rng(1, 0);
    for (const auto& w : {WeightFunction::triangular(3.0), WeightFunction::table({0.0, 1.0, 2.0}, {1.0, 0.5, 0.0})}) {
        int below = 0;
        const int n = 40000;
        for (int i = 0; i < n; ++i) below += w.sample(rng) < 1.0;
        const double p = w.H(1.0);
        EXPECT_NEAR(below / double(n), p, 4 * std::sqrt(p * (1 - p) / n)) << w.label();
    }
}

TEST(MartingaleValue, Basics) {
    auto b = bessel_spec(1.0);
    auto q = bessel_spec(1.5);
    for (const auto& h : {WeightFunction::indicator(1.0), WeightFunction::triangular(2.0)}) {
        EXPECT_DOUBLE_EQ(martingale_value(b, h, 0.0, 0.0), 1.0);
        EXPECT_DOUBLE_EQ(martingale_value(q, h, 0.0, 0.0), 1.0);
        // stopped at tau_l the value is the upper mass of h
        for (double l : {0.2, 0.9, 3.0}) EXPECT_DOUBLE_EQ(martingale_value(q, h, 0.0, l), h.upper_mass(l));
        EXPECT_DOUBLE_EQ(martingale_value(q, h, 1.7, 5.0), 0.0);
    }
    EXPECT_THROW(martingale_value(b, WeightFunction::indicator(1.0), -1.0, 0.0), DomainError);
    EXPECT_THROW(martingale_value(b, WeightFunction::indicator(1.0), 0.0, -1.0), DomainError);
}

TEST(MartingaleValue, IndicatorClosedForm) {
    // h = 1_{[0,l0)}/l0: 1 + (S(x) - l)/l0 below l0, 0 at or above it when x = 0
    auto q = bessel_spec(1.5);
    const double l0 = 0.8;
    auto h = WeightFunction::indicator(l0);
    for (double x = 0.0; x <= 3.0; x += 0.25) {
        for (double l = 0.0; l < 2.0; l += 0.1) {
            const double v = martingale_value(q, h, x, l);
            EXPECT_GE(v, 0.0);
            if (l < l0) {
                EXPECT_NEAR(v, 1.0 + (q.scale(x) - l) / l0, 1e-14);
            } else if (x == 0.0) {
                EXPECT_EQ(v, 0.0);
            }
        }
    }
}

TEST(MartingaleValue, StoppedFormAlongAPath) {
    // M_u = 1 + (S(X_{u^tau}) - L_{u^tau})/l0 on a simulated path.  Before tau
    // the two sides agree exactly; after it they differ by what the grid leaves
    // between L_tau and l0 and between X_tau and 0.
    auto b = bessel_spec(1.0);
    const double l0 = 0.3;
    auto h = WeightFunction::indicator(l0);
    const auto p = simulate_path(b, 0.0, 2.0, 1e-4, 31);
    std::size_t tau = p.local_time.size();
    for (std::size_t k = 0; k < p.local_time.size(); ++k) {
        if (p.local_time[k] >= l0) {
            tau = k;
            break;
        }
    }
    ASSERT_LT(tau, p.local_time.size());
    for (std::size_t k = 0; k < p.local_time.size(); ++k) {
        const std::size_t j = std::min(k, tau);
        const double stopped = 1.0 + (b.scale(p.positions[j]) - p.local_time[j]) / l0;
        if (k < tau) {
            EXPECT_NEAR(martingale_value(b, h, p.positions[k], p.local_time[k]), stopped, 1e-12);
        } else {
            EXPECT_NEAR(stopped, 0.0, (b.scale(4 * p.epsilon) + (p.local_time[tau] - p.local_time[tau - 1])) / l0 + 1e-12);
        }
    }
}

TEST(MartingaleMean, ZeroHorizonIsExact) {
    auto b = bessel_spec(1.0);
    const auto e = martingale_mean_mc(b, WeightFunction::indicator(1.0), 0.0, 1000, 1);
    EXPECT_EQ(e.mean, 1.0);
    EXPECT_EQ(e.std_error, 0.0);
}

TEST(MartingaleMean, EqualsOne) {
    auto b = bessel_spec(1.0);
    const auto e = martingale_mean_mc(b, WeightFunction::indicator(1.0), 1.0, 100000, 2);
    EXPECT_NEAR(e.mean, 1.0, 3 * e.std_error);
    auto q = bessel_spec(1.5);
    auto tri = WeightFunction::triangular(2.0);
    const auto a = martingale_mean_mc(q, tri, 2.0, 100000, 3);
    const auto c = martingale_mean_mc(q, tri, 8.0, 100000, 4);
    EXPECT_NEAR(a.mean, 1.0, 3 * a.std_error);
    EXPECT_NEAR(a.mean, c.mean, 3 * std::hypot(a.std_error, c.std_error));
}

TEST(PenalizedExpectation, SameEstimatorAsMartingaleMean) {
    auto q = bessel_spec(1.5);
    auto h = WeightFunction::triangular(2.0);
    const auto m = martingale_mean_mc(q, h, 1.0, 20000, 9);
    const auto p = penalized_expectation(q, h, 1.0, [](const JointSample&) { return 1.0; }, 20000, 9);
    EXPECT_EQ(m.mean, p.mean);
    EXPECT_EQ(m.std_error, p.std_error);
}

TEST(PenalizedExpectation, BrownianPieces) {
    auto b = bessel_spec(1.0);
    auto h = WeightFunction::indicator(1.0);
    // on {L < 1} the weight is X + 1 - L; split it by dividing the other piece out
    const auto x_part = penalized_expectation(
        b, h, 1.0,
        [&](const JointSample& s) {
            const double m = martingale_value(b, h, s.x, s.local_time);
            return s.local_time < 1.0 ? s.x / m : 0.0;
        },
        200000, 5);
    EXPECT_NEAR(x_part.mean, bm_x_on_l_below_1, 4 * x_part.std_error);
    const auto l_part = penalized_expectation(
        b, h, 1.0,
        [&](const JointSample& s) {
            const double m = martingale_value(b, h, s.x, s.local_time);
            return s.local_time < 1.0 ? (1.0 - s.local_time) / m : 0.0;
        },
        200000, 5);
    EXPECT_NEAR(l_part.mean, bm_one_minus_l_pos, 4 * l_part.std_error);
}

TEST(PenalizedExpectation, OptionalStopping) {
    // E_0[1{L_u >= l} M_u] = (int_l^inf h) P_0(tau_l <= u)
    auto b = bessel_spec(1.0);
    auto h = WeightFunction::triangular(2.0);
    const double l = 0.5;
    for (double u : {1.0, 1e4}) {
        const auto e = penalized_expectation(
            b, h, u, [&](const JointSample& s) { return s.local_time >= l ? 1.0 : 0.0; }, 100000, 6);
        // tau_l <= u  iff  L_u >= l, and L_u has the law of sqrt(u)|N|
        const double closed = h.upper_mass(l) * std::erfc(l / std::sqrt(2 * u));
        EXPECT_NEAR(e.mean, closed, 3 * e.std_error) << u;
        Rng rng = block_rng(6, 1);
        int hit = 0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) hit += sample_tau(rng, 0.5, l) <= u;
        const double pm = hit / double(n);
        const double se = std::hypot(e.std_error, h.upper_mass(l) * std::sqrt(pm * (1 - pm) / n));
        EXPECT_NEAR(e.mean, h.upper_mass(l) * pm, 3 * se) << u;
    }
}

TEST(MartingaleProperty, IdenticalAtEqualTimes) {
    auto b = bessel_spec(1.0);
    const auto rows = martingale_property_mc(b, WeightFunction::indicator(1.0), 0.5, 0.5, 4096, 3);
    for (const auto& r : rows) {
        EXPECT_EQ(r.at_t.mean, r.at_s.mean);
        EXPECT_EQ(r.difference.mean, 0.0);
        EXPECT_TRUE(r.pass);
    }
}

TEST(MartingaleProperty, BrownianRectangles) {
    auto b = bessel_spec(1.0);
    MartingaleCheckOptions o;
    o.dt = 1e-4;
    const auto rows = martingale_property_mc(b, WeightFunction::indicator(1.0), 0.5, 1.0, 20000, 9, o);
    ASSERT_EQ(rows.size(), default_test_rectangles().size());
    for (const auto& r : rows) EXPECT_TRUE(r.pass) << r.difference.mean << " +- " << r.difference.std_error;
    // phi = 1: both sides near 1; the indicator's jump at L = 1 meets the grid
    // local time, which costs about 0.02 at this dt
    EXPECT_NEAR(rows[0].at_s.mean, 1.0, 0.04);
    EXPECT_NEAR(rows[0].at_t.mean, 1.0, 0.04);
}

TEST(LinftyLaw, BrownianIndicator) {
    auto b = bessel_spec(1.0);
    auto h = WeightFunction::indicator(1.0);
    LinftyOptions o;
    o.u = 1e3;
    const auto r = linfty_law_check(b, h, 100000, 7, o);
    EXPECT_LT(r.max_gap, 0.02);
    EXPECT_NEAR(r.weighted_cdf.back(), 1.0, 0.03);
    const auto a = linfty_law_check(b, h, 100000, 7);
    EXPECT_LT(a.unabsorbed, 0.01);
    EXPECT_LT(a.max_gap, 0.02);
}

TEST(LinftyLaw, BesselTriangular) {
    auto q = bessel_spec(1.5);
    const auto r = linfty_law_check(q, WeightFunction::triangular(2.0), 100000, 8);
    EXPECT_LT(r.unabsorbed, 0.01);
    EXPECT_LT(r.max_gap, 0.03);
}

TEST(Uparrow, BrownianClosedForm) {
    auto b = bessel_spec(1.0);
    for (double y : {0.3, 1.0, 2.5})
        EXPECT_NEAR(uparrow_density(b, 0.0, y, 1.0), oracle::brownian_hitting_density(y, 1.0) / y, 1e-14);
    // x > 0: p^/(S S), symmetric in (x, y)
    EXPECT_NEAR(uparrow_density(b, 0.4, 1.1, 0.7), oracle::brownian_phat(0.7, 0.4, 1.1) / (0.4 * 1.1), 1e-14);
    EXPECT_NEAR(uparrow_density(b, 0.4, 1.1, 0.7), uparrow_density(b, 1.1, 0.4, 0.7), 1e-14);
    // continuity at x = 0
    EXPECT_NEAR(uparrow_density(b, 1e-5, 1.0, 1.0) / uparrow_density(b, 0.0, 1.0, 1.0), 1.0, 1e-6);
}

TEST(Uparrow, BesselSpectralMatchesClosedForm) {
    auto q = bessel_spec(1.5);
    UparrowOptions spectral{DensitySource::Spectral, {}};
    for (double y : {0.2, 1.0, 2.0}) {
        const double c = uparrow_density(q, 0.0, y, 1.0, {DensitySource::Oracle, {}});
        EXPECT_NEAR(uparrow_density(q, 0.0, y, 1.0, spectral), c, 1e-7 * std::max(1.0, c)) << y;
    }
    const double c = uparrow_density(q, 0.6, 1.2, 0.8);
    EXPECT_NEAR(uparrow_density(q, 0.6, 1.2, 0.8, spectral), c, 1e-7);
    EXPECT_THROW(uparrow_density(q, 0.0, 0.0, 1.0), DomainError);
    EXPECT_THROW(uparrow_density(custom_spec("x", "2"), 0.0, 1.0, 1.0, {DensitySource::Oracle, {}}), UnsupportedError);
}

TEST(Uparrow, Normalization) {
    for (double delta : {1.0, 1.5}) {
        auto s = bessel_spec(delta);
        for (double t : {0.5, 1.0, 2.0}) {
            EXPECT_NEAR(uparrow_normalization(s, t).value, 1.0, 1e-6) << delta << " " << t;
            EXPECT_NEAR(uparrow_normalization(s, t, {DensitySource::Spectral, {}}).value, 1.0, 1e-4) << delta << " " << t;
        }
    }
}

TEST(PostLastZero, BrownianMarginal) {
    auto b = bessel_spec(1.0);
    const auto r = post_lastzero_marginal_check(b, WeightFunction::indicator(1.0), 1.0, 100000, 3);
    EXPECT_TRUE(r.pass);
    EXPECT_LT(r.distance, 0.05);
    double total = 0.0;
    for (double m : r.target_mass) total += m;
    EXPECT_NEAR(total, 1.0, 1e-6);
    EXPECT_LT(std::abs(r.correlation), 3 * r.correlation_std_error);
}

TEST(PostLastZero, ZeroLagIsTheOrigin) {
    auto b = bessel_spec(1.0);
    PostLastZeroOptions o;
    o.u = 100.0;
    const auto r = post_lastzero_marginal_check(b, WeightFunction::indicator(1.0), 0.0, 1000, 3, o);
    ASSERT_EQ(r.weighted_mass.size(), 1u);
    EXPECT_EQ(r.bin_edges.back(), 0.0);
    EXPECT_EQ(r.weighted_mass[0], 1.0);
}

TEST(NumeratorAsymptotics, PresetsWithinTwentyPercent) {
    // E_a[h(L_t)] / nu((t,inf)) -> S(a) h(0) + 1
    auto tri = WeightFunction::triangular(2.0);
    for (double delta : {1.0, 1.5}) {
        auto s = bessel_spec(delta);
        const auto e = numerator_ratio_mc(s, tri, 1.0, 1e4, 100000, 5);
        const double target = s.scale(1.0) * tri.h(0.0) + 1.0;
        EXPECT_NEAR(e.mean / target, 1.0, 0.2) << delta;
    }
}
