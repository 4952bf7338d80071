#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "levykit/diffusion.hpp"
#include "oracles.hpp"

using namespace levykit;

TEST(BesselSpec, BrownianNormalization) {
    auto s = bessel_spec(1.0);
    ASSERT_TRUE(s.alpha);
    EXPECT_DOUBLE_EQ(*s.alpha, 0.5);
    EXPECT_DOUBLE_EQ(s.scale(1.0), 1.0);
    EXPECT_DOUBLE_EQ(s.speed_density(1.0), 2.0);
    EXPECT_EQ(s.scale(0.0), 0.0);
}

TEST(BesselSpec, QuarterIndex) {
    auto s = bessel_spec(1.5);
    EXPECT_DOUBLE_EQ(*s.alpha, 0.25);
    EXPECT_DOUBLE_EQ(s.scale(1.0), 2.0);
}

TEST(BesselSpec, RejectsDimensionOutsideRange) {
    EXPECT_THROW(bessel_spec(0.0), DomainError);
    EXPECT_THROW(bessel_spec(2.0), DomainError);
    EXPECT_THROW(bessel_spec(-1.0), DomainError);
}

TEST(BesselSpec, OraclesMatchBrownianClosedForms) {
    auto s = bessel_spec(1.0);
    for (double t : {0.3, 1.0, 4.0})
        for (double x : {0.0, 0.4, 1.3})
            for (double y : {0.0, 0.7, 2.0}) {
                EXPECT_NEAR(s.oracles.transition_density(t, x, y), oracle::brownian_p(t, x, y), 1e-13);
                EXPECT_NEAR(s.oracles.killed_density(t, x, y), oracle::brownian_phat(t, x, y), 1e-13);
            }
    EXPECT_NEAR(s.oracles.hitting_density(1.0, 1.0), oracle::f_bm_1_1, 1e-14);
    EXPECT_NEAR(s.oracles.levy_density(1.0), oracle::nudot_bm_1, 1e-14);
    EXPECT_NEAR(s.oracles.hitting_tail(1.0, 1.0), oracle::tail_bm_1_1, 1e-14);
}

TEST(BesselSpec, LargeArgumentKernelIsFinite) {
    auto s = bessel_spec(1.0);
    // x y / t = 2500, far past the overflow point of I_nu
    EXPECT_NEAR(s.oracles.transition_density(0.01, 5.0, 5.0), oracle::brownian_p(0.01, 5.0, 5.0), 1e-10);
}

TEST(BesselSpec, LevyOraclesForQuarterIndex) {
    auto s = bessel_spec(1.5);
    EXPECT_NEAR(s.oracles.levy_density(10.0), oracle::nudot_bessel025_10, 1e-15);
    EXPECT_NEAR(s.oracles.levy_tail(10.0), std::pow(2.0, 0.75) * std::pow(10.0, -0.25) / std::tgamma(0.25), 1e-15);
}

TEST(CumulativeSpeed, Brownian) {
    auto s = bessel_spec(1.0);
    EXPECT_NEAR(cumulative_speed(s, 1.0), 2.0, 1e-12);
    EXPECT_EQ(cumulative_speed(s, 0.0), 0.0);
}

TEST(CumulativeSpeed, MatchesAnalyticAcrossIndices) {
    for (double delta : {0.5, 1.0, 1.5}) {
        auto s = bessel_spec(delta);
        const double a = *s.alpha;
        double prev = 0.0;
        for (double x : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0}) {
            const double exact = 2.0 * std::pow(x, 2.0 - 2.0 * a) / (2.0 - 2.0 * a);
            const double m = cumulative_speed(s, x);
            EXPECT_NEAR(m / exact, 1.0, 1e-8) << "delta=" << delta << " x=" << x;
            EXPECT_GE(m, prev);
            prev = m;
        }
    }
    EXPECT_NEAR(cumulative_speed(bessel_spec(1.5), 1.0), 4.0 / 3.0, 1e-10);
}

TEST(CumulativeSpeed, NonIntegrableSpeedDensity) {
    DiffusionSpec s = custom_spec("x", "1/x^2");
    EXPECT_THROW(cumulative_speed(s, 1.0), IntegrabilityError);
}

TEST(BoundBase, QuadratureAgreesWithPresetFormula) {
    for (double delta : {0.5, 1.5}) {
        auto preset = bessel_spec(delta);
        DiffusionSpec plain = preset;
        plain.alpha.reset();
        for (double x : {0.3, 1.0, 3.0}) EXPECT_NEAR(bound_base(plain, x) / bound_base(preset, x), 1.0, 1e-8);
    }
}

TEST(Resolvent, BrownianValue) {
    EXPECT_NEAR(resolvent_at_zero(bessel_spec(1.0), 1.0), 1.0 / std::sqrt(2.0), 1e-8);
}

TEST(Resolvent, MatchesClosedExponent) {
    for (double delta : {0.5, 1.5}) {
        auto s = bessel_spec(delta);
        const double a = *s.alpha;
        for (double lambda : {0.1, 1.0, 7.0}) {
            const double expo = bessel_kappa(a) * std::pow(lambda, a);
            EXPECT_NEAR(resolvent_at_zero(s, lambda) * expo, 1.0, 1e-7) << delta << " " << lambda;
        }
    }
    EXPECT_NEAR(bessel_kappa(0.25), oracle::kappa_bessel025, 1e-14);
}

TEST(Resolvent, DecreasingInLambda) {
    auto s = bessel_spec(1.5);
    double prev = resolvent_at_zero(s, 1e-3);
    for (double lambda = 1e-2; lambda < 1e4; lambda *= 3.0) {
        const double r = resolvent_at_zero(s, lambda);
        EXPECT_LT(r, prev);
        prev = r;
    }
}

TEST(Resolvent, NeedsLevyDensity) {
    EXPECT_THROW(resolvent_at_zero(custom_spec("x", "2"), 1.0), UnsupportedError);
}

TEST(CustomSpec, MatchesPresetWhenSameFormulas) {
    auto c = custom_spec("x^0.5/0.5", "2*x^0.5");
    auto b = bessel_spec(1.5);
    for (double x : {0.1, 1.0, 3.0}) {
        EXPECT_NEAR(c.scale(x), b.scale(x), 1e-14);
        EXPECT_NEAR(cumulative_speed(c, x), cumulative_speed(b, x), 1e-10);
    }
}

TEST(CustomSpec, RejectsBrokenInvariants) {
    EXPECT_THROW(custom_spec("x + 1", "2"), DomainError);     // S(0) != 0
    EXPECT_THROW(custom_spec("-x", "2"), DomainError);        // decreasing
    EXPECT_THROW(custom_spec("x", "x - 1"), DomainError);     // m' <= 0 somewhere
}

TEST(CustomSpec, RecurrenceProbeIsSoft) {
    // S bounded: transient, reported but not thrown
    auto s = custom_spec("x/(1 + x)", "2");
    EXPECT_FALSE(validate_spec(s).recurrence_plausible);
    EXPECT_TRUE(validate_spec(bessel_spec(1.0)).recurrence_plausible);
}
