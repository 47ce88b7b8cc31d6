#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "blowup/ode_blowup.hpp"

using namespace blowup;

namespace {
const double kSqrt2 = std::numbers::sqrt2;
}

TEST(OdeBlowup, PurePowerGolden) {
    OdeOptions opt;
    opt.checkpoints = {0.5};
    const auto traj = integrate_ode({3, 0, 1}, kSqrt2, kSqrt2, 1e6, opt);
    EXPECT_NEAR(traj.T_est, 1.0, 1e-8);
    EXPECT_NEAR(traj.T_extrapolated, 1.0, 1e-8);
    EXPECT_NEAR(traj.C_first_integral, 0.0, 1e-15);
    bool seen = false;
    for (const auto& s : traj.samples) {
        if (s.t == 0.5) {
            EXPECT_NEAR(s.v, 2.0 * kSqrt2, 1e-8 * 2.0 * kSqrt2);
            seen = true;
        }
        // v(t) = sqrt2 / (1 - t), compared as the time at which v is reached (well conditioned near T)
        EXPECT_NEAR(1.0 - kSqrt2 / s.v, s.t, 1e-9);
    }
    EXPECT_TRUE(seen);
}

TEST(OdeBlowup, ZeroFirstIntegralTrajectory) {
    const ModelParams m{3, 1, 1};
    const double B = std::sqrt(2.0 * eval_F(m, 1.0));
    const auto traj = integrate_ode(m, 1.0, B, 1e4);
    EXPECT_NEAR(traj.C_first_integral, 0.0, 1e-14);
    for (std::size_t k = 1; k < traj.samples.size(); ++k) {
        EXPECT_GT(traj.samples[k].v, traj.samples[k - 1].v);
        EXPECT_LE(std::abs(traj.first_integral_residual(traj.samples[k])), 1e-7 * (1.0 + std::pow(traj.samples[k].v_prime, 2)));
    }
}

TEST(OdeBlowup, RejectsNonPositiveData) {
    EXPECT_THROW(integrate_ode({3, 1, 1}, 0.0, 1.0, 1e4), DomainError);
    EXPECT_THROW(integrate_ode({3, 1, 1}, 1.0, -1.0, 1e4), DomainError);
    EXPECT_THROW(integrate_ode({3, 1, 1}, 1.0, 1.0, 0.5), DomainError);
}

TEST(OdeBlowup, StepBudgetStalls) {
    OdeOptions opt;
    opt.max_steps = 5;
    try {
        integrate_ode({3, 1, 1}, 1.0, 1.0, 1e6, opt);
        FAIL() << "expected a stall";
    } catch (const IntegratorStall& e) {
        EXPECT_GT(e.v, 0.0);
        EXPECT_GT(e.t, 0.0);
    }
}

TEST(RemainingTime, ClosedForms) {
    EXPECT_NEAR(blowup_time_quadrature({3, 0, 1}, kSqrt2, 0.0), 1.0, 1e-12);
    EXPECT_NEAR(blowup_time_quadrature({3, 0, 1}, 2.0 * kSqrt2, 0.0), 0.5, 1e-12);
    // p = 5, a = 0, C = 0: int_{v0}^inf dy / (y^3 / sqrt3) = sqrt3 / (2 v0^2)
    EXPECT_NEAR(blowup_time_quadrature({5, 0, 1}, 2.0, 0.0), std::sqrt(3.0) / 8.0, 1e-12);
}

TEST(RemainingTime, LogLogTailAgainstHighPrecision) {
    // mpmath (30 digits) nested quadrature of int_{1000}^inf dy / sqrt(2F(y))
    const double T = blowup_time_quadrature({3, 1, 1}, 1e3, 0.0);
    EXPECT_NEAR(T, 8.57953065156536549757e-4, 1e-10 * 8.6e-4);
    EXPECT_LT(T, kSqrt2 / 1e3);
    EXPECT_GT(T, 0.0);
    EXPECT_THROW(blowup_time_quadrature({3, 1, 1}, -1.0, 0.0), DomainError);
    EXPECT_THROW(blowup_time_quadrature({3, 0, 1}, 1.0, -10.0), DomainError);
}

TEST(OdeBlowup, FirstIntegralConservationSweep) {
    for (double p : {3.0, 5.0})
        for (double a : {-1.0, 0.0, 1.0, 2.0}) {
            const auto traj = integrate_ode({p, a, 1}, 1.0, 1.0, 1e6);
            EXPECT_LE(traj.max_relative_drift(), 1e-7) << "p=" << p << " a=" << a;
            EXPECT_LE(two_method_discrepancy(traj), 1e-6) << "p=" << p << " a=" << a;
            for (const auto& s : traj.samples) {
                EXPECT_GT(s.v, 0.0);
                EXPECT_GT(s.v_prime, 0.0);
            }
        }
}

TEST(AsymptoticRate, PurePowerRatioIsConstant) {
    const auto traj = integrate_ode({3, 0, 1}, kSqrt2, kSqrt2, 1e6);
    const auto rep = asymptotic_rate_report(traj);
    for (double r : rep.ratio) EXPECT_NEAR(r, kSqrt2, 1e-8);
}

TEST(AsymptoticRate, LogLogSlopeDecays) {
    const auto traj = integrate_ode({3, 1, 1}, 1.0, 1.0, 1e8);
    const auto slopes = dyadic_log_slopes(asymptotic_rate_report(traj), 1e-6, 1e-8);
    ASSERT_GE(slopes.size(), 5u);
    for (std::size_t k = 1; k < slopes.size(); ++k) EXPECT_LT(std::abs(slopes[k].slope), std::abs(slopes[k - 1].slope));
}

TEST(AsymptoticRate, NegativeExponentBracketRegression) {
    // Bracket recorded from this run configuration (regression golden).
    const auto traj = integrate_ode({3, -1, 1}, 1.0, 1.0, 1e8);
    const auto rep = asymptotic_rate_report(traj);
    double lo = INFINITY, hi = 0.0;
    for (double r : rep.ratio) {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    EXPECT_NEAR(lo, 1.5970286791, 1e-6 * 1.6);
    EXPECT_NEAR(hi, 40.9999981599, 1e-6 * 41.0);
}

TEST(AsymptoticRate, TooShortTrajectory) {
    const auto traj = integrate_ode({3, 0, 1}, 1.0, 1.0, 1.5);
    EXPECT_THROW(asymptotic_rate_report(traj), InsufficientData);
}
