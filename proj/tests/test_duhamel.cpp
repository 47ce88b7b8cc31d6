#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "blowup/duhamel.hpp"
#include "blowup/wave_solver.hpp"

using namespace blowup;

namespace {

constexpr double kPi = std::numbers::pi;

Grid line(double L, double h) { return Grid::line(-L, L, static_cast<std::size_t>(std::llround(2.0 * L / h)) + 1); }

// cos^2(pi x / 0.6) on |x| < 0.3 and its antiderivative
double bump(double x) { return std::abs(x) < 0.3 ? std::pow(std::cos(kPi * x / 0.6), 2) : 0.0; }
double bump_integral(double x) {
    const double c = std::clamp(x, -0.3, 0.3);
    const double k = kPi / 0.6;
    return c / 2.0 + std::sin(2.0 * k * c) / (4.0 * k) + 0.15;
}

double free_energy(const Grid& g, const FreeState& s) {
    double E = 0.0;
    for (std::size_t i = 2; i + 2 < g.n; ++i) {
        const double ux = (8.0 * (s.u[i + 1] - s.u[i - 1]) - (s.u[i + 2] - s.u[i - 2])) / (12.0 * g.h);
        E += g.h * 0.5 * (s.ut[i] * s.ut[i] + ux * ux);
    }
    return E;
}

WaveField reference_run(const ModelParams& m, const Grid& g, const std::vector<double>& u0, const std::vector<double>& u1,
                        const PicardState& st) {
    RecordingPlan plan;
    plan.times.assign(st.slice_times.begin() + 1, st.slice_times.end());
    return evolve(m, g, u0, u1, 0.5, {1e6, st.t0_local + 1e-9}, plan);
}

}  // namespace

TEST(CumulativeIntegral, ExactForCubics) {
    const auto g = Grid::line(0.0, 2.0, 21);
    const CumulativeIntegral G(g, g.sample([](double x) { return x * x * x - x; }));
    auto exact = [](double x) { return x * x * x * x / 4.0 - x * x / 2.0; };
    for (double x : {0.0, 0.37, 1.0, 1.55, 2.0}) EXPECT_NEAR(G(x), exact(x), 1e-13);
    EXPECT_NEAR(G.between(0.3, 1.7), exact(1.7) - exact(0.3), 1e-13);
    EXPECT_NEAR(G(5.0), exact(2.0), 1e-13);  // clamped
    EXPECT_THROW(CumulativeIntegral(g, std::vector<double>(3, 0.0)), ConfigError);
}

TEST(FreeEvolution, IdentityAtTimeZero) {
    const auto g = line(1.0, 0.01);
    const auto u0 = g.sample([](double x) { return std::exp(-10.0 * x * x); });
    const auto u1 = g.sample([](double x) { return x * std::exp(-10.0 * x * x); });
    const auto s = free_evolution(g, u0, u1, 0.0);
    EXPECT_EQ(s.u, u0);
    EXPECT_EQ(s.ut, u1);
    EXPECT_THROW(free_evolution(g, u0, u1, -0.1), DomainError);
    EXPECT_THROW(free_evolution(g, std::vector<double>(5, 0.0), u1, 0.1), ConfigError);
}

TEST(FreeEvolution, DAlembertHalfIntegralOfTheBump) {
    const auto g = line(1.5, 0.005);
    const std::vector<double> z(g.n, 0.0);
    const auto u1 = g.sample(bump);
    for (double t : {0.1, 0.35, 0.8}) {
        const auto u = kernel_apply(g, t, z, u1);
        for (std::size_t i = 0; i < g.n; ++i) {
            const double x = g.x(i);
            if (std::abs(x) > 1.5 - t) continue;
            EXPECT_NEAR(u[i], 0.5 * (bump_integral(x + t) - bump_integral(x - t)), 2e-7) << "x=" << x << " t=" << t;
        }
    }
}

TEST(FreeEvolution, DAlembertTranslatesPositionData) {
    const auto g = line(2.0, 0.005);
    auto gauss = [](double x) { return std::exp(-10.0 * x * x); };
    const auto s = free_evolution(g, g.sample(gauss), std::vector<double>(g.n, 0.0), 0.6);
    for (std::size_t i = 0; i < g.n; ++i) {
        const double x = g.x(i);
        if (std::abs(x) > 1.4) continue;
        EXPECT_NEAR(s.u[i], 0.5 * (gauss(x - 0.6) + gauss(x + 0.6)), 1e-8);
    }
}

TEST(FreeEvolution, RadialConstantVelocityGivesT) {
    const auto g = Grid::radial(2.0, 201);
    const std::vector<double> z(g.n, 0.0), one(g.n, 1.0);
    for (double t : {0.2, 0.7}) {
        const auto s = free_evolution(g, z, one, t);
        for (std::size_t i = 0; i < g.n; ++i) {
            if (g.x(i) > 2.0 - t) continue;
            EXPECT_NEAR(s.u[i], t, 1e-13);
            EXPECT_NEAR(s.ut[i], 1.0, 1e-12);
        }
    }
}

TEST(FreeEvolution, RadialGaussianVelocityClosedForm) {
    // u1 = e^{-r^2}: u(r, t) = (e^{-(r-t)^2} - e^{-(r+t)^2}) / (4 r), u(0, t) = t e^{-t^2}
    const auto g = Grid::radial(3.0, 601);
    const std::vector<double> z(g.n, 0.0);
    const auto u1 = g.sample([](double r) { return std::exp(-r * r); });
    const double t = 0.5;
    const auto u = kernel_apply(g, t, z, u1);
    EXPECT_NEAR(u[0], t * std::exp(-t * t), 1e-7);
    for (std::size_t i = 1; i < g.n; ++i) {
        const double r = g.x(i);
        if (r > 2.5) continue;
        EXPECT_NEAR(u[i], (std::exp(-(r - t) * (r - t)) - std::exp(-(r + t) * (r + t))) / (4.0 * r), 1e-7);
    }
}

TEST(FreeEvolution, PreservesTheFreeEnergy) {
    const auto g = line(3.0, 0.005);
    const auto u0 = g.sample([](double x) { return std::exp(-20.0 * x * x); });
    const auto u1 = g.sample([](double x) { return std::sin(3.0 * x) * std::exp(-20.0 * x * x); });
    const double E0 = free_energy(g, free_evolution(g, u0, u1, 0.0));
    for (double t : {0.3, 0.9, 1.5}) EXPECT_NEAR(free_energy(g, free_evolution(g, u0, u1, t)), E0, 1e-6 * E0);
}

TEST(Picard, ZeroDataConvergesImmediately) {
    const auto g = line(1.0, 0.01);
    const std::vector<double> z(g.n, 0.0);
    const auto st = picard_solve({3, 1, 1}, g, z, z, 0.5);
    EXPECT_TRUE(st.converged);
    EXPECT_EQ(st.sup_diffs.size(), 1u);
    EXPECT_EQ(st.sup_diffs[0], 0.0);
    for (const auto& slice : st.solution())
        for (double v : slice) EXPECT_EQ(v, 0.0);
}

TEST(Picard, ValidatesConfiguration) {
    const auto g = line(1.0, 0.01);
    const std::vector<double> z(g.n, 0.0);
    EXPECT_THROW(picard_solve({3, 1, 1}, g, z, z, 1.2), ConfigError);
    EXPECT_THROW(picard_solve({3, 1, 1}, g, z, z, 0.0), ConfigError);
    PicardOptions few;
    few.slices = 2;
    EXPECT_THROW(picard_solve({3, 1, 1}, g, z, z, 0.5, few), ConfigError);
}

TEST(Picard, LinearNonlinearityReproducesTheFreeSolution) {
    const auto g = line(1.0, 0.01);
    const auto u0 = g.sample([](double x) { return std::exp(-10.0 * x * x); });
    const std::vector<double> u1(g.n, 0.0);
    const auto st = picard_solve({3, 0, 1}, g, u0, u1, 0.5, [](double) { return 0.0; });
    EXPECT_TRUE(st.converged);
    EXPECT_EQ(st.iterates.size(), 2u);
    EXPECT_EQ(st.solution(), st.iterates.front());
}

TEST(Picard, AgreesWithTheFiniteDifferenceSolver) {
    struct Case {
        ModelParams m;
        double amplitude;
        bool radial;
    };
    for (const Case& c : {Case{{3, 0, 1}, 0.1, false}, Case{{3, 1, 1}, 1.0, false}, Case{{2, 1, 3}, 1.0, true}}) {
        std::vector<double> diffs;
        for (double h : {0.01, 0.005}) {
            const Grid g = c.radial ? Grid::radial(1.0, static_cast<std::size_t>(std::llround(1.0 / h)) + 1) : line(1.0, h);
            const auto u0 = g.sample([&](double x) { return c.amplitude * std::exp(-10.0 * x * x); });
            const std::vector<double> u1(g.n, 0.0);
            PicardOptions opt;
            opt.slices = 20;
            const auto st = picard_solve(c.m, g, u0, u1, 0.5, opt);
            ASSERT_TRUE(st.converged);
            for (double r : st.contraction_ratios) EXPECT_LT(r, 0.5);
            const auto fd = reference_run(c.m, g, u0, u1, st);
            const double d = cone_sup_difference(st, fd);
            EXPECT_LE(d, 5.0 * (h * h + 1e-8)) << "h=" << h;
            diffs.push_back(d);
        }
        // the combined error is second order, so C = d / h^2 is stable under refinement
        EXPECT_NEAR(diffs[0] / diffs[1], 4.0, 1.0);
    }
}

TEST(Picard, LargeDataFailsToContract) {
    const auto g = line(1.0, 0.01);
    const auto u0 = g.sample([](double x) { return 30.0 * std::exp(-10.0 * x * x); });
    const std::vector<double> u1(g.n, 0.0);
    try {
        picard_solve({3, 1, 1}, g, u0, u1, 0.9);
        FAIL() << "expected a contraction failure";
    } catch (const ContractionFailure& e) {
        EXPECT_NE(std::string(e.what()).find("t0_local"), std::string::npos);
    }
}

TEST(Picard, EmpiricalBallConstantIsFinite) {
    const auto g = line(1.0, 0.01);
    const auto u0 = g.sample([](double x) { return 0.1 * std::exp(-10.0 * x * x); });
    const std::vector<double> u1(g.n, 0.0);
    const auto st = picard_solve({3, 1, 1}, g, u0, u1, 0.5);
    const double C = empirical_ball_constant(st, u0, u1);
    EXPECT_TRUE(std::isfinite(C));
    EXPECT_GT(C, 0.0);
    EXPECT_EQ(empirical_ball_constant(st, std::vector<double>(g.n, 0.0), std::vector<double>(g.n, 0.0)), 0.0);
}

TEST(Rescaling, ClosedForms) {
    const ModelParams m1{3, 1, 1};
    for (double v : {-2.0, 0.3, 1.0, 7.0}) EXPECT_DOUBLE_EQ(eval_h_lambda(m1, 1.0, v), eval_f(m1, v));
    const ModelParams m0{3, 0, 1};
    for (double lambda : {1e-8, 0.01, 1.0, 30.0}) EXPECT_DOUBLE_EQ(eval_h_lambda(m0, lambda, 1.7), std::pow(1.7, 3.0));
    // log(log(10 + e^{20})), mpmath
    EXPECT_NEAR(eval_h_lambda(m1, std::exp(-10.0), 1.0), 2.99573227458456779350, 1e-13);
    EXPECT_EQ(eval_h_lambda(m1, 0.5, 0.0), 0.0);
    EXPECT_THROW(eval_h_lambda(m1, 0.0, 1.0), DomainError);
}

TEST(Rescaling, AlgebraicIdentityOnRandomSamples) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> log_u(-3.0, 6.0), log_l(-18.0, 0.0);
    for (double a : {-1.0, 1.0, 2.0})
        for (double p : {2.0, 3.0, 5.0}) {
            const ModelParams m{p, a, 1};
            for (int k = 0; k < 100; ++k) {
                const double u = std::pow(10.0, log_u(rng)) * (k % 2 ? -1.0 : 1.0);
                const double lambda = std::exp(log_l(rng));
                const double scale = std::pow(lambda, 2.0 * p / (p - 1.0));
                const double lhs = eval_h_lambda(m, lambda, std::pow(lambda, 2.0 / (p - 1.0)) * u);
                const double fu = eval_f(m, u);
                EXPECT_LE(std::abs(lhs - scale * fu), 1e-10 * (1.0 + std::abs(fu)) * scale) << "u=" << u << " lambda=" << lambda;
            }
        }
}

TEST(Rescaling, AFactor) {
    const ModelParams m{3, 1, 1};
    EXPECT_NEAR(eval_A(m, std::exp(-std::numbers::e)), 1.0, 1e-15);
    EXPECT_NEAR(eval_A(m, std::exp(-10.0)), 1.0 / std::sqrt(std::log(10.0)), 1e-15);
    EXPECT_EQ(eval_A(m, 0.5), 1.0);
    EXPECT_EQ(eval_A({3, 0, 1}, 1e-6), 1.0);
    EXPECT_THROW(eval_A(m, -1.0), DomainError);
}

TEST(Rescaling, ProblemFromAField) {
    const ModelParams m{3, 1, 1};
    const auto g = line(1.0, 0.01);
    const auto u0 = g.sample([](double x) { return 0.5 * std::exp(-10.0 * x * x); });
    const auto u1 = g.sample([](double x) { return 0.2 * x; });
    RecordingPlan plan;
    plan.stride = 1;
    const auto f = evolve(m, g, u0, u1, 0.5, {1e6, 0.1}, plan);
    const auto id = rescaled_problem(f, 0.0, 0.0, 1.0, 0.5);
    ASSERT_EQ(id.grid.n, 101u);
    for (std::size_t k = 0; k < id.grid.n; ++k) {
        EXPECT_DOUBLE_EQ(id.f[k], u0[k + 50]);
        EXPECT_DOUBLE_EQ(id.g[k], u1[k + 50]);
    }
    EXPECT_DOUBLE_EQ(id.A(), 1.0);
    EXPECT_DOUBLE_EQ(id.h_lambda(0.7), eval_f(m, 0.7));
    EXPECT_GT(id.smallness_norm, 0.0);

    const auto small = rescaled_problem(f, 0.0, 0.05, 0.1);
    EXPECT_NEAR(small.grid.h, 0.1, 1e-12);
    EXPECT_NEAR(small.f[small.grid.n / 2], 0.1 * state_at(f, 0.05, 100, 100).u.node(0), 1e-14);
    EXPECT_LT(small.smallness_norm, id.smallness_norm);
    EXPECT_THROW(rescaled_problem(f, 0.5, 0.05, 0.8), DomainError);
    EXPECT_THROW(rescaled_problem(f, 0.0, 0.05, 0.0), ConfigError);
}

TEST(Rescaling, ContractionCsv) {
    const auto g = line(1.0, 0.01);
    const auto u0 = g.sample([](double x) { return 0.1 * std::exp(-10.0 * x * x); });
    const auto st = picard_solve({3, 1, 1}, g, u0, std::vector<double>(g.n, 0.0), 0.5);
    const auto path = std::filesystem::temp_directory_path() / "blowup_contraction_test.csv";
    write_contraction_csv(st, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "iter,sup_diff,ratio");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, st.sup_diffs.size());
    std::filesystem::remove(path);
}
