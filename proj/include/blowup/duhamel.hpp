#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <filesystem>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/grid.hpp"
#include "blowup/io.hpp"
#include "blowup/nonlinearity.hpp"
#include "blowup/quadrature.hpp"
#include "blowup/wave_solver.hpp"

namespace blowup {

namespace detail {

// Antiderivatives (from 0) of the cubic Lagrange basis on nodes -1, 0, 1, 2.
inline std::array<double, 4> cubic_basis_integral(double th) {
    const double t2 = th * th, t3 = t2 * th, t4 = t3 * th;
    return {-(t4 / 4.0 - t3 + t2) / 6.0, (t4 / 4.0 - 2.0 * t3 / 3.0 - t2 / 2.0 + 2.0 * th) / 2.0,
            -(t4 / 4.0 - t3 / 3.0 - t2) / 2.0, (t4 / 4.0 - t2 / 2.0) / 6.0};
}

}  // namespace detail

/// G(x) = int_{x_min}^{x} v for node samples v, exact for the piecewise cubic
/// interpolant (fourth order). Radial samples with parity -1 (r * phi) are
/// extended oddly across r = 0 so G is even there.
class CumulativeIntegral {
public:
    CumulativeIntegral(const Grid& grid, std::vector<double> values, int parity = 1)
        : grid_(grid), v_(std::move(values)), parity_(parity) {
        if (v_.size() != grid_.n || grid_.n < 4) throw ConfigError("cumulative integral needs >= 4 samples on the grid");
        G_.assign(grid_.n, 0.0);
        for (std::size_t i = 0; i + 1 < grid_.n; ++i) G_[i + 1] = G_[i] + cell(i, 0.0, 1.0);
    }

    /// Integral from the grid start to x (clamped to the grid range).
    double operator()(double x) const {
        const double q = std::clamp((x - grid_.x_min) / grid_.h, 0.0, static_cast<double>(grid_.n - 1));
        const auto i = std::min(static_cast<std::size_t>(q), grid_.n - 2);
        return G_[i] + cell(i, 0.0, q - static_cast<double>(i));
    }

    /// Integral over [a, b] (both clamped).
    double between(double a, double b) const { return (*this)(b) - (*this)(a); }

private:
    double value(long j) const {
        if (j < 0) return radial() ? parity_ * v_[static_cast<std::size_t>(-j)] : v_[0];
        return v_[static_cast<std::size_t>(j)];
    }
    bool radial() const { return grid_.geometry == Geometry::Radial3D; }

    // int_{x_i + a h}^{x_i + b h} of the cubic through the stencil around cell i.
    double cell(std::size_t i, double a, double b) const {
        long j = static_cast<long>(i) - 1;
        if (j < 0 && !radial()) j = 0;
        if (j + 3 > static_cast<long>(grid_.n) - 1) j = static_cast<long>(grid_.n) - 4;
        const double off = static_cast<double>(static_cast<long>(i) - (j + 1));
        const auto Pb = detail::cubic_basis_integral(off + b);
        const auto Pa = detail::cubic_basis_integral(off + a);
        double s = 0.0;
        for (int k = 0; k < 4; ++k) s += (Pb[k] - Pa[k]) * value(j + k);
        return s * grid_.h;
    }

    Grid grid_;
    std::vector<double> v_;
    std::vector<double> G_;
    int parity_;
};

struct FreeState {
    std::vector<double> u;
    std::vector<double> ut;
};

namespace detail {

inline double clamp_to(const Grid& g, double x) { return std::clamp(x, g.x_min, g.x_max()); }

inline double interp_clamped(const GridWindow& w, double x) { return w.interpolate(clamp_to(w.grid(), x)); }

}  // namespace detail

/// Free evolution  d_t R(t) * u0 + R(t) * u1  (and its time derivative) on the
/// grid nodes: d'Alembert for the line, exact spherical means of radial data
/// in R^3 through the odd extension of r * phi. Arguments that leave the grid
/// are clamped, so only nodes inside the domain of dependence are exact.
inline FreeState free_evolution(const Grid& g, std::span<const double> u0, std::span<const double> u1, double t) {
    if (!(t >= 0.0)) throw DomainError("free_evolution: t must be non-negative");
    if (u0.size() != g.n || u1.size() != g.n) throw ConfigError("free_evolution: data must match the grid");
    FreeState out{std::vector<double>(u0.begin(), u0.end()), std::vector<double>(u1.begin(), u1.end())};
    if (t == 0.0) return out;
    if (g.geometry == Geometry::Line) {
        const GridWindow w0(g, 0, {u0.begin(), u0.end()});
        const GridWindow w1(g, 0, {u1.begin(), u1.end()});
        const GridWindow d0 = w0.derivative();
        const CumulativeIntegral G1(g, {u1.begin(), u1.end()});
        for (std::size_t i = 0; i < g.n; ++i) {
            const double x = g.x(i);
            out.u[i] = 0.5 * (detail::interp_clamped(w0, x + t) + detail::interp_clamped(w0, x - t)) +
                       0.5 * G1.between(x - t, x + t);
            out.ut[i] = 0.5 * (detail::interp_clamped(d0, x + t) - detail::interp_clamped(d0, x - t)) +
                        0.5 * (detail::interp_clamped(w1, x + t) + detail::interp_clamped(w1, x - t));
        }
        return out;
    }
    // q = r phi is odd; t M_phi(r, t) = (G(r+t) - G(r-t)) / (2r) with G even.
    std::vector<double> q0(g.n), q1(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        q0[i] = g.x(i) * u0[i];
        q1[i] = g.x(i) * u1[i];
    }
    const GridWindow Q0(g, 0, q0, -1), Q1(g, 0, q1, -1);
    const GridWindow dQ0 = Q0.derivative(), ddQ0 = Q0.second_derivative();
    const GridWindow dQ1 = Q1.derivative();
    const CumulativeIntegral G1(g, q1, -1);
    auto Gv = [&](double x) { return G1(std::abs(x)); };
    auto odd = [&](const GridWindow& w, double x) {
        // q and q'' odd, q' even; evaluate through |x| with the window parity
        const double v = detail::interp_clamped(w, std::abs(x));
        return x < 0.0 ? w.parity() * v : v;
    };
    for (std::size_t i = 0; i < g.n; ++i) {
        const double r = g.x(i);
        if (i == 0) {
            out.u[i] = odd(dQ0, t) + odd(Q1, t);
            out.ut[i] = odd(ddQ0, t) + odd(dQ1, t);
            continue;
        }
        out.u[i] = (odd(Q0, r + t) + odd(Q0, r - t)) / (2.0 * r) + (Gv(r + t) - Gv(r - t)) / (2.0 * r);
        out.ut[i] = (odd(dQ0, r + t) - odd(dQ0, r - t)) / (2.0 * r) + (odd(Q1, r + t) + odd(Q1, r - t)) / (2.0 * r);
    }
    return out;
}

/// Free evolution value only (N = 1 line or N = 3 radial grid).
inline std::vector<double> kernel_apply(const Grid& g, double t, std::span<const double> u0, std::span<const double> u1) {
    return free_evolution(g, u0, u1, t).u;
}

/// R(tau) * phi on the grid nodes for every node (used inside the Duhamel integral).
inline void add_kernel_term(const Grid& g, const CumulativeIntegral& G, double tau, double weight, std::vector<double>& acc) {
    if (tau <= 0.0) return;
    if (g.geometry == Geometry::Line) {
        for (std::size_t i = 0; i < g.n; ++i) acc[i] += weight * 0.5 * G.between(g.x(i) - tau, g.x(i) + tau);
        return;
    }
    for (std::size_t i = 0; i < g.n; ++i) {
        const double r = g.x(i);
        if (i == 0) {
            // (G(r+tau) - G(r-tau)) / 2r -> G'(tau) = q(tau); evaluated by a
            // symmetric difference of G over one cell.
            const double d = 0.5 * g.h;
            acc[i] += weight * (G(tau + d) - G(std::abs(tau - d))) / (2.0 * d);
            continue;
        }
        acc[i] += weight * (G(r + tau) - G(std::abs(r - tau))) / (2.0 * r);
    }
}

struct PicardOptions {
    std::size_t slices = 40;       ///< uniform time slices on [0, t0_local]
    std::size_t max_iter = 60;
    double tolerance = 1e-8;       ///< sup-norm Cauchy tolerance on the cone
    int gauss_points = 4;          ///< per slice interval
    double x0 = 0.0;               ///< cone apex base centre (0 for radial)
};

struct PicardState {
    ModelParams params;
    Grid grid;
    double t0_local = 0.0;
    double cone_radius = 0.0;  ///< base radius R: the cone is |x - x0| <= R - t
    std::vector<double> slice_times;
    /// iterates[k][j] = values at slice j of iterate k (iterate 0 = free evolution).
    std::vector<std::vector<std::vector<double>>> iterates;
    std::vector<double> sup_diffs;
    std::vector<double> contraction_ratios;
    bool converged = false;

    const std::vector<std::vector<double>>& solution() const { return iterates.back(); }
    bool in_cone(std::size_t i, double t) const {
        const double d = grid.geometry == Geometry::Radial3D ? grid.x(i) : std::abs(grid.x(i) - x0);
        return d <= cone_radius - t + 1e-12;
    }
    double x0 = 0.0;
};

/// Picard iteration u^{k+1} = Psi(u^k) from the free evolution, with the
/// Duhamel time integral by composite Gauss-Legendre per slice interval and
/// cubic Lagrange interpolation of the f(u) slices in time.
template <class Nonlinearity>
    requires std::invocable<Nonlinearity&, double>
PicardState picard_solve(const ModelParams& m, const Grid& g, std::span<const double> u0, std::span<const double> u1,
                         double t0_local, Nonlinearity&& f, const PicardOptions& opt = {}) {
    if (!(t0_local > 0.0)) throw ConfigError("duhamel.t0_local must be positive");
    if (opt.slices < 3) throw ConfigError("duhamel.slices must be at least 3");
    PicardState st;
    st.params = m;
    st.grid = g;
    st.t0_local = t0_local;
    st.x0 = g.geometry == Geometry::Radial3D ? 0.0 : opt.x0;
    st.cone_radius = g.geometry == Geometry::Radial3D ? g.x_max() : std::min(st.x0 - g.x_min, g.x_max() - st.x0);
    if (t0_local > st.cone_radius) {
        std::ostringstream msg;
        msg << "duhamel.t0_local = " << t0_local << " exceeds the cone base radius " << st.cone_radius;
        throw ConfigError(msg.str());
    }
    const std::size_t M = opt.slices;
    const double dt = t0_local / static_cast<double>(M);
    for (std::size_t j = 0; j <= M; ++j) st.slice_times.push_back(dt * static_cast<double>(j));

    std::vector<std::vector<double>> free(M + 1);
    for (std::size_t j = 0; j <= M; ++j) free[j] = free_evolution(g, u0, u1, st.slice_times[j]).u;
    st.iterates.push_back(free);

    const auto rule = quad::gauss_legendre(opt.gauss_points);
    const int parity = g.geometry == Geometry::Radial3D ? -1 : 1;
    int growth_streak = 0;
    for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
        const auto& cur = st.iterates.back();
        std::vector<CumulativeIntegral> G;
        G.reserve(M + 1);
        for (std::size_t j = 0; j <= M; ++j) {
            std::vector<double> v(g.n);
            for (std::size_t i = 0; i < g.n; ++i) {
                const double fi = f(cur[j][i]);
                v[i] = parity < 0 ? g.x(i) * fi : fi;
            }
            G.emplace_back(g, std::move(v), parity);
        }
        std::vector<std::vector<double>> next = free;
        for (std::size_t target = 1; target <= M; ++target) {
            const double t = st.slice_times[target];
            for (std::size_t j = 0; j < target; ++j) {
                // cubic Lagrange in time through 4 slices around [s_j, s_{j+1}]
                std::size_t base = j == 0 ? 0 : j - 1;
                base = std::min(base, M - 3);
                for (int k = 0; k < opt.gauss_points; ++k) {
                    const double sigma = st.slice_times[j] + 0.5 * dt * (1.0 + rule.nodes[k]);
                    const double wq = 0.5 * dt * rule.weights[k];
                    const double th = (sigma - st.slice_times[base]) / dt;
                    const double L[4] = {-(th - 1) * (th - 2) * (th - 3) / 6.0, th * (th - 2) * (th - 3) / 2.0,
                                         -th * (th - 1) * (th - 3) / 2.0, th * (th - 1) * (th - 2) / 6.0};
                    for (int l = 0; l < 4; ++l) add_kernel_term(g, G[base + l], t - sigma, wq * L[l], next[target]);
                }
            }
        }
        double diff = 0.0, sup = 0.0;
        bool finite = true;
        for (std::size_t j = 0; j <= M; ++j)
            for (std::size_t i = 0; i < g.n; ++i) {
                if (!std::isfinite(next[j][i])) finite = false;
                if (!st.in_cone(i, st.slice_times[j])) continue;
                diff = std::max(diff, std::abs(next[j][i] - cur[j][i]));
                sup = std::max(sup, std::abs(next[j][i]));
            }
        st.iterates.push_back(std::move(next));
        if (!finite || !std::isfinite(diff)) {
            st.sup_diffs.push_back(diff);
            throw ContractionFailure("picard_solve: iterate became non-finite; reduce duhamel.t0_local",
                                     st.contraction_ratios);
        }
        if (!st.sup_diffs.empty()) {
            const double prev = st.sup_diffs.back();
            const double ratio = prev > 0.0 ? diff / prev : 0.0;
            st.contraction_ratios.push_back(ratio);
            growth_streak = ratio > 1.0 ? growth_streak + 1 : 0;
        }
        st.sup_diffs.push_back(diff);
        if (diff <= opt.tolerance * std::max(1.0, sup)) {
            st.converged = true;
            return st;
        }
        if (growth_streak >= 3) {
            std::ostringstream msg;
            msg << "picard_solve: sup-norm differences grew for 3 consecutive iterations (last ratio "
                << st.contraction_ratios.back() << "); reduce duhamel.t0_local below " << t0_local;
            throw ContractionFailure(msg.str(), st.contraction_ratios);
        }
    }
    return st;
}

inline PicardState picard_solve(const ModelParams& m, const Grid& g, std::span<const double> u0,
                                std::span<const double> u1, double t0_local, const PicardOptions& opt = {}) {
    return picard_solve(m, g, u0, u1, t0_local, [&m](double v) { return eval_f(m, v); }, opt);
}

/// Largest sup-norm difference on the cone between the Picard solution and a
/// finite-difference field at the slice times.
inline double cone_sup_difference(const PicardState& st, const WaveField& field) {
    double worst = 0.0;
    for (std::size_t j = 0; j < st.slice_times.size(); ++j) {
        const FieldState fs = state_at(field, st.slice_times[j], 0, field.grid.n - 1);
        for (std::size_t i = 0; i < st.grid.n; ++i) {
            if (!st.in_cone(i, st.slice_times[j])) continue;
            worst = std::max(worst, std::abs(st.solution()[j][i] - fs.u.node(i)));
        }
    }
    return worst;
}

/// Empirical ball constant: sup_t max(|v|_{H1(B_t)}, |v_t|_{L2(B_t)}) over the
/// cone sections B_t, divided by |(u0, u1)|_{H1 x L2} on the base.
inline double empirical_ball_constant(const PicardState& st, std::span<const double> u0, std::span<const double> u1) {
    const auto& g = st.grid;
    const bool radial = g.geometry == Geometry::Radial3D;
    auto wt = [&](std::size_t i) { return radial ? 4.0 * std::numbers::pi * g.x(i) * g.x(i) : 1.0; };
    auto norms = [&](const std::vector<double>& v, const std::vector<double>* vt, double t) {
        double h1 = 0.0, l2 = 0.0;
        for (std::size_t i = 0; i < g.n; ++i) {
            if (!st.in_cone(i, t)) continue;
            double dv = 0.0;
            if (i + 1 < g.n && i > 0) dv = (v[i + 1] - v[i - 1]) / (2.0 * g.h);
            else if (i + 1 < g.n) dv = radial ? 0.0 : (v[i + 1] - v[i]) / g.h;
            h1 += g.h * wt(i) * (v[i] * v[i] + dv * dv);
            if (vt) l2 += g.h * wt(i) * (*vt)[i] * (*vt)[i];
        }
        return std::max(std::sqrt(h1), std::sqrt(l2));
    };
    std::vector<double> d0(u0.begin(), u0.end()), d1(u1.begin(), u1.end());
    const double base = std::hypot(norms(d0, nullptr, 0.0), norms(d1, nullptr, 0.0));
    if (!(base > 0.0)) return 0.0;
    const auto& sol = st.solution();
    const std::size_t M = sol.size() - 1;
    const double dt = st.slice_times[1] - st.slice_times[0];
    double sup = 0.0;
    for (std::size_t j = 0; j <= M; ++j) {
        std::vector<double> vt(g.n);
        for (std::size_t i = 0; i < g.n; ++i) {
            if (j == 0) vt[i] = u1[i];
            else if (j == M) vt[i] = (3.0 * sol[j][i] - 4.0 * sol[j - 1][i] + sol[j - 2][i]) / (2.0 * dt);
            else vt[i] = (sol[j + 1][i] - sol[j - 1][i]) / (2.0 * dt);
        }
        sup = std::max(sup, norms(sol[j], &vt, st.slice_times[j]));
    }
    return sup / base;
}

/// h_lambda(v) = |v|^{p-1} v log^a(log(10 + lambda^{-4/(p-1)} v^2)).
inline double eval_h_lambda(const ModelParams& m, double lambda, double v) {
    if (!(lambda > 0.0)) throw DomainError("h_lambda: lambda must be positive");
    if (v == 0.0) return 0.0;
    const double base = std::pow(std::abs(v), m.p - 1.0) * v;
    if (m.a == 0.0) return base;
    const double L = 2.0 * std::log(std::abs(v)) - 4.0 / (m.p - 1.0) * std::log(lambda);
    const double inner = L > 700.0 ? L + std::log1p(10.0 * std::exp(-L)) : std::log(10.0 + std::exp(L));
    return base * std::pow(std::log(inner), m.a);
}

/// A(lambda) = log^{-a/(p-1)}(-log lambda) for lambda < 1/e, 1 otherwise.
inline double eval_A(const ModelParams& m, double lambda) {
    if (!(lambda > 0.0)) throw DomainError("A(lambda): lambda must be positive");
    if (lambda >= std::exp(-1.0)) return 1.0;
    return std::pow(std::log(-std::log(lambda)), -m.a / (m.p - 1.0));
}

struct RescaledProblem {
    ModelParams params;
    double lambda = 1.0;
    Grid grid;               ///< unit-scale grid, node spacing h / lambda
    std::vector<double> f;   ///< lambda^{2/(p-1)} u(t1, lambda x + x0)
    std::vector<double> g;   ///< lambda^{2/(p-1)+1} u_t(t1, lambda x + x0)
    double smallness_norm = 0.0;  ///< |(f, g)|_{H1 x L2} over the sampled unit-scale ball

    double h_lambda(double v) const { return eval_h_lambda(params, lambda, v); }
    double A() const { return eval_A(params, lambda); }
};

/// Rescaled data on the unit-scale ball B(0, radius) around x0 at time t1.
inline RescaledProblem rescaled_problem(const WaveField& field, double x0, double t1, double lambda,
                                        double radius = 1.0) {
    if (!(lambda > 0.0)) throw ConfigError("rescaling lambda must be positive");
    const Grid& fg = field.grid;
    const bool radial = fg.geometry == Geometry::Radial3D;
    if (radial && x0 != 0.0) throw DomainError("rescaled_problem: radial fields only support x0 = 0");
    const double lo = radial ? 0.0 : x0 - lambda * radius, hi = x0 + lambda * radius;
    if (lo < fg.x_min - 1e-12 || hi > fg.x_max() + 1e-12) throw DomainError("rescaled_problem: region exits the field");
    const auto [i_lo, i_hi] = node_window(fg, lo, hi, 0);
    const FieldState st = state_at(field, t1, i_lo, i_hi);
    RescaledProblem rp;
    rp.params = field.params;
    rp.lambda = lambda;
    const double beta = 2.0 / (rp.params.p - 1.0);
    const double cu = std::pow(lambda, beta), cv = std::pow(lambda, beta + 1.0);
    rp.grid = Grid{fg.geometry, (fg.x(i_lo) - x0) / lambda, fg.h / lambda, i_hi - i_lo + 1};
    for (std::size_t k = 0; k < rp.grid.n; ++k) {
        rp.f.push_back(cu * st.u.node(k));
        rp.g.push_back(cv * st.ut.node(k));
    }
    double total = 0.0;
    for (std::size_t k = 0; k < rp.grid.n; ++k) {
        const double x = rp.grid.x(k);
        const double w = (k == 0 || k + 1 == rp.grid.n ? 0.5 : 1.0) * rp.grid.h *
                         (radial ? 4.0 * std::numbers::pi * x * x : 1.0);
        double df = 0.0;
        if (k > 0 && k + 1 < rp.grid.n) df = (rp.f[k + 1] - rp.f[k - 1]) / (2.0 * rp.grid.h);
        else if (k + 1 < rp.grid.n) df = (rp.f[k + 1] - rp.f[k]) / rp.grid.h;
        else df = (rp.f[k] - rp.f[k - 1]) / rp.grid.h;
        total += w * (rp.f[k] * rp.f[k] + df * df + rp.g[k] * rp.g[k]);
    }
    rp.smallness_norm = std::sqrt(total);
    return rp;
}

inline void write_contraction_csv(const PicardState& st, const std::filesystem::path& path) {
    io::CsvWriter csv(path, {"iter", "sup_diff", "ratio"});
    for (std::size_t k = 0; k < st.sup_diffs.size(); ++k) {
        const double ratio = k == 0 ? std::nan("") : st.contraction_ratios[k - 1];
        csv.row({static_cast<double>(k + 1), st.sup_diffs[k], ratio});
    }
}

}  // namespace blowup
