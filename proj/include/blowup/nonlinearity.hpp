#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/quadrature.hpp"

namespace blowup {

/// Exponent p, loglog power a and spatial dimension N of
///     u_tt - Laplacian u = |u|^{p-1} u log^a(log(10 + u^2)).
struct ModelParams {
    double p = 3.0;
    double a = 0.0;
    int N = 1;

    ModelParams() = default;

    /// Rejects p <= 1, N < 1 and, unless `allow_supercritical`, exponents at or
    /// above the conformal bound (N+3)/(N-1) for N >= 2.
    ModelParams(double p_, double a_, int N_, bool allow_supercritical = false)
        : p(p_), a(a_), N(N_) {
        if (!(p > 1.0) || !std::isfinite(p)) throw ConfigError("model.p must satisfy p > 1");
        if (!std::isfinite(a)) throw ConfigError("model.a must be finite");
        if (N < 1) throw ConfigError("model.N must be a positive integer");
        if (!allow_supercritical && !subconformal()) {
            std::ostringstream msg;
            msg << "model.p = " << p << " is not subconformal for N = " << N
                << " (need p < " << (N + 3.0) / (N - 1.0) << ")";
            throw ConfigError(msg.str());
        }
    }

    bool subconformal() const { return N < 2 || p < (N + 3.0) / (N - 1.0); }

    /// Exponent of the similarity weight rho(y) = (1 - |y|^2)^alpha.
    double alpha() const { return 2.0 / (p - 1.0) - (N - 1.0) / 2.0; }
};

namespace detail {

// log(10 + u^2) without forming u^2 for huge |u|.
inline double log_10_plus_sq(double u) {
    const double au = std::abs(u);
    if (au < 1e100) return std::log(10.0 + au * au);
    const double l = std::log(au);
    return 2.0 * l + std::log1p(10.0 * std::exp(-2.0 * l));
}

}  // namespace detail

inline double eval_g(const ModelParams& m, double u) {
    if (m.a == 0.0) return 1.0;
    return std::pow(std::log(detail::log_10_plus_sq(u)), m.a);
}

inline double eval_f(const ModelParams& m, double u) {
    if (u == 0.0) return 0.0;
    return std::pow(std::abs(u), m.p - 1.0) * u * eval_g(m, u);
}

/// F(x) / |x|^{p+1} = int_0^1 z^p g(|x| z) dz. Bounded for all x, so potential
/// terms can be assembled without forming |x|^{p+1} explicitly.
inline double scaled_potential(const ModelParams& m, double x, double rel_tol = 1e-10) {
    const double ax = std::abs(x);
    if (ax == 0.0) return eval_g(m, 0.0) / (m.p + 1.0);
    if (m.a == 0.0) return 1.0 / (m.p + 1.0);
    auto integrand = [&](double z) { return std::pow(z, m.p) * eval_g(m, ax * z); };
    quad::AdaptiveOptions opt;
    opt.rel_tol = rel_tol;
    opt.max_intervals = 200;
    return quad::integrate_adaptive(integrand, 0.0, 1.0, opt).value;
}

/// Primitive F(x) = int_0^x f, even in x.
inline double eval_F(const ModelParams& m, double x) {
    if (x == 0.0) return 0.0;
    const double ax = std::abs(x);
    return std::exp((m.p + 1.0) * std::log(ax)) * scaled_potential(m, ax);
}

/// log F(x) for x != 0; finite even where F itself overflows.
inline double eval_log_F(const ModelParams& m, double x) {
    if (x == 0.0) throw DomainError("log F(0) is -infinity");
    return (m.p + 1.0) * std::log(std::abs(x)) + std::log(scaled_potential(m, x));
}

inline double eval_F1(const ModelParams& m, double x) {
    if (m.a == 0.0 || x == 0.0) return 0.0;
    const double L = detail::log_10_plus_sq(x);
    const double log_mag = (m.p + 1.0) * std::log(std::abs(x)) + (m.a - 1.0) * std::log(std::log(L)) - std::log(L);
    return -2.0 * m.a / ((m.p + 1.0) * (m.p + 1.0)) * std::exp(log_mag);
}

/// Remainder of F(x) = x f(x)/(p+1) + F1(x) + F2(x). Assembled on the
/// |x|^{p+1}-scaled level so the cancellation happens between O(1) numbers.
inline double eval_F2(const ModelParams& m, double x) {
    if (x == 0.0 || m.a == 0.0) return 0.0;
    const double ax = std::abs(x);
    const double L = detail::log_10_plus_sq(x);
    const double scaled_F = scaled_potential(m, ax);
    const double scaled_xf = eval_g(m, ax) / (m.p + 1.0);
    const double scaled_F1 =
        -2.0 * m.a / ((m.p + 1.0) * (m.p + 1.0)) * std::pow(std::log(L), m.a - 1.0) / L;
    return std::exp((m.p + 1.0) * std::log(ax)) * (scaled_F - scaled_xf - scaled_F1);
}

struct Bracket {
    double lo = 0.0;
    double hi = 1.0;
    bool contains(double v) const { return v >= lo && v <= hi; }
};

struct PotentialBoundEntry {
    double u;
    double ratio1;  ///< F(u) / (|u|^{p+1} g(u))
    double ratio2;  ///< |F2(u)| / (|u|^{p+1} loglog^{a-1}(10+u^2) / log^2(10+u^2))
};

struct PotentialBoundReport {
    std::vector<PotentialBoundEntry> entries;
    bool ratio1_within = true;
    bool ratio2_within = true;
};

/// Evaluates the two large-|u| potential estimates as ratios against their
/// majorants. Every ratio is formed in |u|^{p+1}-scaled form, so the grid
/// may extend past the double range of |u|^{p+1}.
inline PotentialBoundReport check_potential_bounds(const ModelParams& m, std::span<const double> u_grid,
                                              double u_min = 10.0, Bracket bracket1 = {0.0, 1e300},
                                              Bracket bracket2 = {0.0, 1e300}) {
    PotentialBoundReport report;
    for (double u : u_grid) {
        if (std::abs(u) < u_min) {
            std::ostringstream msg;
            msg << "check_potential_bounds: |u| = " << std::abs(u) << " below u_min = " << u_min;
            throw DomainError(msg.str());
        }
        const double L = detail::log_10_plus_sq(u);
        const double g = eval_g(m, u);
        const double scaled_F = scaled_potential(m, u);
        const double scaled_F1 =
            -2.0 * m.a / ((m.p + 1.0) * (m.p + 1.0)) * std::pow(std::log(L), m.a - 1.0) / L;
        const double scaled_F2 = scaled_F - g / (m.p + 1.0) - scaled_F1;
        const double majorant2 = std::pow(std::log(L), m.a - 1.0) / (L * L);
        PotentialBoundEntry e{u, scaled_F / g, std::abs(scaled_F2) / majorant2};
        report.ratio1_within = report.ratio1_within && bracket1.contains(e.ratio1);
        report.ratio2_within = report.ratio2_within && bracket2.contains(e.ratio2);
        report.entries.push_back(e);
    }
    return report;
}

inline void require_s_above_one(double s, const char* who) {
    if (!(s > 1.0)) {
        std::ostringstream msg;
        msg << who << ": similarity time s = " << s << " must exceed 1";
        throw DomainError(msg.str());
    }
}

inline double eval_log_phi(const ModelParams& m, double s) {
    require_s_above_one(s, "eval_phi");
    return 2.0 * s / (m.p - 1.0) - m.a / (m.p - 1.0) * std::log(std::log(s));
}

/// phi(s) = e^{2s/(p-1)} log(s)^{-a/(p-1)}; equals psi_{T0}(T0 - e^{-s}).
inline double eval_phi(const ModelParams& m, double s) { return std::exp(eval_log_phi(m, s)); }

inline double eval_gamma(const ModelParams& m, double s) {
    require_s_above_one(s, "eval_gamma");
    if (m.a == 0.0) return 0.0;
    const double p = m.p, a = m.a, L = std::log(s), q = (p - 1.0) * (p - 1.0);
    return a * (p + 3.0) / (q * s * L) - a * (a + p - 1.0) / (q * s * s * L * L) - a / ((p - 1.0) * L * s * s);
}

inline double eval_log_psi(const ModelParams& m, double T0, double t) {
    const double tau = T0 - t;
    if (!(tau > 0.0 && tau < std::exp(-1.0))) {
        std::ostringstream msg;
        msg << "eval_psi: T0 - t = " << tau << " outside (0, 1/e)";
        throw DomainError(msg.str());
    }
    return -2.0 / (m.p - 1.0) * std::log(tau) - m.a / (m.p - 1.0) * std::log(std::log(-std::log(tau)));
}

/// Leading-order ODE blow-up envelope psi_{T0}(t).
inline double eval_psi(const ModelParams& m, double T0, double t) { return std::exp(eval_log_psi(m, T0, t)); }

}  // namespace blowup
