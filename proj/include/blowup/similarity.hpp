#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/io.hpp"
#include "blowup/nonlinearity.hpp"
#include "blowup/quadrature.hpp"
#include "blowup/wave_solver.hpp"

namespace blowup {

/// Quadrature nodes on the truncated unit ball |y| <= 1 - epsilon: composite
/// Gauss-Legendre panels with breakpoints 1 - epsilon 2^k, so both 1 - epsilon
/// and 1 - 2 epsilon are breakpoints. For N = 1 the nodes cover [-(1-eps), 1-eps];
/// for N >= 2 they are radii and the weights carry |S^{N-1}| r^{N-1}.
struct BallGrid {
    int N = 1;
    double epsilon = 1e-3;
    std::vector<double> y;
    std::vector<double> weight;
    /// Node lies in the outermost shell 1 - 2 epsilon < |y| <= 1 - epsilon.
    std::vector<char> outer;

    std::size_t size() const { return y.size(); }
};

inline BallGrid make_ball_grid(int N, double epsilon = 1e-3, int points_per_panel = 16, int inner_panels = 2) {
    if (N < 1) throw ConfigError("ball grid dimension must be positive");
    if (!(epsilon > 0.0 && epsilon <= 0.2)) throw ConfigError("similarity.epsilon_w must lie in (0, 0.2]");
    if (points_per_panel < 2 || inner_panels < 1) throw ConfigError("ball grid needs >= 2 points per panel");
    std::vector<double> breaks;
    int kmax = 0;
    while (epsilon * std::ldexp(1.0, kmax + 1) < 0.5) ++kmax;
    const double first = 1.0 - epsilon * std::ldexp(1.0, kmax);
    for (int j = 0; j <= inner_panels; ++j) breaks.push_back(first * j / inner_panels);
    for (int k = kmax - 1; k >= 0; --k) breaks.push_back(1.0 - epsilon * std::ldexp(1.0, k));

    const auto rule = quad::gauss_legendre(points_per_panel);
    BallGrid g;
    g.N = N;
    g.epsilon = epsilon;
    const double sphere = N == 1 ? 1.0 : 2.0 * std::pow(std::numbers::pi, 0.5 * N) / std::tgamma(0.5 * N);
    for (std::size_t b = 0; b + 1 < breaks.size(); ++b) {
        const double lo = breaks[b], hi = breaks[b + 1];
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        const bool is_outer = b + 2 == breaks.size();
        for (int k = 0; k < points_per_panel; ++k) {
            const double r = mid + half * rule.nodes[k];
            const double w = half * rule.weights[k];
            if (N == 1) {
                for (double sign : {-1.0, 1.0}) {
                    g.y.push_back(sign * r);
                    g.weight.push_back(w);
                    g.outer.push_back(is_outer);
                }
            } else {
                g.y.push_back(r);
                g.weight.push_back(w * sphere * std::pow(r, N - 1));
                g.outer.push_back(is_outer);
            }
        }
    }
    return g;
}

/// Pointwise similarity data: w, its s-derivative, the radial (N >= 2) or
/// y (N = 1) derivative, and the second derivatives used by the w-equation.
struct FrameSample {
    double w = 0.0;
    double ws = 0.0;
    double dw = 0.0;
    double dww = 0.0;
    double dws = 0.0;
};

struct FramePoint {
    double y;
    double w;
    double ws;
    double dw;
};

/// w = u / psi_{T0} on the truncated unit ball at similarity time s.
struct SimilarFrame {
    ModelParams params;
    double x0 = 0.0;
    double T0 = 0.0;
    double s = 0.0;
    BallGrid grid;
    std::vector<FrameSample> values;

    double epsilon_w() const { return grid.epsilon; }
    FramePoint point(std::size_t k) const { return {grid.y[k], values[k].w, values[k].ws, values[k].dw}; }
};

template <class Fn>
SimilarFrame make_frame(const ModelParams& m, double s, const BallGrid& grid, Fn&& sample, double x0 = 0.0,
                        double T0 = 0.0) {
    require_s_above_one(s, "make_frame");
    if (grid.N != m.N) throw ConfigError("ball grid dimension differs from model.N");
    SimilarFrame f{m, x0, T0, s, grid, {}};
    f.values.reserve(grid.size());
    for (double y : grid.y) f.values.push_back(sample(y));
    return f;
}

/// Samples the field at t on the similarity ball of vertex (x0, T0) by cubic
/// interpolation; w_s and the y-derivatives follow from the chain rule with
/// w_s = (T0-t) u_t / psi - c(s) w - y.grad w,  c(s) = d log phi / ds.
inline SimilarFrame to_similarity(const WaveField& field, double x0, double T0, double t, const BallGrid& grid) {
    const ModelParams& m = field.params;
    const double tau = T0 - t;
    const double log_psi = eval_log_psi(m, T0, t);
    const double s = -std::log(tau);
    if (grid.N != m.N) throw ConfigError("ball grid dimension differs from model.N");
    const bool radial = field.grid.geometry == Geometry::Radial3D;
    if (radial && x0 != 0.0) throw DomainError("to_similarity: radial fields only support the vertex x0 = 0");
    const auto [c_lo, c_hi] = causal_region(field, t);
    const double lo = radial ? 0.0 : x0 - tau, hi = x0 + tau;
    if ((!radial && lo < c_lo) || hi > c_hi) {
        std::ostringstream msg;
        msg << "to_similarity: cone section [" << lo << ", " << hi << "] at t = " << t
            << " leaves the causal region [" << c_lo << ", " << c_hi << "]";
        throw DomainError(msg.str());
    }
    const auto [i_lo, i_hi] = node_window(field.grid, lo, hi, 4);
    const FieldState st = state_at(field, t, i_lo, i_hi);
    const GridWindow ux = st.u.derivative();
    const GridWindow uxx = st.u.second_derivative();
    const GridWindow utx = st.ut.derivative();

    const double inv_psi = std::exp(-log_psi);
    const double c = 2.0 / (m.p - 1.0) - m.a / ((m.p - 1.0) * s * std::log(s));
    SimilarFrame f{m, x0, T0, s, grid, {}};
    f.values.reserve(grid.size());
    for (double y : grid.y) {
        const double x = x0 + y * tau;
        FrameSample v;
        v.w = st.u.interpolate(x) * inv_psi;
        v.dw = tau * ux.interpolate(x) * inv_psi;
        v.dww = tau * tau * uxx.interpolate(x) * inv_psi;
        v.ws = tau * st.ut.interpolate(x) * inv_psi - c * v.w - y * v.dw;
        v.dws = tau * tau * utx.interpolate(x) * inv_psi - (c + 1.0) * v.dw - y * v.dww;
        f.values.push_back(v);
    }
    return f;
}

/// Truncated-ball integral with the outer-shell tail estimate: if the
/// integrand behaves like (1-|y|)^{q-1} near the sphere, the neglected part is
/// (I_eps - I_{2 eps}) / (2^q - 1).
struct WeightedIntegral {
    double value = 0.0;
    double tail = 0.0;
    double extrapolated() const { return value + tail; }
};

template <class Fn>
WeightedIntegral weighted_integral(const SimilarFrame& frame, Fn&& integrand, int singular_power = 0) {
    if (singular_power != 0 && singular_power != 1)
        throw DomainError("weighted_integral: singular_power must be 0 or 1");
    const double alpha = frame.params.alpha();
    const double expo = alpha - singular_power;
    const auto& g = frame.grid;
    double total = 0.0, shell = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double y2 = g.y[k] * g.y[k];
        const double c = g.weight[k] * std::pow(1.0 - y2, expo) * integrand(frame.point(k));
        total += c;
        if (g.outer[k]) shell += c;
    }
    const double q = expo + 1.0;
    return {total, shell / (std::exp2(q) - 1.0)};
}

/// Unweighted integral over the truncated ball.
template <class Fn>
double ball_integral(const SimilarFrame& frame, Fn&& integrand) {
    double total = 0.0;
    for (std::size_t k = 0; k < frame.grid.size(); ++k) total += frame.grid.weight[k] * integrand(frame.point(k));
    return total;
}

/// Component integrals of a frame (all weighted by rho, tails alongside).
struct FrameIntegrals {
    WeightedIntegral kinetic;      ///< int (w_s)^2 / 2
    WeightedIntegral gradient;     ///< int (|grad w|^2 - (y.grad w)^2) / 2
    WeightedIntegral mass;         ///< int (p+1)/(p-1)^2 w^2
    WeightedIntegral potential;    ///< int e^{-2(p+1)s/(p-1)} log^{2a/(p-1)}(s) F(phi w)
    WeightedIntegral cross;        ///< int w w_s
    WeightedIntegral dissipation;  ///< int (w_s)^2 / (1 - |y|^2)
    WeightedIntegral grad_full;    ///< int |grad w|^2 (1 - |y|^2)
    WeightedIntegral w2;           ///< int w^2
    WeightedIntegral power;        ///< int |w|^{p+1} g(phi w)

    double energy() const { return kinetic.value + gradient.value + mass.value - potential.value; }
    double energy_tail() const {
        return std::abs(kinetic.tail) + std::abs(gradient.tail) + std::abs(mass.tail) + std::abs(potential.tail);
    }
};

inline FrameIntegrals frame_integrals(const SimilarFrame& f) {
    const ModelParams& m = f.params;
    require_s_above_one(f.s, "frame_integrals");
    const double log_phi = eval_log_phi(m, f.s);
    const double log_s = std::log(f.s);
    const double pot_scale = m.a == 0.0 ? 1.0 : std::pow(log_s, -m.a);
    const double mass_c = (m.p + 1.0) / ((m.p - 1.0) * (m.p - 1.0));
    auto phi_w = [&](double w) { return w == 0.0 ? 0.0 : std::exp(log_phi + std::log(std::abs(w))); };
    auto abs_pow = [&](double w) { return std::pow(std::abs(w), m.p + 1.0); };
    FrameIntegrals I;
    I.kinetic = weighted_integral(f, [](const FramePoint& q) { return 0.5 * q.ws * q.ws; });
    I.gradient = weighted_integral(f, [](const FramePoint& q) { return 0.5 * (1.0 - q.y * q.y) * q.dw * q.dw; });
    I.mass = weighted_integral(f, [&](const FramePoint& q) { return mass_c * q.w * q.w; });
    I.potential = weighted_integral(f, [&](const FramePoint& q) {
        if (q.w == 0.0) return 0.0;
        return pot_scale * abs_pow(q.w) * scaled_potential(m, phi_w(q.w));
    });
    I.cross = weighted_integral(f, [](const FramePoint& q) { return q.w * q.ws; });
    I.dissipation = weighted_integral(f, [](const FramePoint& q) { return q.ws * q.ws; }, 1);
    I.grad_full = weighted_integral(f, [](const FramePoint& q) { return q.dw * q.dw * (1.0 - q.y * q.y); });
    I.w2 = weighted_integral(f, [](const FramePoint& q) { return q.w * q.w; });
    I.power = weighted_integral(f, [&](const FramePoint& q) {
        if (q.w == 0.0) return 0.0;
        return abs_pow(q.w) * eval_g(m, phi_w(q.w));
    });
    return I;
}

inline double eval_E(const SimilarFrame& f) { return frame_integrals(f).energy(); }

inline double eval_J(const SimilarFrame& f) {
    require_s_above_one(f.s, "eval_J");
    const auto X = weighted_integral(f, [](const FramePoint& q) { return q.w * q.ws; });
    return -X.value / (f.s * std::log(f.s));
}

struct FunctionalSeries {
    std::vector<double> s_values;
    std::vector<double> E, J, H_m, N_m, L0, L0_via_J, Ltilde_m;
    std::vector<double> dissipation_integral;
    /// Per-frame quadrature tail estimates, scaled like N_m and Ltilde_m.
    std::vector<double> tail_N, tail_Ltilde;
    double m = 10.0;
    double s0 = 0.0;
    double C_lyap = 10.0;
    double b = 0.0;
    double epsilon_w = 0.0;

    std::size_t size() const { return s_values.size(); }
};

namespace detail {

inline void require_series_frames(std::span<const SimilarFrame> frames, std::size_t min_count, const char* who) {
    if (frames.size() < min_count) {
        std::ostringstream msg;
        msg << who << ": need at least " << min_count << " frames, got " << frames.size();
        throw InsufficientData(msg.str());
    }
    for (std::size_t k = 1; k < frames.size(); ++k) {
        if (!(frames[k].s > frames[k - 1].s)) throw DomainError(std::string(who) + ": frame s values must increase");
        if (frames[k].x0 != frames[0].x0 || frames[k].T0 != frames[0].T0 ||
            frames[k].grid.size() != frames[0].grid.size())
            throw DomainError(std::string(who) + ": frames must share vertex and ball grid");
    }
}

}  // namespace detail

/// H_m = E + m J,  N_m = log^{-b}(s) H_m + m^2 e^{-s} with b = m(p+3)/2,
/// L0 = E - X / (s log^{3/2} s) (X = int w w_s rho; also formed as E + J / log^{1/2} s),
/// Ltilde_m = exp(2 C / log^{1/2} s) L0 + m / s^{1/2}.
inline FunctionalSeries eval_lyapunov_family(std::span<const SimilarFrame> frames, double m = 10.0,
                                             double C_lyap = 10.0,
                                             double s0 = std::numeric_limits<double>::quiet_NaN()) {
    detail::require_series_frames(frames, 2, "eval_lyapunov_family");
    FunctionalSeries out;
    const ModelParams& P = frames[0].params;
    out.m = m;
    out.C_lyap = C_lyap;
    out.b = m * (P.p + 3.0) / 2.0;
    out.s0 = std::isnan(s0) ? frames[0].s : s0;
    out.epsilon_w = frames[0].grid.epsilon;
    for (const auto& f : frames) {
        const FrameIntegrals I = frame_integrals(f);
        const double s = f.s, L = std::log(s);
        const double E = I.energy();
        const double J = -I.cross.value / (s * L);
        const double H = E + m * J;
        const double scale_N = std::pow(L, -out.b);
        const double scale_L = std::exp(2.0 * C_lyap / std::sqrt(L));
        const double L0 = E - I.cross.value / (s * std::pow(L, 1.5));
        out.s_values.push_back(s);
        out.E.push_back(E);
        out.J.push_back(J);
        out.H_m.push_back(H);
        out.N_m.push_back(scale_N * H + m * m * std::exp(-s));
        out.L0.push_back(L0);
        out.L0_via_J.push_back(E + J / std::sqrt(L));
        out.Ltilde_m.push_back(scale_L * L0 + m / std::sqrt(s));
        out.dissipation_integral.push_back(I.dissipation.value);
        const double tail_E = I.energy_tail();
        const double tail_X = std::abs(I.cross.tail);
        out.tail_N.push_back(scale_N * (tail_E + m * tail_X / (s * L)));
        out.tail_Ltilde.push_back(scale_L * (tail_E + tail_X / (s * std::pow(L, 1.5))));
    }
    return out;
}

struct LyapunovCheck {
    double min_N = 0.0;
    double worst_N_margin = 0.0;        ///< min over frames of N_m + k tail_N (>= 0 passes)
    double max_Ltilde_increase = 0.0;   ///< max successive difference of Ltilde_m
    double worst_Ltilde_margin = 0.0;   ///< max of (difference - k max(tail)) (<= 0 passes)
    double max_L0_path_gap = 0.0;       ///< max |L0 - L0_via_J| / (1 + |L0|)
    double smallest_monotone_m = 0.0;   ///< least m >= 0 making Ltilde_m non-increasing
    bool nonnegative = true;
    bool decreasing = true;
};

/// Checks N_m >= -k tail and successive Ltilde_m differences <= +k tail
/// (tail = larger per-frame tail estimate of the pair).
inline LyapunovCheck check_lyapunov(const FunctionalSeries& fs, double tail_factor = 10.0) {
    LyapunovCheck c;
    c.min_N = std::numeric_limits<double>::infinity();
    c.worst_N_margin = std::numeric_limits<double>::infinity();
    c.max_Ltilde_increase = -std::numeric_limits<double>::infinity();
    c.worst_Ltilde_margin = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < fs.size(); ++k) {
        c.min_N = std::min(c.min_N, fs.N_m[k]);
        c.worst_N_margin = std::min(c.worst_N_margin, fs.N_m[k] + tail_factor * fs.tail_N[k]);
        c.max_L0_path_gap = std::max(c.max_L0_path_gap, std::abs(fs.L0[k] - fs.L0_via_J[k]) / (1.0 + std::abs(fs.L0[k])));
    }
    for (std::size_t k = 0; k + 1 < fs.size(); ++k) {
        const double d = fs.Ltilde_m[k + 1] - fs.Ltilde_m[k];
        const double tol = tail_factor * std::max(fs.tail_Ltilde[k], fs.tail_Ltilde[k + 1]);
        c.max_Ltilde_increase = std::max(c.max_Ltilde_increase, d);
        c.worst_Ltilde_margin = std::max(c.worst_Ltilde_margin, d - tol);
        // Ltilde_m = e L0 + m / sqrt(s): m enters linearly, so the least m
        // that makes this step non-increasing is explicit.
        const double base = (fs.Ltilde_m[k + 1] - fs.m / std::sqrt(fs.s_values[k + 1])) -
                            (fs.Ltilde_m[k] - fs.m / std::sqrt(fs.s_values[k]));
        const double gain = 1.0 / std::sqrt(fs.s_values[k]) - 1.0 / std::sqrt(fs.s_values[k + 1]);
        c.smallest_monotone_m = std::max(c.smallest_monotone_m, base / gain);
    }
    c.nonnegative = c.worst_N_margin >= 0.0;
    c.decreasing = c.worst_Ltilde_margin <= 0.0;
    return c;
}

/// Weighted L2 norm of LHS - RHS of the w-equation at the middle frame, with
/// d^2 w / ds^2 from the second difference of the three frames.
inline double w_equation_residual(const SimilarFrame& f0, const SimilarFrame& f1, const SimilarFrame& f2) {
    const SimilarFrame trio[] = {f0, f1, f2};
    detail::require_series_frames(trio, 3, "w_equation_residual");
    const double ds = f1.s - f0.s;
    if (std::abs((f2.s - f1.s) - ds) > 1e-8 * ds) {
        std::ostringstream msg;
        msg << "w_equation_residual: non-uniform s spacing (" << ds << " vs " << f2.s - f1.s << ")";
        throw DomainError(msg.str());
    }
    const ModelParams& m = f1.params;
    const double s = f1.s, L = std::log(s), p = m.p, a = m.a;
    const double alpha = m.alpha();
    const double drift = 2.0 * a / ((p - 1.0) * s * L);
    const double mass = 2.0 * (p + 1.0) / ((p - 1.0) * (p - 1.0));
    const double gamma = eval_gamma(m, s);
    const double damping = (p + 3.0) / (p - 1.0) - drift;
    const double log_phi = eval_log_phi(m, s);
    const double nl_scale = a == 0.0 ? 1.0 : std::pow(L, -a);
    const bool radial = m.N >= 2;

    double total = 0.0;
    const auto& g = f1.grid;
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double y = g.y[k];
        const double one_m = 1.0 - y * y;
        const FrameSample& v = f1.values[k];
        const double wss = (f2.values[k].w - 2.0 * v.w + f0.values[k].w) / (ds * ds);
        double div = one_m * v.dww - 2.0 * (alpha + 1.0) * y * v.dw;
        if (radial) div += (m.N - 1.0) * one_m / y * v.dw;
        double nl = 0.0;
        if (v.w != 0.0) {
            const double phiw = std::exp(log_phi + std::log(std::abs(v.w)));
            nl = nl_scale * eval_g(m, phiw) * std::pow(std::abs(v.w), p - 1.0) * v.w;
        }
        const double rhs = div + drift * y * v.dw - mass * v.w + gamma * v.w - damping * v.ws - 2.0 * y * v.dws + nl;
        const double r = wss - rhs;
        total += g.weight[k] * std::pow(one_m, alpha) * r * r;
    }
    return std::sqrt(total);
}

struct HardyTerms {
    double lhs = 0.0;       ///< int w^2 |y|^2 / (1-|y|^2) rho
    double gradient = 0.0;  ///< int |grad w|^2 (1-|y|^2) rho
    double mass = 0.0;      ///< int w^2 rho
    double ratio() const {
        const double sum = gradient + mass;
        return sum > 0.0 ? lhs / sum : 0.0;
    }
};

inline HardyTerms hardy_check(const SimilarFrame& f) {
    HardyTerms h;
    h.lhs = weighted_integral(f, [](const FramePoint& q) { return q.w * q.w * q.y * q.y; }, 1).value;
    h.gradient = weighted_integral(f, [](const FramePoint& q) { return q.dw * q.dw * (1.0 - q.y * q.y); }).value;
    h.mass = weighted_integral(f, [](const FramePoint& q) { return q.w * q.w; }).value;
    return h;
}

/// Random smooth profile: a polynomial in y (N = 1) or in r^2 (N >= 2) with
/// normally distributed coefficients damped by degree.
inline SimilarFrame random_smooth_frame(const ModelParams& m, const BallGrid& grid, std::mt19937_64& rng,
                                        int degree = 6, double s = 2.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> c(static_cast<std::size_t>(degree) + 1);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = normal(rng) / static_cast<double>(k + 1);
    const bool radial = grid.N >= 2;
    return make_frame(m, s, grid, [&](double y) {
        // w = sum c_k z^k with z = y or r^2
        const double z = radial ? y * y : y;
        double w = 0.0, dz = 0.0, dzz = 0.0;
        for (std::size_t k = c.size(); k-- > 0;) {
            dzz = dzz * z + 2.0 * dz;
            dz = dz * z + w;
            w = w * z + c[k];
        }
        FrameSample v;
        v.w = w;
        v.dw = radial ? 2.0 * y * dz : dz;
        v.dww = radial ? 2.0 * dz + 4.0 * y * y * dzz : dzz;
        return v;
    });
}

struct HardyEstimate {
    double max_ratio = 0.0;
    std::vector<double> ratios;
};

/// Largest lhs / (gradient + mass) over `draws` seeded random profiles.
inline HardyEstimate hardy_constant_estimate(const ModelParams& m, const BallGrid& grid, std::size_t draws,
                                             std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    HardyEstimate est;
    for (std::size_t k = 0; k < draws; ++k) {
        const double r = hardy_check(random_smooth_frame(m, grid, rng)).ratio();
        est.ratios.push_back(r);
        est.max_ratio = std::max(est.max_ratio, r);
    }
    return est;
}

struct EnergyDerivativeCheck {
    std::vector<double> s;
    std::vector<double> dE_ds;
    std::vector<double> dissipation_term;  ///< -(3 alpha / 2) int (w_s)^2 / (1-|y|^2) rho
    std::vector<double> majorant;          ///< potential / (s log^{a+1} s) + (grad + mass) / s^2 + e^{-s}
    double C = 0.0;                        ///< smallest constant making the inequality hold at every frame
};

/// Finite-difference dE/ds against the dissipation bound; C is calibrated as
/// max (dE/ds - dissipation_term) / majorant, clamped at 0.
inline EnergyDerivativeCheck energy_derivative_check(std::span<const SimilarFrame> frames) {
    detail::require_series_frames(frames, 3, "energy_derivative_check");
    const ModelParams& m = frames[0].params;
    std::vector<FrameIntegrals> I;
    std::vector<double> E;
    for (const auto& f : frames) {
        I.push_back(frame_integrals(f));
        E.push_back(I.back().energy());
    }
    EnergyDerivativeCheck out;
    for (std::size_t k = 1; k + 1 < frames.size(); ++k) {
        const double s = frames[k].s, L = std::log(s);
        const double h0 = s - frames[k - 1].s, h1 = frames[k + 1].s - s;
        const double dE = (E[k + 1] - E[k]) * h0 / (h1 * (h0 + h1)) + (E[k] - E[k - 1]) * h1 / (h0 * (h0 + h1));
        const double diss = -1.5 * m.alpha() * I[k].dissipation.value;
        const double maj = I[k].power.value / (s * std::pow(L, m.a + 1.0)) +
                           (I[k].grad_full.value + I[k].w2.value) / (s * s) + std::exp(-s);
        out.s.push_back(s);
        out.dE_ds.push_back(dE);
        out.dissipation_term.push_back(diss);
        out.majorant.push_back(maj);
        out.C = std::max(out.C, (dE - diss) / maj);
    }
    return out;
}

inline void write_series_csv(const FunctionalSeries& fs, const std::filesystem::path& path) {
    io::CsvWriter csv(path, {"s", "E", "J", "H_m", "N_m", "L0", "Ltilde_m", "dissipation_integral"});
    for (std::size_t k = 0; k < fs.size(); ++k)
        csv.row({fs.s_values[k], fs.E[k], fs.J[k], fs.H_m[k], fs.N_m[k], fs.L0[k], fs.Ltilde_m[k],
                 fs.dissipation_integral[k]});
}

}  // namespace blowup
