#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/io.hpp"
#include "blowup/similarity.hpp"
#include "blowup/wave_solver.hpp"

namespace blowup {

struct RateReport {
    double x0 = 0.0;
    double T = 0.0;
    std::vector<double> t_grid;
    std::vector<double> quotient;
    double k_hat = 0.0;
    double K_hat = 0.0;
    double t_start = 0.0;
    double t_end = 0.0;

    double spread() const { return K_hat / k_hat; }
};

struct RateWindow {
    /// Explicit window; when unset the window starts at the first snapshot
    /// where max|u| exceeds `growth_factor` times its initial sup.
    std::optional<double> t_start;
    std::optional<double> t_end;
    double growth_factor = 10.0;
    /// Smallest admissible T - t in units of h (balls must be resolvable).
    double min_tau_cells = 2.0;
};

/// The bracket  (T-t)^{-N/2} |u|_{L2(B)} + (T-t)^{1-N/2} (|grad u|_{L2(B)} + |u_t|_{L2(B)}),
/// B = B(x0, T-t), divided by psi_T(t).
inline double quotient_at(const WaveField& field, double x0, double T, double t) {
    const ConeNorms n = light_cone_norms(field, x0, T, t);
    const double tau = T - t;
    const double half_N = 0.5 * field.params.N;
    const double log_bracket_scale = -half_N * std::log(tau);
    const double bracket = n.l2_u * std::exp(log_bracket_scale) + tau * std::exp(log_bracket_scale) * (n.l2_grad + n.l2_ut);
    return bracket * std::exp(-eval_log_psi(field.params, T, t));
}

/// Evaluates the quotient on every recorded snapshot inside the window and
/// reports its extremes k_hat, K_hat.
inline RateReport rate_quotient(const WaveField& field, const BlowupSurface& surface, double x0,
                                const RateWindow& window = {}) {
    const auto T_opt = surface.T_at(x0, field.grid.h);
    if (!T_opt) {
        std::ostringstream msg;
        msg << "rate_quotient: blow-up time unresolved at x0 = " << x0;
        throw NumericalError(msg.str());
    }
    RateReport rep;
    rep.x0 = x0;
    rep.T = *T_opt;
    const double T = rep.T;
    const auto& snaps = field.snapshots;

    double t_start = 0.0;
    if (window.t_start) {
        t_start = *window.t_start;
    } else {
        const double initial = detail::max_abs(snaps.front().u);
        t_start = snaps.back().t;
        for (const auto& s : snaps)
            if (detail::max_abs(s.u) > window.growth_factor * initial) {
                t_start = s.t;
                break;
            }
    }
    const double t_end_limit = T - window.min_tau_cells * field.grid.h;
    t_start = std::max(t_start, T - std::exp(-1.0) + 1e-12);
    const double t_end = std::min(window.t_end.value_or(t_end_limit), t_end_limit);
    rep.t_start = t_start;
    rep.t_end = t_end;

    for (const auto& s : snaps) {
        if (s.t < t_start || s.t > t_end) continue;
        rep.t_grid.push_back(s.t);
        rep.quotient.push_back(quotient_at(field, x0, T, s.t));
    }
    if (rep.quotient.empty()) throw InsufficientData("rate_quotient: no recorded snapshot inside the window");
    rep.k_hat = *std::min_element(rep.quotient.begin(), rep.quotient.end());
    rep.K_hat = *std::max_element(rep.quotient.begin(), rep.quotient.end());
    if (!(rep.k_hat > 0.0)) throw NumericalError("rate_quotient: degenerate (zero) quotient; the field does not blow up");
    return rep;
}

struct ScaledData {
    Grid grid;
    std::vector<double> u0;
    std::vector<double> u1;
};

/// Initial data of u_lambda(x, t) = lambda^{2/(p-1)} u(lambda x, lambda t) on
/// the grid with spacing h / lambda (node i of both grids corresponds).
inline ScaledData scale_initial_data(const ModelParams& m, const Grid& grid, std::span<const double> u0,
                                     std::span<const double> u1, double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("scaling factor lambda must be positive");
    const double beta = 2.0 / (m.p - 1.0);
    const double cu = std::pow(lambda, beta), cv = std::pow(lambda, beta + 1.0);
    ScaledData d{Grid{grid.geometry, grid.x_min / lambda, grid.h / lambda, grid.n}, {}, {}};
    for (double v : u0) d.u0.push_back(cu * v);
    for (double v : u1) d.u1.push_back(cv * v);
    return d;
}

struct AverageSample {
    double s;
    double value;
};

namespace detail {

inline void require_dense_frames(std::span<const SimilarFrame> frames, double max_gap, const char* who) {
    require_series_frames(frames, 2, who);
    for (std::size_t k = 1; k < frames.size(); ++k)
        if (frames[k].s - frames[k - 1].s > max_gap * (1.0 + 1e-9)) {
            std::ostringstream msg;
            msg << who << ": frame spacing " << frames[k].s - frames[k - 1].s << " exceeds " << max_gap;
            throw InsufficientData(msg.str());
        }
}

/// Trapezoid integral of samples (s_k, v_k) over [a, b] with linear
/// interpolation at the ends.
inline double integrate_series(std::span<const double> s, std::span<const double> v, double a, double b) {
    auto value_at = [&](double x) {
        auto it = std::upper_bound(s.begin(), s.end(), x);
        if (it == s.begin()) return v.front();
        if (it == s.end()) return v.back();
        const std::size_t k = static_cast<std::size_t>(it - s.begin());
        const double th = (x - s[k - 1]) / (s[k] - s[k - 1]);
        return (1.0 - th) * v[k - 1] + th * v[k];
    };
    std::vector<double> xs{a};
    for (double x : s)
        if (x > a && x < b) xs.push_back(x);
    xs.push_back(b);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < xs.size(); ++k)
        total += 0.5 * (xs[k + 1] - xs[k]) * (value_at(xs[k]) + value_at(xs[k + 1]));
    return total;
}

}  // namespace detail

/// A(s) = int_s^{s+1} int_B ((w_s)^2 + |grad w|^2 + w^2) dy ds' / (s log^{1+b} s),
/// for every frame s with s + 1 inside the covered range (spacing <= 0.05).
inline std::vector<AverageSample> energy_averages(std::span<const SimilarFrame> frames, double b) {
    detail::require_dense_frames(frames, 0.05, "energy_averages");
    std::vector<double> s, v;
    for (const auto& f : frames) {
        s.push_back(f.s);
        v.push_back(ball_integral(f, [](const FramePoint& q) { return q.ws * q.ws + q.dw * q.dw + q.w * q.w; }));
    }
    std::vector<AverageSample> out;
    for (std::size_t k = 0; k < s.size() && s[k] + 1.0 <= s.back() * (1.0 + 1e-12); ++k) {
        const double integral = detail::integrate_series(s, v, s[k], s[k] + 1.0);
        out.push_back({s[k], integral / (s[k] * std::pow(std::log(s[k]), 1.0 + b))});
    }
    if (out.empty()) throw InsufficientData("energy_averages: frames cover less than a unit s-interval");
    return out;
}

/// |w|_{H1(B)}^2 + |w_s|_{L2(B)}^2 per frame (unweighted, truncated ball).
inline std::vector<AverageSample> local_norms(std::span<const SimilarFrame> frames) {
    std::vector<AverageSample> out;
    for (const auto& f : frames)
        out.push_back({f.s, ball_integral(f, [](const FramePoint& q) { return q.w * q.w + q.dw * q.dw + q.ws * q.ws; })});
    return out;
}

/// Full-interval average of the weighted potential term of the energy over
/// [s - 1, s + 1] for every frame s where that interval is covered.
inline std::vector<AverageSample> potential_averages(std::span<const SimilarFrame> frames) {
    detail::require_dense_frames(frames, 0.05, "potential_averages");
    std::vector<double> s, v;
    for (const auto& f : frames) {
        s.push_back(f.s);
        v.push_back(frame_integrals(f).potential.value);
    }
    std::vector<AverageSample> out;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (s[k] - 1.0 < s.front() * (1.0 - 1e-12) || s[k] + 1.0 > s.back() * (1.0 + 1e-12)) continue;
        out.push_back({s[k], 0.5 * detail::integrate_series(s, v, s[k] - 1.0, s[k] + 1.0)});
    }
    return out;
}

inline void write_rate_csv(const RateReport& r, const std::filesystem::path& path) {
    io::CsvWriter csv(path, {"t", "quotient"});
    for (std::size_t k = 0; k < r.t_grid.size(); ++k) csv.row({r.t_grid[k], r.quotient[k]});
}

}  // namespace blowup
