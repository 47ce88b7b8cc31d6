#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/io.hpp"
#include "blowup/nonlinearity.hpp"
#include "blowup/quadrature.hpp"

namespace blowup {

struct OdeSample {
    double t;
    double v;
    double v_prime;
};

/// Path of v'' = f(v), v(0) = A > 0, v'(0) = B > 0, integrated up to a stop
/// amplitude, together with the extracted blow-up time.
struct OdeTrajectory {
    ModelParams params;
    double A = 0.0;
    double B = 0.0;
    std::vector<OdeSample> samples;
    /// Blow-up time from the last sample plus the remaining-time quadrature.
    double T_est = 0.0;
    /// Cross-check: zero crossing of v^{-(p-1)/2} through the last two samples.
    double T_extrapolated = 0.0;
    /// C in (v')^2 = 2F(v) + C.
    double C_first_integral = 0.0;
    int rejected_steps = 0;

    double first_integral_residual(const OdeSample& s) const {
        return s.v_prime * s.v_prime - 2.0 * eval_F(params, s.v) - C_first_integral;
    }

    /// max_k |(v')^2 - 2F(v) - C| / (1 + (v')^2) over all samples.
    double max_relative_drift() const {
        double worst = 0.0;
        for (const auto& s : samples)
            worst = std::max(worst, std::abs(first_integral_residual(s)) / (1.0 + s.v_prime * s.v_prime));
        return worst;
    }
};

struct OdeOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    /// Steps are capped at this fraction of the leading-order remaining time
    /// 2v / ((p-1) v'), so the step shrinks geometrically toward blow-up.
    double cone_fraction = 0.05;
    /// Times the integrator must land on exactly (sorted ascending).
    std::vector<double> checkpoints;
    long max_steps = 2'000'000;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
    static constexpr std::array<double, 7> c = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
    static constexpr double a[7][6] = {
        {},
        {1.0 / 5},
        {3.0 / 40, 9.0 / 40},
        {44.0 / 45, -56.0 / 15, 32.0 / 9},
        {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
        {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
        {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
    // b5 - b4
    static constexpr std::array<double, 7> e = {71.0 / 57600,      0.0,          -71.0 / 16695, 71.0 / 1920,
                                                -17253.0 / 339200, 22.0 / 525, -1.0 / 40};
};

}  // namespace detail

/// Remaining time to blow-up from amplitude v0 on the trajectory with first
/// integral C:  int_{v0}^inf dy / sqrt(2F(y) + C).
/// The substitution y = v0 z^{-beta}, beta = 2/(p-1), maps the tail onto
/// (0, 1] with an integrand that stays bounded at z = 0.
inline double blowup_time_quadrature(const ModelParams& m, double v0, double C, double rel_tol = 1e-12) {
    if (!(v0 > 0.0)) throw DomainError("blowup_time_quadrature: v0 must be positive");
    if (!(2.0 * eval_F(m, v0) + C > 0.0))
        throw DomainError("blowup_time_quadrature: 2F(v0) + C must be positive");
    const double beta = 2.0 / (m.p - 1.0);
    const double log_v0 = std::log(v0);
    auto integrand = [&](double z) {
        const double log_z = std::log(z);
        const double log_y = log_v0 - beta * log_z;
        const double log_jac = std::log(beta) + log_v0 - (beta + 1.0) * log_z;
        if (log_y > 300.0) {
            // C is negligible against 2F here.
            return std::exp(log_jac - 0.5 * (std::log(2.0) + eval_log_F(m, std::exp(log_y))));
        }
        const double denom = 2.0 * eval_F(m, std::exp(log_y)) + C;
        if (!(denom > 0.0)) throw NumericalError("blowup_time_quadrature: 2F(y) + C vanished inside the tail");
        return std::exp(log_jac) / std::sqrt(denom);
    };
    quad::AdaptiveOptions opt;
    opt.rel_tol = rel_tol;
    opt.max_intervals = 500;
    const double T = quad::integrate_adaptive(integrand, 0.0, 1.0, opt).value;
    if (!std::isfinite(T)) throw NumericalError("blowup_time_quadrature: divergent tail integral");
    return T;
}

/// Adaptive Dormand-Prince integration of v'' = |v|^{p-1} v g(v) until
/// v >= stop_amplitude.
inline OdeTrajectory integrate_ode(const ModelParams& m, double A, double B, double stop_amplitude,
                                   const OdeOptions& opt = {}) {
    if (!(A > 0.0) || !(B > 0.0)) throw DomainError("integrate_ode: need A > 0 and B > 0");
    if (!(stop_amplitude > A)) throw DomainError("integrate_ode: stop_amplitude must exceed A");

    using DP = detail::DormandPrince;
    OdeTrajectory traj;
    traj.params = m;
    traj.A = A;
    traj.B = B;
    traj.C_first_integral = B * B - 2.0 * eval_F(m, A);

    auto rhs = [&](const std::array<double, 2>& y) { return std::array<double, 2>{y[1], eval_f(m, y[0])}; };

    double t = 0.0;
    std::array<double, 2> y{A, B};
    traj.samples.push_back({t, y[0], y[1]});
    double h = std::min(1e-3, opt.cone_fraction * 2.0 * A / ((m.p - 1.0) * B));
    std::size_t next_cp = 0;
    while (next_cp < opt.checkpoints.size() && opt.checkpoints[next_cp] <= t) ++next_cp;

    for (long step = 0; y[0] < stop_amplitude; ++step) {
        if (step >= opt.max_steps)
            throw IntegratorStall("integrate_ode: step budget exhausted", t, y[0], y[1]);
        const double tau_rough = 2.0 * y[0] / ((m.p - 1.0) * y[1]);
        h = std::min(h, opt.cone_fraction * tau_rough);
        bool landing = false;
        if (next_cp < opt.checkpoints.size() && t + h >= opt.checkpoints[next_cp]) {
            h = opt.checkpoints[next_cp] - t;
            landing = true;
        }
        if (h < 1e-15 * std::max(1.0, std::abs(t))) {
            throw IntegratorStall("integrate_ode: step size underflow", t, y[0], y[1]);
        }

        std::array<std::array<double, 2>, 7> k;
        k[0] = rhs(y);
        for (int s = 1; s < 7; ++s) {
            std::array<double, 2> ys = y;
            for (int j = 0; j < s; ++j) {
                ys[0] += h * DP::a[s][j] * k[j][0];
                ys[1] += h * DP::a[s][j] * k[j][1];
            }
            k[s] = rhs(ys);
        }
        std::array<double, 2> ynew = y;
        std::array<double, 2> err{0.0, 0.0};
        // FSAL: the 5th-order weights are the last tableau row.
        for (int s = 0; s < 6; ++s) {
            ynew[0] += h * DP::a[6][s] * k[s][0];
            ynew[1] += h * DP::a[6][s] * k[s][1];
        }
        for (int s = 0; s < 7; ++s) {
            err[0] += h * DP::e[s] * k[s][0];
            err[1] += h * DP::e[s] * k[s][1];
        }
        double err_norm = 0.0;
        for (int i = 0; i < 2; ++i) {
            const double scale = opt.abs_tol + opt.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            err_norm = std::max(err_norm, std::abs(err[i]) / scale);
        }
        if (!std::isfinite(err_norm)) err_norm = 1e10;

        if (err_norm <= 1.0) {
            t = landing ? opt.checkpoints[next_cp] : t + h;
            if (landing) ++next_cp;
            y = ynew;
            traj.samples.push_back({t, y[0], y[1]});
            const double grow = err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
            h *= grow;
        } else {
            ++traj.rejected_steps;
            h *= std::clamp(0.9 * std::pow(err_norm, -0.2), 0.1, 0.9);
        }
    }

    const auto& last = traj.samples.back();
    traj.T_est = last.t + blowup_time_quadrature(m, last.v, traj.C_first_integral);
    const auto& prev = traj.samples[traj.samples.size() - 2];
    const double e = 0.5 * (m.p - 1.0);
    const double y1 = std::pow(prev.v, -e), y2 = std::pow(last.v, -e);
    traj.T_extrapolated = last.t + y2 * (last.t - prev.t) / (y1 - y2);
    return traj;
}

/// max over samples with v >= v_floor of |T_est - (t_k + remaining-time quadrature at v_k)|.
inline double two_method_discrepancy(const OdeTrajectory& traj, double v_floor = 1e2) {
    double worst = 0.0;
    for (const auto& s : traj.samples) {
        if (s.v < v_floor) continue;
        const double T = s.t + blowup_time_quadrature(traj.params, s.v, traj.C_first_integral);
        worst = std::max(worst, std::abs(T - traj.T_est));
    }
    return worst;
}

/// v / psi_{T_est} on the tail T_est - t < 1/e, with log-slopes
/// d log(ratio) / d log(T_est - t) between consecutive samples.
struct AsymptoticRateReport {
    std::vector<double> t;
    std::vector<double> tau;
    std::vector<double> ratio;
    std::vector<double> log_slope;  ///< size() == ratio.size() - 1
};

inline AsymptoticRateReport asymptotic_rate_report(const OdeTrajectory& traj) {
    AsymptoticRateReport rep;
    const double cap = std::exp(-1.0);
    for (const auto& s : traj.samples) {
        const double tau = traj.T_est - s.t;
        if (!(tau > 0.0 && tau < cap)) continue;
        rep.t.push_back(s.t);
        rep.tau.push_back(tau);
        rep.ratio.push_back(s.v / eval_psi(traj.params, traj.T_est, s.t));
    }
    if (rep.ratio.size() < 10) {
        std::ostringstream msg;
        msg << "asymptotic_rate_report: only " << rep.ratio.size() << " samples with T - t < 1/e (need 10)";
        throw InsufficientData(msg.str());
    }
    for (std::size_t i = 0; i + 1 < rep.ratio.size(); ++i)
        rep.log_slope.push_back(std::log(rep.ratio[i + 1] / rep.ratio[i]) / std::log(rep.tau[i + 1] / rep.tau[i]));
    return rep;
}

struct DyadicSlope {
    double tau_hi, tau_lo, slope;
};

/// Log-slopes of the ratio between samples nearest to tau_hi, tau_hi/2,
/// tau_hi/4, ... down to tau_lo.
inline std::vector<DyadicSlope> dyadic_log_slopes(const AsymptoticRateReport& rep, double tau_hi, double tau_lo) {
    std::vector<std::size_t> picks;
    for (double target = tau_hi; target >= tau_lo * (1.0 - 1e-12); target *= 0.5) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < rep.tau.size(); ++i) {
            const double d = std::abs(std::log(rep.tau[i] / target));
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        if (picks.empty() || picks.back() != best) picks.push_back(best);
    }
    std::vector<DyadicSlope> out;
    for (std::size_t k = 0; k + 1 < picks.size(); ++k) {
        const auto i = picks[k], j = picks[k + 1];
        out.push_back({rep.tau[i], rep.tau[j], std::log(rep.ratio[j] / rep.ratio[i]) / std::log(rep.tau[j] / rep.tau[i])});
    }
    return out;
}

inline void write_trajectory_csv(const OdeTrajectory& traj, const std::filesystem::path& path) {
    io::CsvWriter csv(path, {"t", "v", "v_prime", "first_integral_residual"});
    for (const auto& s : traj.samples) csv.row({s.t, s.v, s.v_prime, traj.first_integral_residual(s)});
}

}  // namespace blowup
