#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/grid.hpp"
#include "blowup/io.hpp"
#include "blowup/nonlinearity.hpp"

namespace blowup {

struct Snapshot {
    double t = 0.0;
    std::vector<double> u;
    std::vector<double> ut;
};

struct StoppingRule {
    double amplitude = 1e6;
    double t_max = std::numeric_limits<double>::infinity();
};

/// Which time levels are kept in WaveField::snapshots. The initial and final
/// levels are always kept.
struct RecordingPlan {
    /// Keep every `stride`-th level (0: none).
    std::size_t stride = 0;
    /// For each requested time tau (ascending), keep the levels within
    /// `time_halo` steps of tau; halo 1 is the bracketing pair needed for
    /// Hermite interpolation, larger halos tolerate later shifts of tau.
    std::vector<double> times;
    std::size_t time_halo = 1;
    /// Keep every level once max|u| reaches this amplitude.
    double dense_above_amplitude = std::numeric_limits<double>::infinity();
};

enum class StopReason { Amplitude, TimeLimit };

inline const char* to_string(StopReason r) { return r == StopReason::Amplitude ? "amplitude" : "time_limit"; }

struct WaveField {
    ModelParams params;
    Grid grid;
    double cfl = 0.0;
    double dt = 0.0;
    std::vector<Snapshot> snapshots;
    StopReason stop_reason = StopReason::TimeLimit;
    double stop_amplitude = 0.0;
    long steps = 0;

    double t_final() const { return snapshots.back().t; }
};

/// NaN or overflow during time stepping.
class BlowupOverrun : public NumericalError {
public:
    BlowupOverrun(const std::string& what, Snapshot last_valid)
        : NumericalError(what), last_valid(std::move(last_valid)) {}
    Snapshot last_valid;
};

namespace detail {

inline double laplacian(const Grid& g, const std::vector<double>& u, std::size_t i) {
    const double h2 = g.h * g.h;
    if (g.geometry == Geometry::Radial3D) {
        if (i == 0) return 6.0 * (u[1] - u[0]) / h2;
        const double inv_i = 1.0 / static_cast<double>(i);
        return (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2 + inv_i * (u[i + 1] - u[i - 1]) / h2;
    }
    return (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
}

inline void check_geometry(const ModelParams& m, const Grid& g) {
    if (g.geometry == Geometry::Line && m.N != 1) throw ConfigError("line geometry requires model.N = 1");
    if (g.geometry == Geometry::Radial3D && m.N != 3) throw ConfigError("radial3d geometry requires model.N = 3");
    if (g.geometry == Geometry::Radial3D && g.x_min != 0.0) throw ConfigError("radial3d grid must start at r = 0");
    if (g.n < 5 || !(g.h > 0.0)) throw ConfigError("wave grid needs at least 5 nodes and h > 0");
}

inline double max_abs(const std::vector<double>& u) {
    double m = 0.0;
    for (double v : u) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace detail

inline double max_cfl(Geometry g) { return g == Geometry::Line ? 1.0 : 0.5; }

/// Explicit leapfrog for u_tt = Laplacian u + f(u) with second-order central
/// differences, a Taylor start and first-order outgoing-characteristic
/// boundaries at the outer edge(s). dt = cfl * h.
inline WaveField evolve(const ModelParams& m, const Grid& grid, const std::vector<double>& u0,
                        const std::vector<double>& u1, double cfl, const StoppingRule& stop,
                        const RecordingPlan& plan = {}) {
    detail::check_geometry(m, grid);
    if (u0.size() != grid.n || u1.size() != grid.n) throw ConfigError("initial data must match the grid size");
    if (!(cfl > 0.0) || cfl > max_cfl(grid.geometry)) {
        std::ostringstream msg;
        msg << "cfl = " << cfl << " outside (0, " << max_cfl(grid.geometry) << "] for " << to_string(grid.geometry)
            << " geometry";
        throw ConfigError(msg.str());
    }

    WaveField field;
    field.params = m;
    field.grid = grid;
    field.cfl = cfl;
    field.dt = cfl * grid.h;
    field.stop_amplitude = stop.amplitude;
    const double dt = field.dt;
    const double dt2 = dt * dt;
    const double c = dt / grid.h;
    const std::size_t n = grid.n;
    const double R = grid.x_max();
    const bool radial = grid.geometry == Geometry::Radial3D;

    auto apply_boundary = [&](const std::vector<double>& cur, std::vector<double>& next) {
        if (radial) {
            const double r1 = grid.x(n - 2);
            next[n - 1] = (R * cur[n - 1] - c * (R * cur[n - 1] - r1 * cur[n - 2])) / R;
        } else {
            next[0] = cur[0] + c * (cur[1] - cur[0]);
            next[n - 1] = cur[n - 1] - c * (cur[n - 1] - cur[n - 2]);
        }
    };
    const std::size_t first_interior = radial ? 0 : 1;

    std::vector<double> u_prev = u0;
    std::vector<double> u_curr(n), u_next(n);
    for (std::size_t i = first_interior; i + 1 < n; ++i)
        u_curr[i] = u0[i] + dt * u1[i] + 0.5 * dt2 * (detail::laplacian(grid, u0, i) + eval_f(m, u0[i]));
    apply_boundary(u0, u_curr);

    field.snapshots.push_back({0.0, u0, u1});
    const double halo = static_cast<double>(std::max<std::size_t>(plan.time_halo, 1)) * dt;
    std::size_t next_time = 0;
    bool dense = detail::max_abs(u0) >= plan.dense_above_amplitude;

    for (long step = 1;; ++step) {
        const double t = static_cast<double>(step) * dt;
        for (std::size_t i = first_interior; i + 1 < n; ++i)
            u_next[i] = 2.0 * u_curr[i] - u_prev[i] + dt2 * (detail::laplacian(grid, u_curr, i) + eval_f(m, u_curr[i]));
        apply_boundary(u_curr, u_next);

        bool finite = true;
        for (double v : u_next)
            if (!std::isfinite(v)) {
                finite = false;
                break;
            }
        if (!finite) {
            Snapshot last{t, u_curr, std::vector<double>(n)};
            for (std::size_t i = 0; i < n; ++i) last.ut[i] = (u_curr[i] - u_prev[i]) / dt;
            field.steps = step;
            throw BlowupOverrun("evolve: non-finite values before the stop amplitude was reached", std::move(last));
        }

        const double amp = detail::max_abs(u_curr);
        dense = dense || amp >= plan.dense_above_amplitude;
        const bool stop_now = amp >= stop.amplitude || t >= stop.t_max * (1.0 - 1e-14);

        while (next_time < plan.times.size() && plan.times[next_time] < t - halo) ++next_time;
        const bool near_request = next_time < plan.times.size() && plan.times[next_time] < t + halo;
        const bool keep = near_request || dense || stop_now ||
                          (plan.stride > 0 && step % static_cast<long>(plan.stride) == 0);

        if (keep) {
            Snapshot snap{t, u_curr, std::vector<double>(n)};
            for (std::size_t i = 0; i < n; ++i) snap.ut[i] = (u_next[i] - u_prev[i]) / (2.0 * dt);
            field.snapshots.push_back(std::move(snap));
        }
        if (stop_now) {
            field.steps = step;
            field.stop_reason = amp >= stop.amplitude ? StopReason::Amplitude : StopReason::TimeLimit;
            return field;
        }
        std::swap(u_prev, u_curr);
        std::swap(u_curr, u_next);
    }
}

/// Smallest and largest positions whose values at time t cannot have been
/// influenced by the outer boundary treatment.
inline std::pair<double, double> causal_region(const WaveField& field, double t) {
    const auto& g = field.grid;
    const double margin = 3.0 * g.h;
    if (g.geometry == Geometry::Radial3D) return {0.0, g.x_max() - t - margin};
    return {g.x_min + t + margin, g.x_max() - t - margin};
}

/// (u, u_t) at an arbitrary time on a node window, by cubic Hermite
/// interpolation between the two bracketing snapshots (u_tt = Lap u + f(u)
/// supplies the derivative data for u_t).
struct FieldState {
    double t;
    GridWindow u;
    GridWindow ut;
};

inline FieldState state_at(const WaveField& field, double t, std::size_t i_lo, std::size_t i_hi) {
    const auto& snaps = field.snapshots;
    const auto& g = field.grid;
    if (i_hi >= g.n || i_lo > i_hi) throw std::out_of_range("state_at: node window outside the grid");
    if (t < snaps.front().t - 1e-12 || t > snaps.back().t + 1e-12) {
        std::ostringstream msg;
        msg << "state_at: t = " << t << " outside the recorded range [" << snaps.front().t << ", " << snaps.back().t << "]";
        throw DomainError(msg.str());
    }
    auto it = std::lower_bound(snaps.begin(), snaps.end(), t, [](const Snapshot& s, double v) { return s.t < v; });
    const double tol = 1e-12 * std::max(1.0, std::abs(t));
    auto copy_window = [&](const std::vector<double>& v) {
        return std::vector<double>(v.begin() + static_cast<long>(i_lo), v.begin() + static_cast<long>(i_hi) + 1);
    };
    if (it != snaps.end() && std::abs(it->t - t) <= tol)
        return {t, GridWindow(g, i_lo, copy_window(it->u)), GridWindow(g, i_lo, copy_window(it->ut))};
    if (it != snaps.begin() && std::abs(std::prev(it)->t - t) <= tol) {
        auto p = std::prev(it);
        return {t, GridWindow(g, i_lo, copy_window(p->u)), GridWindow(g, i_lo, copy_window(p->ut))};
    }
    const Snapshot& b = *it;
    const Snapshot& a = *std::prev(it);
    const double span = b.t - a.t;
    const double th = (t - a.t) / span;
    const double h00 = 2 * th * th * th - 3 * th * th + 1, h10 = th * th * th - 2 * th * th + th;
    const double h01 = -2 * th * th * th + 3 * th * th, h11 = th * th * th - th * th;
    const bool radial = g.geometry == Geometry::Radial3D;
    auto accel = [&](const std::vector<double>& u, std::size_t i) {
        if ((!radial && i == 0) || i + 1 >= g.n) return 0.0;
        return detail::laplacian(g, u, i) + eval_f(field.params, u[i]);
    };
    std::vector<double> u(i_hi - i_lo + 1), ut(i_hi - i_lo + 1);
    for (std::size_t i = i_lo; i <= i_hi; ++i) {
        const std::size_t k = i - i_lo;
        u[k] = h00 * a.u[i] + h10 * span * a.ut[i] + h01 * b.u[i] + h11 * span * b.ut[i];
        ut[k] = h00 * a.ut[i] + h10 * span * accel(a.u, i) + h01 * b.ut[i] + h11 * span * accel(b.u, i);
    }
    return {t, GridWindow(g, i_lo, std::move(u)), GridWindow(g, i_lo, std::move(ut))};
}

/// Node window covering [x_lo, x_hi] plus `halo` extra nodes on each side,
/// clipped to the grid.
inline std::pair<std::size_t, std::size_t> node_window(const Grid& g, double x_lo, double x_hi, std::size_t halo) {
    const double q_lo = std::floor((x_lo - g.x_min) / g.h) - static_cast<double>(halo);
    const double q_hi = std::ceil((x_hi - g.x_min) / g.h) + static_cast<double>(halo);
    const auto lo = static_cast<std::size_t>(std::max(0.0, q_lo));
    const auto hi = static_cast<std::size_t>(std::min(static_cast<double>(g.n - 1), q_hi));
    return {lo, hi};
}

struct ConeNorms {
    double l2_u = 0.0;
    double l2_grad = 0.0;
    double l2_ut = 0.0;
};

/// L2 norms of u, grad u and u_t over the ball B(x0, T0 - t), by the
/// trapezoid rule on the grid nodes inside the ball plus interpolated end
/// segments (weighted by 4 pi r^2 for radial fields).
inline ConeNorms light_cone_norms(const WaveField& field, double x0, double T0, double t) {
    const auto& g = field.grid;
    const double R = T0 - t;
    if (!(R > 2.0 * g.h)) {
        std::ostringstream msg;
        msg << "light_cone_norms: ball radius " << R << " not resolved by h = " << g.h;
        throw DomainError(msg.str());
    }
    const bool radial = g.geometry == Geometry::Radial3D;
    if (radial && x0 != 0.0) throw DomainError("light_cone_norms: radial fields only support x0 = 0");
    const double lo = radial ? 0.0 : x0 - R, hi = x0 + R;
    if (lo < g.x_min || hi > g.x_max()) throw DomainError("light_cone_norms: ball leaves the grid");
    auto [i_lo, i_hi] = node_window(g, lo, hi, 3);
    const FieldState st = state_at(field, t, i_lo, i_hi);
    const GridWindow ux = st.u.derivative();

    // Collect abscissae: ball ends plus interior nodes.
    std::vector<double> xs{lo};
    for (std::size_t i = i_lo; i <= i_hi; ++i)
        if (g.x(i) > lo && g.x(i) < hi) xs.push_back(g.x(i));
    xs.push_back(hi);
    auto weight = [&](double x) { return radial ? 4.0 * std::numbers::pi * x * x : 1.0; };
    auto value_at = [&](const GridWindow& w, double x) {
        const double q = (x - g.x_min) / g.h;
        const double qr = std::round(q);
        if (std::abs(q - qr) < 1e-9) return w.at(static_cast<long>(qr));
        return w.interpolate(x);
    };
    ConeNorms out;
    double su = 0, sg = 0, st_ = 0;
    for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
        const double xa = xs[k], xb = xs[k + 1], half = 0.5 * (xb - xa);
        const double ua = value_at(st.u, xa), ub = value_at(st.u, xb);
        const double ga = value_at(ux, xa), gb = value_at(ux, xb);
        const double ta = value_at(st.ut, xa), tb = value_at(st.ut, xb);
        const double wa = weight(xa), wb = weight(xb);
        su += half * (wa * ua * ua + wb * ub * ub);
        sg += half * (wa * ga * ga + wb * gb * gb);
        st_ += half * (wa * ta * ta + wb * tb * tb);
    }
    out.l2_u = std::sqrt(su);
    out.l2_grad = std::sqrt(sg);
    out.l2_ut = std::sqrt(st_);
    return out;
}

/// Discrete free energy  int (u_t^2/2 + |grad u|^2/2 - F(u))  over the grid.
inline double free_energy(const WaveField& field, std::size_t snapshot) {
    const auto& g = field.grid;
    const auto& s = field.snapshots.at(snapshot);
    const bool radial = g.geometry == Geometry::Radial3D;
    double e = 0.0;
    for (std::size_t i = 0; i + 1 < g.n; ++i) {
        const double ux = (s.u[i + 1] - s.u[i]) / g.h;
        const double xm = g.x(i) + 0.5 * g.h;
        const double wm = radial ? 4.0 * std::numbers::pi * xm * xm : 1.0;
        e += g.h * wm * 0.5 * ux * ux;
    }
    for (std::size_t i = 0; i < g.n; ++i) {
        const double w = (i == 0 || i + 1 == g.n) ? 0.5 : 1.0;
        const double wr = radial ? 4.0 * std::numbers::pi * g.x(i) * g.x(i) : 1.0;
        e += g.h * w * wr * (0.5 * s.ut[i] * s.ut[i] - eval_F(field.params, s.u[i]));
    }
    return e;
}

struct BlowupSurface {
    std::vector<double> nodes;
    std::vector<double> T_of_x;
    std::vector<double> T_stderr;
    std::vector<double> delta0;
    std::vector<bool> noncharacteristic;
    bool lipschitz_ok = true;
    double lipschitz_tolerance = 0.0;
    double max_lipschitz_excess = 0.0;

    bool empty() const { return nodes.empty(); }

    /// Blow-up time at the resolved node closest to x (within half a cell).
    std::optional<double> T_at(double x, double h) const {
        for (std::size_t k = 0; k < nodes.size(); ++k)
            if (std::abs(nodes[k] - x) <= 0.5 * h + 1e-14) return T_of_x[k];
        return std::nullopt;
    }
};

struct SurfaceFitOptions {
    std::size_t fit_window = 8;
    /// Snapshots count towards a node's fit once |u| exceeds this; 0 selects
    /// stop_amplitude / 20.
    double threshold = 0.0;
    /// Snapshots above this amplitude are skipped (the last few steps before
    /// the stop are under-resolved in time); 0 selects stop_amplitude / 4.
    double ceiling = 0.0;
    double lipschitz_abs_tol = 1e-6;
    double characteristic_margin = 0.05;
};

namespace detail {

struct LineFit {
    double intercept, slope, root, root_stderr;
};

inline std::optional<LineFit> fit_root(std::span<const double> t, std::span<const double> y) {
    const std::size_t n = t.size();
    double tm = 0, ym = 0;
    for (std::size_t k = 0; k < n; ++k) {
        tm += t[k];
        ym += y[k];
    }
    tm /= static_cast<double>(n);
    ym /= static_cast<double>(n);
    double sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < n; ++k) {
        sxx += (t[k] - tm) * (t[k] - tm);
        sxy += (t[k] - tm) * (y[k] - ym);
    }
    if (!(sxx > 0.0)) return std::nullopt;
    const double slope = sxy / sxx;
    if (!(slope < 0.0)) return std::nullopt;
    const double intercept = ym - slope * tm;
    const double root = -intercept / slope;
    double ss = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double r = y[k] - (intercept + slope * t[k]);
        ss += r * r;
    }
    const double sigma2 = n > 2 ? ss / static_cast<double>(n - 2) : 0.0;
    const double se = std::sqrt(sigma2 * (1.0 / static_cast<double>(n) + (root - tm) * (root - tm) / sxx)) / std::abs(slope);
    return LineFit{intercept, slope, root, se};
}

}  // namespace detail

/// Per-node blow-up time: |u|^{-(p-1)/2} is regressed linearly in t over the
/// last `fit_window` snapshots with threshold < |u| <= ceiling, then the loglog envelope
/// log^{a/2}(-log(T - t)) is divided out and the fit repeated until T settles.
inline BlowupSurface estimate_blowup_surface(const WaveField& field, const SurfaceFitOptions& opt = {}) {
    BlowupSurface surf;
    const auto& g = field.grid;
    const auto& m = field.params;
    const double threshold = opt.threshold > 0.0 ? opt.threshold : field.stop_amplitude / 20.0;
    const double ceiling = opt.ceiling > 0.0 ? opt.ceiling : field.stop_amplitude / 4.0;
    const double e = 0.5 * (m.p - 1.0);
    const double t_end = field.t_final();
    const auto [c_lo, c_hi] = causal_region(field, t_end);

    std::vector<double> ts, ys, zs;
    for (std::size_t i = 0; i < g.n; ++i) {
        const double x = g.x(i);
        if (x < c_lo || x > c_hi) continue;
        ts.clear();
        ys.clear();
        for (auto it = field.snapshots.rbegin(); it != field.snapshots.rend() && ts.size() < opt.fit_window; ++it) {
            const double v = std::abs(it->u[i]);
            if (v > ceiling) continue;
            if (!(v > threshold)) break;
            ts.push_back(it->t);
            ys.push_back(std::pow(v, -e));
        }
        if (ts.size() < std::max<std::size_t>(opt.fit_window, 3)) continue;
        auto fit = detail::fit_root(ts, ys);
        if (!fit) continue;
        if (m.a != 0.0) {
            bool ok = true;
            for (int iter = 0; iter < 50 && ok; ++iter) {
                zs.resize(ts.size());
                for (std::size_t k = 0; k < ts.size(); ++k) {
                    const double tau = fit->root - ts[k];
                    if (!(tau > 0.0 && tau < std::exp(-1.0))) {
                        ok = false;
                        break;
                    }
                    zs[k] = ys[k] / std::pow(std::log(-std::log(tau)), 0.5 * m.a);
                }
                if (!ok) break;
                auto refined = detail::fit_root(ts, zs);
                if (!refined) {
                    ok = false;
                    break;
                }
                const double change = std::abs(refined->root - fit->root);
                fit = refined;
                if (change < 1e-15) break;
            }
            if (!ok) continue;
        }
        surf.nodes.push_back(x);
        surf.T_of_x.push_back(fit->root);
        surf.T_stderr.push_back(fit->root_stderr);
    }

    const std::size_t n = surf.nodes.size();
    surf.delta0.assign(n, 0.0);
    surf.noncharacteristic.assign(n, false);
    double max_se = 0.0;
    for (double se : surf.T_stderr) max_se = std::max(max_se, se);
    surf.lipschitz_tolerance = opt.lipschitz_abs_tol + 2.0 * max_se;
    for (std::size_t k = 0; k < n; ++k) {
        double slope = 0.0;
        if (k > 0 && surf.nodes[k] - surf.nodes[k - 1] < 1.5 * g.h)
            slope = std::max(slope, std::abs(surf.T_of_x[k] - surf.T_of_x[k - 1]) / (surf.nodes[k] - surf.nodes[k - 1]));
        if (k + 1 < n && surf.nodes[k + 1] - surf.nodes[k] < 1.5 * g.h)
            slope = std::max(slope, std::abs(surf.T_of_x[k + 1] - surf.T_of_x[k]) / (surf.nodes[k + 1] - surf.nodes[k]));
        surf.delta0[k] = slope;
        surf.noncharacteristic[k] = slope < 1.0 - opt.characteristic_margin;
    }
    // All-pairs 1-Lipschitz test in O(n): for i < j we need
    // (T_j - x_j) - (T_i - x_i) <= tol and (T_i + x_i) - (T_j + x_j) <= tol.
    double min_minus = std::numeric_limits<double>::infinity();
    double max_plus = -std::numeric_limits<double>::infinity();
    double excess = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double minus = surf.T_of_x[k] - surf.nodes[k];
        const double plus = surf.T_of_x[k] + surf.nodes[k];
        if (k > 0) excess = std::max({excess, minus - min_minus, max_plus - plus});
        min_minus = std::min(min_minus, minus);
        max_plus = std::max(max_plus, plus);
    }
    surf.max_lipschitz_excess = excess;
    surf.lipschitz_ok = excess <= surf.lipschitz_tolerance;
    return surf;
}

inline void write_snapshot_csv(const WaveField& field, const std::filesystem::path& path, std::size_t stride = 1) {
    std::vector<std::string> header{"t"};
    for (std::size_t i = 0; i < field.grid.n; ++i) header.push_back("u" + std::to_string(i));
    io::CsvWriter csv(path, header);
    std::vector<double> row(field.grid.n + 1);
    for (std::size_t k = 0; k < field.snapshots.size(); k += std::max<std::size_t>(stride, 1)) {
        row[0] = field.snapshots[k].t;
        std::copy(field.snapshots[k].u.begin(), field.snapshots[k].u.end(), row.begin() + 1);
        csv.row(row);
    }
}

}  // namespace blowup
