#pragma once

#include <cmath>
#include <sstream>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/similarity.hpp"
#include "blowup/wave_solver.hpp"

namespace blowup {

/// u0 = amplitude exp(-|x|^2 / width^2), u1 = velocity exp(-|x|^2 / width^2).
struct BumpData {
    double amplitude = 5.0;
    double width = 0.3;
    double velocity = 0.0;

    std::vector<double> u0(const Grid& g) const {
        return g.sample([this](double x) { return amplitude * std::exp(-x * x / (width * width)); });
    }
    std::vector<double> u1(const Grid& g) const {
        return g.sample([this](double x) { return velocity * std::exp(-x * x / (width * width)); });
    }
};

struct BlowupRunOptions {
    double cfl = 0.5;
    double stop_amplitude = 1e4;
    double t_max = 10.0;
    double x0 = 0.0;
    /// Frames are requested at T - e^{-s} for s = s_start, s_start + ds, ..., s_end.
    double s_start = 2.7;
    double s_end = 7.7;
    double ds = 0.05;
    /// Spacing in t of the uniformly kept levels (rate quotient sampling).
    double record_dt = 0.005;
    std::size_t time_halo = 2;
    SurfaceFitOptions fit;
};

struct BlowupRun {
    WaveField field;
    BlowupSurface surface;
    double T_pass1 = 0.0;  ///< estimate used to place the requested frame times
    double T0 = 0.0;       ///< fitted blow-up time at x0 from the recorded run
    double x0 = 0.0;
    std::vector<double> s_values;
};

inline std::vector<double> s_grid(double s_start, double s_end, double ds) {
    if (!(ds > 0.0) || !(s_end >= s_start)) throw ConfigError("s grid needs ds > 0 and s_end >= s_start");
    std::vector<double> s;
    const auto count = static_cast<std::size_t>(std::floor((s_end - s_start) / ds + 1e-9));
    for (std::size_t k = 0; k <= count; ++k) s.push_back(s_start + ds * static_cast<double>(k));
    return s;
}

namespace detail {

inline double resolved_T(const BlowupSurface& surface, double x0, double h, const char* pass) {
    const auto T = surface.T_at(x0, h);
    if (!T) {
        std::ostringstream msg;
        msg << "blow-up time at x0 = " << x0 << " not resolved in " << pass
            << " (no blow-up before the stop, or the stop amplitude is too low)";
        throw NumericalError(msg.str());
    }
    return *T;
}

}  // namespace detail

/// Two passes: the first locates T at x0; the second records the levels that
/// bracket T - e^{-s} on the requested s grid, plus a uniform sampling and
/// every level near the stop (for the surface fit).
inline BlowupRun run_blowup(const ModelParams& m, const Grid& grid, const std::vector<double>& u0,
                            const std::vector<double>& u1, const BlowupRunOptions& opt = {}) {
    const StoppingRule stop{opt.stop_amplitude, opt.t_max};
    const double dense = opt.fit.threshold > 0.0 ? opt.fit.threshold : opt.stop_amplitude / 20.0;
    const double dt = opt.cfl * grid.h;
    RecordingPlan plan;
    plan.dense_above_amplitude = dense;
    const WaveField first = evolve(m, grid, u0, u1, opt.cfl, stop, plan);
    if (first.stop_reason != StopReason::Amplitude)
        throw NumericalError("run_blowup: no blow-up before t_max; increase the data or t_max");

    BlowupRun run;
    run.x0 = opt.x0;
    run.T_pass1 = detail::resolved_T(estimate_blowup_surface(first, opt.fit), opt.x0, grid.h, "the first pass");
    run.s_values = s_grid(opt.s_start, opt.s_end, opt.ds);
    plan.time_halo = opt.time_halo;
    plan.stride = opt.record_dt > 0.0 ? std::max<std::size_t>(1, static_cast<std::size_t>(opt.record_dt / dt)) : 0;
    for (double s : run.s_values) plan.times.push_back(run.T_pass1 - std::exp(-s));
    run.field = evolve(m, grid, u0, u1, opt.cfl, stop, plan);
    run.surface = estimate_blowup_surface(run.field, opt.fit);
    run.T0 = detail::resolved_T(run.surface, opt.x0, grid.h, "the recording pass");
    return run;
}

/// Similarity frames at T0 - e^{-s} for every s of the run.
inline std::vector<SimilarFrame> similarity_frames(const BlowupRun& run, const BallGrid& ball) {
    std::vector<SimilarFrame> frames;
    frames.reserve(run.s_values.size());
    for (double s : run.s_values) frames.push_back(to_similarity(run.field, run.x0, run.T0, run.T0 - std::exp(-s), ball));
    return frames;
}

}  // namespace blowup
