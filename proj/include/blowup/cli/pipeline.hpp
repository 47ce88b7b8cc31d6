#pragma once

#include <openssl/evp.h>

#include "json.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "blowup/cli/config.hpp"
#include "blowup/duhamel.hpp"
#include "blowup/experiment.hpp"
#include "blowup/ode_blowup.hpp"
#include "blowup/rate_analysis.hpp"
#include "blowup/similarity.hpp"
#include "blowup/wave_solver.hpp"

namespace blowup::cli {

using json = nlohmann::ordered_json;

enum ExitStatus { kOk = 0, kConfigError = 1, kNumericalFailure = 2 };

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

/// Output directory: --out, then io.out, then $BLOWUP_OUT_ROOT/<experiment>,
/// then ./blowup-out/<experiment>.
inline std::filesystem::path resolve_out_dir(const RunConfig& c, const std::optional<std::filesystem::path>& flag) {
    if (flag) return *flag;
    if (!c.out.empty()) return c.out;
    if (const char* root = std::getenv("BLOWUP_OUT_ROOT"); root && *root) return std::filesystem::path(root) / c.experiment;
    return std::filesystem::path("blowup-out") / c.experiment;
}

/// Tracks every file written into a run directory.
class Artifacts {
public:
    explicit Artifacts(std::filesystem::path root) : root_(std::move(root)) { std::filesystem::create_directories(root_); }

    std::filesystem::path add(const std::string& name) {
        files_.push_back(name);
        return root_ / name;
    }
    void write_json(const std::string& name, const json& j) {
        std::ofstream out(add(name));
        out << j.dump(2) << '\n';
    }
    const std::filesystem::path& root() const { return root_; }

    json manifest_files() const {
        json arr = json::array();
        for (const auto& f : files_) {
            const auto p = root_ / f;
            arr.push_back({{"path", f}, {"bytes", std::filesystem::file_size(p)}, {"sha256", sha256_file(p)}});
        }
        return arr;
    }

private:
    std::filesystem::path root_;
    std::vector<std::string> files_;
};

namespace detail {

inline json ode_section(const RunConfig& c, Artifacts& art) {
    OdeOptions opt;
    opt.rel_tol = c.ode.rel_tol;
    opt.abs_tol = c.ode.abs_tol;
    opt.checkpoints = c.ode.checkpoints;
    const OdeTrajectory traj = integrate_ode(c.model, c.ode.A, c.ode.B, c.ode.stop_amplitude, opt);
    write_trajectory_csv(traj, art.add("trajectory.csv"));

    json sec{{"T_est", traj.T_est},
             {"T_extrapolated", traj.T_extrapolated},
             {"two_method_discrepancy", two_method_discrepancy(traj)},
             {"first_integral_C", traj.C_first_integral},
             {"max_relative_drift", traj.max_relative_drift()},
             {"samples", traj.samples.size()},
             {"rejected_steps", traj.rejected_steps}};
    json cps = json::array();
    for (double t : c.ode.checkpoints)
        for (const auto& s : traj.samples)
            if (s.t == t) cps.push_back({{"t", t}, {"v", s.v}, {"v_prime", s.v_prime}});
    sec["checkpoints"] = cps;

    const AsymptoticRateReport rep = asymptotic_rate_report(traj);
    const auto slopes = dyadic_log_slopes(rep, c.ode.tau_hi, c.ode.tau_lo);
    io::CsvWriter csv(art.add("rate_slopes.csv"), {"tau_hi", "tau_lo", "log_slope"});
    bool monotone = slopes.size() >= 2;
    for (std::size_t k = 0; k < slopes.size(); ++k) {
        csv.row({slopes[k].tau_hi, slopes[k].tau_lo, slopes[k].slope});
        if (k > 0 && !(std::abs(slopes[k].slope) < std::abs(slopes[k - 1].slope))) monotone = false;
    }
    sec["dyadic_checkpoints"] = slopes.size();
    sec["slope_magnitude_decreasing"] = monotone;
    return sec;
}

inline json surface_json(const BlowupSurface& s, double x0, double h) {
    const auto T = s.T_at(x0, h);
    return {{"resolved_nodes", s.nodes.size()},
            {"T_at_x0", T ? json(*T) : json(nullptr)},
            {"lipschitz_ok", s.lipschitz_ok},
            {"max_lipschitz_excess", s.max_lipschitz_excess},
            {"lipschitz_tolerance", s.lipschitz_tolerance}};
}

inline void write_surface_csv(const BlowupSurface& s, const std::filesystem::path& path) {
    io::CsvWriter csv(path, {"x", "T", "T_stderr", "delta0", "noncharacteristic"});
    for (std::size_t k = 0; k < s.nodes.size(); ++k)
        csv.row({s.nodes[k], s.T_of_x[k], s.T_stderr[k], s.delta0[k], s.noncharacteristic[k] ? 1.0 : 0.0});
}

inline void write_amplitude_csv(const WaveField& f, const std::filesystem::path& path) {
    io::CsvWriter csv(path, {"t", "max_abs_u", "free_energy"});
    for (std::size_t k = 0; k < f.snapshots.size(); ++k)
        csv.row({f.snapshots[k].t, blowup::detail::max_abs(f.snapshots[k].u), free_energy(f, k)});
}

inline std::vector<double> wave_u0(const RunConfig& c, const Grid& g) {
    if (c.wave.data == "constant") return std::vector<double>(g.n, c.wave.bump.amplitude);
    return c.wave.bump.u0(g);
}
inline std::vector<double> wave_u1(const RunConfig& c, const Grid& g) {
    if (c.wave.data == "constant") return std::vector<double>(g.n, c.wave.bump.velocity);
    return c.wave.bump.u1(g);
}

inline json wave_section(const RunConfig& c, Artifacts& art) {
    const Grid g = c.wave_grid();
    RecordingPlan plan;
    plan.stride = std::max<std::size_t>(1, static_cast<std::size_t>(c.wave.record_dt / (c.wave.cfl * g.h)));
    plan.dense_above_amplitude = c.wave.stop_amplitude / 20.0;
    const WaveField f = evolve(c.model, g, wave_u0(c, g), wave_u1(c, g), c.wave.cfl,
                               StoppingRule{c.wave.stop_amplitude, c.wave.t_max}, plan);
    SurfaceFitOptions fit;
    fit.fit_window = c.wave.fit_window;
    json sec{{"nodes", g.n},
             {"h", g.h},
             {"dt", f.dt},
             {"steps", f.steps},
             {"stop_reason", to_string(f.stop_reason)},
             {"t_final", f.t_final()},
             {"recorded_levels", f.snapshots.size()}};
    write_amplitude_csv(f, art.add("amplitude.csv"));
    if (f.stop_reason == StopReason::Amplitude) {
        const BlowupSurface s = estimate_blowup_surface(f, fit);
        write_surface_csv(s, art.add("blowup_surface.csv"));
        sec["surface"] = surface_json(s, c.wave.x0, g.h);
    }
    if (c.snapshot_stride > 0) write_snapshot_csv(f, art.add("snapshots.csv"), c.snapshot_stride);
    return sec;
}

inline json run_section(const RunConfig& c, const BlowupRun& run) {
    return {{"nodes", run.field.grid.n},
            {"h", run.field.grid.h},
            {"dt", run.field.dt},
            {"steps", run.field.steps},
            {"T_pass1", run.T_pass1},
            {"T0", run.T0},
            {"x0", run.x0},
            {"recorded_levels", run.field.snapshots.size()},
            {"surface", surface_json(run.surface, c.wave.x0, run.field.grid.h)}};
}

inline json similarity_section(const RunConfig& c, const BlowupRun& run, const std::vector<SimilarFrame>& frames,
                               Artifacts& art) {
    const FunctionalSeries fs = eval_lyapunov_family(frames, c.similarity.m, c.similarity.C_lyap);
    const LyapunovCheck chk = check_lyapunov(fs, c.similarity.tail_factor);
    write_series_csv(fs, art.add("functional_series.csv"));

    const EnergyDerivativeCheck ed = energy_derivative_check(frames);
    {
        io::CsvWriter csv(art.add("energy_derivative.csv"), {"s", "dE_ds", "dissipation_term", "majorant"});
        for (std::size_t k = 0; k < ed.s.size(); ++k) csv.row({ed.s[k], ed.dE_ds[k], ed.dissipation_term[k], ed.majorant[k]});
    }
    double max_residual = 0.0;
    {
        io::CsvWriter csv(art.add("w_residual.csv"), {"s", "residual"});
        for (std::size_t k = 1; k + 1 < frames.size(); ++k) {
            const double r = w_equation_residual(frames[k - 1], frames[k], frames[k + 1]);
            max_residual = std::max(max_residual, r);
            csv.row({frames[k].s, r});
        }
    }
    const HardyEstimate hardy =
        hardy_constant_estimate(c.model, frames.front().grid, c.similarity.hardy_draws, c.seed);
    {
        io::CsvWriter csv(art.add("hardy.csv"), {"draw", "ratio"});
        for (std::size_t k = 0; k < hardy.ratios.size(); ++k) csv.row({static_cast<double>(k), hardy.ratios[k]});
    }
    double eps_w = 0.0;
    for (const auto& f : frames) eps_w = std::max(eps_w, f.epsilon_w());
    return {{"frames", frames.size()},
            {"s_start", fs.s_values.front()},
            {"s_end", fs.s_values.back()},
            {"m", fs.m},
            {"C_lyap", fs.C_lyap},
            {"s0", fs.s0},
            {"b", fs.b},
            {"N_min", chk.min_N},
            {"N_worst_margin", chk.worst_N_margin},
            {"Ltilde_max_increase", chk.max_Ltilde_increase},
            {"Ltilde_worst_margin", chk.worst_Ltilde_margin},
            {"L0_path_gap", chk.max_L0_path_gap},
            {"smallest_monotone_m", chk.smallest_monotone_m},
            {"N_nonnegative", chk.nonnegative},
            {"Ltilde_decreasing", chk.decreasing},
            {"energy_derivative_C", ed.C},
            {"w_residual_max", max_residual},
            {"hardy_max_ratio", hardy.max_ratio},
            {"epsilon_w", eps_w},
            {"T0", run.T0}};
}

inline json rate_section(const RunConfig& c, const BlowupRun& run, const std::vector<SimilarFrame>& frames,
                         Artifacts& art) {
    RateWindow w;
    w.t_start = c.rate.t_start;
    w.t_end = c.rate.t_end;
    w.growth_factor = c.rate.growth_factor;
    w.min_tau_cells = c.rate.min_tau_cells;
    const RateReport r = rate_quotient(run.field, run.surface, run.x0, w);
    write_rate_csv(r, art.add("rate.csv"));

    const double b = c.similarity.m * (c.model.p + 3.0) / 2.0;
    const auto avg = energy_averages(frames, b);
    const auto loc = local_norms(frames);
    const auto pot = potential_averages(frames);
    auto dump = [&](const std::string& name, const std::vector<AverageSample>& v) {
        io::CsvWriter csv(art.add(name), {"s", "value"});
        for (const auto& a : v) csv.row({a.s, a.value});
    };
    dump("energy_averages.csv", avg);
    dump("local_norms.csv", loc);
    dump("potential_averages.csv", pot);
    double loc_max = 0.0;
    for (const auto& a : loc) loc_max = std::max(loc_max, a.value);
    return {{"x0", r.x0},
            {"T", r.T},
            {"t_start", r.t_start},
            {"t_end", r.t_end},
            {"samples", r.t_grid.size()},
            {"k_hat", r.k_hat},
            {"K_hat", r.K_hat},
            {"spread", r.spread()},
            {"local_norm_max", loc_max}};
}

inline json duhamel_section(const RunConfig& c, Artifacts& art) {
    const Grid g = c.duhamel_grid();
    const auto u0 = c.duhamel.bump.u0(g), u1 = c.duhamel.bump.u1(g);
    PicardOptions po;
    po.slices = c.duhamel.slices;
    po.max_iter = c.duhamel.max_iter;
    po.tolerance = c.duhamel.tolerance;
    const PicardState st = picard_solve(c.model, g, u0, u1, c.duhamel.t0_local, po);
    write_contraction_csv(st, art.add("contraction.csv"));

    RecordingPlan plan;
    plan.times = st.slice_times;
    const WaveField fd = evolve(c.model, g, u0, u1, c.duhamel.cfl,
                                StoppingRule{std::numeric_limits<double>::infinity(), c.duhamel.t0_local * (1.0 + 1e-12)},
                                plan);
    const double diff = cone_sup_difference(st, fd);
    double worst_ratio = 0.0;
    for (double r : st.contraction_ratios) worst_ratio = std::max(worst_ratio, r);

    json sec{{"iterations", st.sup_diffs.size()},
             {"converged", st.converged},
             {"max_contraction_ratio", worst_ratio},
             {"fd_sup_difference", diff},
             {"fd_tolerance", 5.0 * (g.h * g.h + 1e-8)},
             {"empirical_ball_constant", empirical_ball_constant(st, u0, u1)}};

    const double t1 = 0.5 * c.duhamel.t0_local;
    const double radius = std::min(1.0, (c.duhamel.half_width - t1) / c.duhamel.lambda);
    const RescaledProblem rp = rescaled_problem(fd, 0.0, t1, c.duhamel.lambda, radius);
    sec["rescaled"] = {{"lambda", rp.lambda}, {"t1", t1}, {"radius", radius}, {"smallness_norm", rp.smallness_norm}, {"A", rp.A()}};

    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> U(-50.0, 50.0), L(-12.0, 0.0);
    const double beta = 2.0 / (c.model.p - 1.0);
    double worst = 0.0;
    io::CsvWriter csv(art.add("rescaling_identity.csv"), {"u", "lambda", "lhs", "rhs", "relative_error"});
    for (std::size_t k = 0; k < c.duhamel.rescale_pairs; ++k) {
        const double u = U(rng), lam = std::pow(10.0, L(rng));
        const double lhs = eval_h_lambda(c.model, lam, std::pow(lam, beta) * u);
        const double rhs = std::pow(lam, 2.0 * c.model.p / (c.model.p - 1.0)) * eval_f(c.model, u);
        const double rel = std::abs(lhs - rhs) / std::max(std::abs(rhs), std::numeric_limits<double>::min());
        worst = std::max(worst, rel);
        csv.row({u, lam, lhs, rhs, rel});
    }
    sec["rescaling_identity_max_relative_error"] = worst;
    return sec;
}

inline json diagnostics_for(const std::exception& e) {
    json d{{"error", "numerical_failure"}, {"message", e.what()}};
    if (const auto* cf = dynamic_cast<const ContractionFailure*>(&e)) {
        d["error"] = "contraction_failure";
        d["contraction_ratios"] = cf->ratios;
    } else if (const auto* is = dynamic_cast<const IntegratorStall*>(&e)) {
        d["error"] = "integrator_stall";
        d["t"] = is->t;
        d["v"] = is->v;
        d["v_prime"] = is->v_prime;
    } else if (const auto* q = dynamic_cast<const QuadratureError*>(&e)) {
        d["error"] = "quadrature_error";
        d["achieved_error"] = q->achieved_error();
    } else if (const auto* bo = dynamic_cast<const BlowupOverrun*>(&e)) {
        d["error"] = "blowup_overrun";
        d["last_valid_t"] = bo->last_valid.t;
    } else if (dynamic_cast<const InsufficientData*>(&e)) {
        d["error"] = "insufficient_data";
    } else if (dynamic_cast<const DomainError*>(&e)) {
        d["error"] = "domain_error";
    }
    return d;
}

}  // namespace detail

/// Executes the configured experiment into `dir`; returns the exit status.
inline int run(const RunConfig& c, const std::filesystem::path& dir, std::ostream& log = std::clog) {
    Artifacts art(dir);
    json summary = json::object();
    json manifest{{"experiment", c.experiment}, {"seed", c.seed}};
    json cfg = json::object();
    for (const auto& [k, v] : c.entries) cfg[k] = v;
    manifest["config"] = cfg;
    int status = kOk;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const std::string& e = c.experiment;
        if (e == "ode" || e == "pipeline") summary["ode"] = detail::ode_section(c, art);
        if (e == "wave") summary["wave"] = detail::wave_section(c, art);
        if (e == "duhamel") summary["duhamel"] = detail::duhamel_section(c, art);
        if (e == "similarity" || e == "rate" || e == "pipeline") {
            const Grid g = c.wave_grid();
            const BlowupRun r = run_blowup(c.model, g, detail::wave_u0(c, g), detail::wave_u1(c, g), c.blowup_options());
            summary["wave"] = detail::run_section(c, r);
            const auto frames = similarity_frames(r, make_ball_grid(c.model.N, c.similarity.eps_w));
            if (e != "rate") summary["similarity"] = detail::similarity_section(c, r, frames, art);
            if (e != "similarity") summary["rate"] = detail::rate_section(c, r, frames, art);
        }
        manifest["status"] = "ok";
    } catch (const ConfigError& ex) {
        log << "configuration error: " << ex.what() << '\n';
        art.write_json("diagnostics.json", {{"error", "config_error"}, {"message", ex.what()}});
        manifest["status"] = "config_error";
        status = kConfigError;
    } catch (const std::exception& ex) {
        log << "numerical failure: " << ex.what() << '\n';
        art.write_json("diagnostics.json", detail::diagnostics_for(ex));
        manifest["status"] = "numerical_failure";
        status = kNumericalFailure;
    }
    manifest["summary"] = summary;
    art.write_json("summary.json", summary);
    manifest["files"] = art.manifest_files();
    {
        std::ofstream out(dir / "manifest.json");
        out << manifest.dump(2) << '\n';
    }
    log << c.experiment << ": " << manifest["status"].get<std::string>() << " in "
        << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s -> " << dir.string()
        << '\n';
    return status;
}

namespace detail {

inline std::string gnuplot_script(const std::filesystem::path& dir) {
    std::ostringstream gp;
    gp << "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n";
    if (std::filesystem::exists(dir / "rate.csv"))
        gp << "set output 'rate.png'\nset xlabel 't'\nset ylabel 'quotient'\nplot 'rate.csv' using 1:2 with lines\n";
    if (std::filesystem::exists(dir / "functional_series.csv"))
        gp << "set output 'functionals.png'\nset xlabel 's'\nset ylabel 'value'\n"
              "plot 'functional_series.csv' using 1:5 with lines title 'N_m', "
              "'' using 1:7 with lines title 'Ltilde_m', '' using 1:2 with lines title 'E'\n";
    if (std::filesystem::exists(dir / "trajectory.csv"))
        gp << "set output 'trajectory.png'\nset xlabel 't'\nset ylabel 'v'\nset logscale y\n"
              "plot 'trajectory.csv' using 1:2 with lines\nunset logscale y\n";
    return gp.str();
}

}  // namespace detail

/// Merges the summaries of a run directory into report.json and writes a
/// gnuplot script for the CSV curves. Returns 1 on a missing or corrupt
/// manifest (unparsable, or a listed file missing or with a different hash).
inline int report(const std::filesystem::path& dir, std::ostream& log = std::clog) {
    const auto mpath = dir / "manifest.json";
    if (!std::filesystem::exists(mpath)) {
        log << "report: no manifest.json in " << dir.string() << '\n';
        return kConfigError;
    }
    json manifest;
    try {
        std::ifstream in(mpath);
        manifest = json::parse(in);
        if (!manifest.contains("files") || !manifest.contains("summary")) throw std::runtime_error("missing keys");
        for (const auto& f : manifest.at("files")) {
            const auto p = dir / f.at("path").get<std::string>();
            if (!std::filesystem::exists(p)) throw std::runtime_error("listed file " + p.string() + " is missing");
            if (sha256_file(p) != f.at("sha256").get<std::string>())
                throw std::runtime_error("hash mismatch for " + p.string());
        }
    } catch (const std::exception& e) {
        log << "report: corrupt manifest in " << dir.string() << ": " << e.what() << '\n';
        return kConfigError;
    }
    const json& summary = manifest.at("summary");
    json rep{{"experiment", manifest.value("experiment", "")}, {"status", manifest.value("status", "")},
             {"seed", manifest.value("seed", 0)}, {"sections", summary}};
    if (summary.contains("rate") && summary.contains("similarity")) {
        const auto& r = summary.at("rate");
        const auto& s = summary.at("similarity");
        rep["cross_reference"] = {{"k_hat", r.at("k_hat")},
                                  {"K_hat", r.at("K_hat")},
                                  {"N_m_min", s.at("N_min")},
                                  {"Ltilde_m_max_increase", s.at("Ltilde_max_increase")},
                                  {"T_rate", r.at("T")},
                                  {"T_similarity", s.at("T0")}};
    }
    {
        std::ofstream out(dir / "report.json");
        out << rep.dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "plot.gp");
        out << detail::gnuplot_script(dir);
    }
    log << "report: " << summary.size() << " section(s) -> " << (dir / "report.json").string() << '\n';
    return kOk;
}

}  // namespace blowup::cli
