#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/experiment.hpp"
#include "blowup/nonlinearity.hpp"
#include "blowup/wave_solver.hpp"

namespace blowup::cli {

inline const std::vector<std::string>& experiments() {
    static const std::vector<std::string> names{"ode", "wave", "similarity", "rate", "duhamel", "pipeline"};
    return names;
}

/// Every accepted key with its default. Sections mirror the experiments.
inline const std::vector<std::pair<std::string, std::string>>& config_defaults() {
    static const std::vector<std::pair<std::string, std::string>> d{
        {"model.p", "3"},
        {"model.a", "1"},
        {"model.N", "1"},
        {"run.seed", "1"},
        {"io.out", ""},
        {"io.snapshot_stride", "0"},
        {"ode.A", "1"},
        {"ode.B", "1"},
        {"ode.stop_amplitude", "1e8"},
        {"ode.rel_tol", "1e-10"},
        {"ode.abs_tol", "1e-12"},
        {"ode.checkpoints", ""},
        {"ode.tau_hi", "1e-6"},
        {"ode.tau_lo", "1e-8"},
        {"wave.data", "bump"},
        {"wave.amplitude", "5"},
        {"wave.width", "0.3"},
        {"wave.velocity", "0"},
        {"wave.half_width", "0.5"},
        {"wave.h", "2e-4"},
        {"wave.cfl", "0.5"},
        {"wave.stop_amplitude", "1e4"},
        {"wave.t_max", "10"},
        {"wave.x0", "0"},
        {"wave.record_dt", "0.005"},
        {"wave.fit_window", "8"},
        {"similarity.eps_w", "1e-3"},
        {"similarity.m", "10"},
        {"similarity.C_lyap", "10"},
        {"similarity.s_start", "2.7"},
        {"similarity.s_end", "7.7"},
        {"similarity.ds", "0.05"},
        {"similarity.tail_factor", "10"},
        {"similarity.hardy_draws", "100"},
        {"rate.growth_factor", "10"},
        {"rate.min_tau_cells", "2"},
        {"rate.t_start", "auto"},
        {"rate.t_end", "auto"},
        {"duhamel.amplitude", "0.1"},
        {"duhamel.width", "0.3"},
        {"duhamel.velocity", "0"},
        {"duhamel.half_width", "1"},
        {"duhamel.h", "0.01"},
        {"duhamel.cfl", "0.5"},
        {"duhamel.t0_local", "0.5"},
        {"duhamel.slices", "20"},
        {"duhamel.max_iter", "60"},
        {"duhamel.tolerance", "1e-8"},
        {"duhamel.lambda", "0.1"},
        {"duhamel.rescale_pairs", "100"},
    };
    return d;
}

struct OdeConfig {
    double A, B, stop_amplitude, rel_tol, abs_tol, tau_hi, tau_lo;
    std::vector<double> checkpoints;
};

struct WaveConfig {
    std::string data;
    BumpData bump;
    double half_width, h, cfl, stop_amplitude, t_max, x0, record_dt;
    std::size_t fit_window;
};

struct SimilarityConfig {
    double eps_w, m, C_lyap, s_start, s_end, ds, tail_factor;
    std::size_t hardy_draws;
};

struct RateConfig {
    double growth_factor, min_tau_cells;
    std::optional<double> t_start, t_end;
};

struct DuhamelConfig {
    BumpData bump;
    double half_width, h, cfl, t0_local, tolerance, lambda;
    std::size_t slices, max_iter, rescale_pairs;
};

struct RunConfig {
    std::string experiment;
    ModelParams model;
    std::uint64_t seed = 1;
    std::filesystem::path out;
    std::size_t snapshot_stride = 0;
    OdeConfig ode;
    WaveConfig wave;
    SimilarityConfig similarity;
    RateConfig rate;
    DuhamelConfig duhamel;
    /// Resolved key = value pairs (defaults merged with file and overrides), in
    /// declaration order.
    std::vector<std::pair<std::string, std::string>> entries;

    Grid wave_grid() const {
        const auto cells = static_cast<std::size_t>(std::llround((model.N == 1 ? 2.0 : 1.0) * wave.half_width / wave.h));
        return model.N == 1 ? Grid::line(-wave.half_width, wave.half_width, cells + 1) : Grid::radial(wave.half_width, cells + 1);
    }
    Grid duhamel_grid() const {
        const auto cells =
            static_cast<std::size_t>(std::llround((model.N == 1 ? 2.0 : 1.0) * duhamel.half_width / duhamel.h));
        return model.N == 1 ? Grid::line(-duhamel.half_width, duhamel.half_width, cells + 1)
                            : Grid::radial(duhamel.half_width, cells + 1);
    }
    BlowupRunOptions blowup_options() const {
        BlowupRunOptions o;
        o.cfl = wave.cfl;
        o.stop_amplitude = wave.stop_amplitude;
        o.t_max = wave.t_max;
        o.x0 = wave.x0;
        o.s_start = similarity.s_start;
        o.s_end = similarity.s_end;
        o.ds = similarity.ds;
        o.record_dt = wave.record_dt;
        o.fit.fit_window = wave.fit_window;
        return o;
    }
};

namespace detail {

class KeyValues {
public:
    KeyValues() {
        for (const auto& [k, v] : config_defaults()) values_[k] = v;
    }

    void set(const std::string& key, const std::string& value, const std::string& origin) {
        if (!values_.count(key)) {
            std::ostringstream msg;
            msg << origin << ": unknown configuration key '" << key << "'";
            throw ConfigError(msg.str());
        }
        values_[key] = value;
    }

    const std::string& raw(const std::string& key) const { return values_.at(key); }

    double real(const std::string& key) const {
        const std::string& s = raw(key);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
            throw ConfigError(key + " = '" + s + "' is not a finite number");
        return v;
    }

    /// Value in (lo, hi) / [lo, hi] according to the open flags.
    double real(const std::string& key, double lo, double hi, bool lo_open = true, bool hi_open = false) const {
        const double v = real(key);
        const bool ok_lo = lo_open ? v > lo : v >= lo;
        const bool ok_hi = hi_open ? v < hi : v <= hi;
        if (!ok_lo || !ok_hi) {
            std::ostringstream msg;
            msg << key << " = " << raw(key) << " outside " << (lo_open ? '(' : '[') << lo << ", " << hi
                << (hi_open ? ')' : ']');
            throw ConfigError(msg.str());
        }
        return v;
    }

    std::uint64_t count(const std::string& key, std::uint64_t lo, std::uint64_t hi) const {
        const std::string& s = raw(key);
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw ConfigError(key + " = '" + s + "' is not a non-negative integer");
        if (v < lo || v > hi) {
            std::ostringstream msg;
            msg << key << " = " << v << " outside [" << lo << ", " << hi << "]";
            throw ConfigError(msg.str());
        }
        return v;
    }

    std::optional<double> real_or_auto(const std::string& key) const {
        if (raw(key) == "auto") return std::nullopt;
        return real(key);
    }

    std::vector<double> real_list(const std::string& key) const {
        std::vector<double> out;
        std::stringstream ss(raw(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
            if (b == std::string::npos) continue;
            item = item.substr(b, e - b + 1);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
            if (ec != std::errc() || ptr != item.data() + item.size())
                throw ConfigError(key + ": '" + item + "' is not a number");
            out.push_back(v);
        }
        return out;
    }

    std::vector<std::pair<std::string, std::string>> ordered() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& [k, v] : config_defaults()) out.emplace_back(k, values_.at(k));
        return out;
    }

private:
    std::map<std::string, std::string> values_;
};

inline void read_file(KeyValues& kv, const std::filesystem::path& path) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config file " + path.string() + ": " + e.message() +
                          (e.line() ? " (line " + std::to_string(e.line()) + ")" : std::string()));
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError(path.string() + ": key '" + section + "' must be inside a [section]");
        for (const auto& [key, value] : body) kv.set(section + "." + key, value.data(), path.string());
    }
}

}  // namespace detail

/// Parses `key = value` lines grouped in `[section]`s, applies `section.key=value`
/// overrides, and validates every knob against its admissible range.
inline RunConfig load_config(const std::string& experiment, const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides = {},
                             const std::optional<std::uint64_t>& seed = std::nullopt) {
    bool known = false;
    for (const auto& e : experiments()) known = known || e == experiment;
    if (!known) throw ConfigError("unknown experiment '" + experiment + "'");

    detail::KeyValues kv;
    if (file) {
        if (!std::filesystem::exists(*file)) throw ConfigError("config file " + file->string() + " does not exist");
        detail::read_file(kv, *file);
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("--override '" + o + "' must have the form section.key=value");
        kv.set(o.substr(0, eq), o.substr(eq + 1), "--override");
    }
    if (seed) kv.set("run.seed", std::to_string(*seed), "--seed");

    RunConfig c;
    c.experiment = experiment;
    const double p = kv.real("model.p", 1.0, 1e3);
    const double a = kv.real("model.a");
    const auto N = static_cast<int>(kv.count("model.N", 1, 3));
    if (N == 2) throw ConfigError("model.N = 2 is not supported (use 1 or 3)");
    try {
        c.model = ModelParams(p, a, N);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    c.seed = kv.count("run.seed", 0, std::numeric_limits<std::uint64_t>::max());
    c.out = kv.raw("io.out");
    c.snapshot_stride = kv.count("io.snapshot_stride", 0, 1u << 30);

    auto& o = c.ode;
    o.A = kv.real("ode.A", 0.0, 1e300);
    o.B = kv.real("ode.B", 0.0, 1e300);
    o.stop_amplitude = kv.real("ode.stop_amplitude", o.A, 1e300);
    o.rel_tol = kv.real("ode.rel_tol", 0.0, 1e-2);
    o.abs_tol = kv.real("ode.abs_tol", 0.0, 1.0);
    o.checkpoints = kv.real_list("ode.checkpoints");
    for (double t : o.checkpoints)
        if (!(t > 0.0)) throw ConfigError("ode.checkpoints must be positive times");
    std::sort(o.checkpoints.begin(), o.checkpoints.end());
    o.tau_hi = kv.real("ode.tau_hi", 0.0, std::exp(-1.0));
    o.tau_lo = kv.real("ode.tau_lo", 0.0, o.tau_hi, true, true);

    auto& w = c.wave;
    w.data = kv.raw("wave.data");
    if (w.data != "bump" && w.data != "constant")
        throw ConfigError("wave.data = '" + w.data + "' must be 'bump' or 'constant'");
    w.bump.amplitude = kv.real("wave.amplitude", -1e300, 1e300);
    w.bump.width = kv.real("wave.width", 0.0, 1e300);
    w.bump.velocity = kv.real("wave.velocity", -1e300, 1e300);
    w.half_width = kv.real("wave.half_width", 0.0, 1e6);
    w.h = kv.real("wave.h", 0.0, w.half_width / 4.0);
    w.cfl = kv.real("wave.cfl", 0.0, max_cfl(N == 1 ? Geometry::Line : Geometry::Radial3D));
    w.stop_amplitude = kv.real("wave.stop_amplitude", 0.0, 1e300);
    w.t_max = kv.real("wave.t_max", 0.0, 1e300);
    w.x0 = kv.real("wave.x0", N == 1 ? -w.half_width : 0.0, N == 1 ? w.half_width : 0.0, false, false);
    w.record_dt = kv.real("wave.record_dt", 0.0, 1e300, false);
    w.fit_window = kv.count("wave.fit_window", 3, 1000);

    auto& s = c.similarity;
    s.eps_w = kv.real("similarity.eps_w", 0.0, 0.5, true, true);
    s.m = kv.real("similarity.m", 0.0, 1e6, false);
    s.C_lyap = kv.real("similarity.C_lyap", 0.0, 1e6, false);
    s.s_start = kv.real("similarity.s_start", 1.0, 700.0);
    s.s_end = kv.real("similarity.s_end", s.s_start, 700.0, true);
    s.ds = kv.real("similarity.ds", 0.0, 0.05);
    s.tail_factor = kv.real("similarity.tail_factor", 0.0, 1e6, false);
    s.hardy_draws = kv.count("similarity.hardy_draws", 1, 1'000'000);

    auto& r = c.rate;
    r.growth_factor = kv.real("rate.growth_factor", 1.0, 1e300, false);
    r.min_tau_cells = kv.real("rate.min_tau_cells", 0.0, 1e6, false);
    r.t_start = kv.real_or_auto("rate.t_start");
    r.t_end = kv.real_or_auto("rate.t_end");

    auto& d = c.duhamel;
    d.bump.amplitude = kv.real("duhamel.amplitude", -1e300, 1e300);
    d.bump.width = kv.real("duhamel.width", 0.0, 1e300);
    d.bump.velocity = kv.real("duhamel.velocity", -1e300, 1e300);
    d.half_width = kv.real("duhamel.half_width", 0.0, 1e6);
    d.h = kv.real("duhamel.h", 0.0, d.half_width / 4.0);
    d.cfl = kv.real("duhamel.cfl", 0.0, max_cfl(N == 1 ? Geometry::Line : Geometry::Radial3D));
    d.t0_local = kv.real("duhamel.t0_local", 0.0, d.half_width);
    d.slices = kv.count("duhamel.slices", 3, 100'000);
    d.max_iter = kv.count("duhamel.max_iter", 1, 100'000);
    d.tolerance = kv.real("duhamel.tolerance", 0.0, 1.0);
    d.lambda = kv.real("duhamel.lambda", 0.0, 1.0);
    d.rescale_pairs = kv.count("duhamel.rescale_pairs", 0, 1'000'000);

    c.entries = kv.ordered();
    return c;
}

}  // namespace blowup::cli
