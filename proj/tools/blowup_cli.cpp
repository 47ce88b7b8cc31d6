#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "blowup/cli/config.hpp"
#include "blowup/cli/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Blow-up experiments for the loglog-perturbed semilinear wave equation"};
    app.require_subcommand(1);

    struct Opts {
        std::string config;
        std::string out;
        std::optional<std::uint64_t> seed;
        std::vector<std::string> overrides;
    };
    std::vector<std::pair<CLI::App*, std::string>> runs;
    auto opts = std::make_shared<Opts>();
    for (const auto& name : blowup::cli::experiments()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", opts->config, "key = value config file with [sections]");
        sub->add_option("--out", opts->out, "output directory (default: $BLOWUP_OUT_ROOT/<experiment>)");
        sub->add_option("--seed", opts->seed, "seed for every random draw");
        sub->add_option("--override", opts->overrides, "section.key=value, repeatable");
        runs.emplace_back(sub, name);
    }
    std::string report_dir;
    auto* rep = app.add_subcommand("report", "merge a run directory into report.json and plot.gp");
    rep->add_option("dir", report_dir, "run directory holding manifest.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : blowup::cli::kConfigError;
    }

    if (rep->parsed()) return blowup::cli::report(report_dir, std::cerr);

    for (const auto& [sub, name] : runs) {
        if (!sub->parsed()) continue;
        blowup::cli::RunConfig cfg;
        try {
            std::optional<std::filesystem::path> file;
            if (!opts->config.empty()) file = opts->config;
            cfg = blowup::cli::load_config(name, file, opts->overrides, opts->seed);
        } catch (const std::exception& e) {
            std::cerr << "configuration error: " << e.what() << '\n';
            return blowup::cli::kConfigError;
        }
        std::optional<std::filesystem::path> out;
        if (!opts->out.empty()) out = opts->out;
        return blowup::cli::run(cfg, blowup::cli::resolve_out_dir(cfg, out), std::cerr);
    }
    return blowup::cli::kConfigError;
}
