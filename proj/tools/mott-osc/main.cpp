// mott-osc: command line front end for the Mott oscillator toolkit.

#include <CLI11.hpp>

#include <iostream>
#include <thread>

#include "mott/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Mott memristor relaxation-oscillator toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(mott::cli::tool_version));

    mott::cli::Options opt;
    std::string config;
    std::string out = "out";
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    std::string input;

    const char* commands[][2] = {
        {"simulate", "Transient simulation over a current/temperature sweep"},
        {"montecarlo", "Noise-driven escape-time Monte-Carlo over holding margins"},
        {"couple", "Two resistively coupled oscillators"},
        {"vco", "Transistor-driven (voltage-controlled) oscillator"},
        {"extract", "Re-extract model parameters from a waveform"},
        {"thermal", "Threshold current/power tables from the thermal model"},
    };
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c[0], c[1]);
        sub->add_option("--config", config, "Experiment JSON file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "Output directory")->capture_default_str();
        sub->add_option("--seed", seed, "Override noise.seed");
        sub->add_option("--jobs", jobs, "Worker threads for sweep points")->check(CLI::Range(1u, 1024u));
        if (std::string(c[0]) == "extract") {
            sub->add_option("--input", input, "Waveform CSV or JSON to analyse")->check(CLI::ExistingFile);
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : mott::cli::exit_config;
    }

    const auto* sub = app.get_subcommands().front();
    opt.config_path = config;
    opt.out_dir = out;
    opt.jobs = jobs;
    if (sub->count("--seed") > 0) opt.seed = seed;
    if (!input.empty()) opt.input = input;
    return mott::cli::run(sub->get_name(), opt);
}
