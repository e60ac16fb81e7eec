#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "fibretrap/experiments.hpp"

namespace fx = fibretrap::exp;

namespace {

struct Options
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    bool json = false;
    int threads = 0;
    std::string channel = "radial";
};

fx::ExperimentConfig load_config(Options const& o)
{
    auto c = o.config.empty() ? fx::ExperimentConfig::defaults() : fx::ExperimentConfig::load(o.config);
    if (o.seed)
        c.master_seed = *o.seed;
    return c;
}

int run(std::string const& command, Options const& o)
{
    auto const config = load_config(o);
    if (command == "default-config")
    {
        std::cout << config.to_ini();
        return 0;
    }
    auto const setup = fx::Setup::from_config(config, o.threads);
    std::filesystem::path const out = o.out;
    if (command == "suite")
    {
        fx::json summary = fx::json::object();
        for (auto const& [dir, report] : fx::run_suite(setup))
        {
            report.write(out / dir);
            summary[dir] = report.summary;
        }
        if (o.json)
            std::cout << summary.dump(2) << "\n";
        else
            std::cout << "wrote " << out.string() << "\n";
        return 0;
    }
    auto const report = fx::run_command(setup, command, fx::parse_channel(o.channel));
    report.write(out);
    if (o.json)
        std::cout << report.summary.dump(2) << "\n";
    else
        std::cout << "wrote " << (out / (report.command + ".json")).string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Virtual experiments for a fibre-cavity ion trap"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config, "INI configuration file (defaults if omitted)");
    app.add_option("--seed", o.seed, "Master seed, overrides the config");
    app.add_option("--out", o.out, "Output directory")->capture_default_str();
    app.add_flag("--json", o.json, "Print the JSON summary to stdout");
    app.add_option("--threads", o.threads, "Worker threads for scan points (0: config or hardware)");

    struct Entry
    {
        char const* name;
        char const* help;
    };
    Entry const entries[] = {
        {"solve-fields", "Solve the electrode basis fields and multipoles"},
        {"calibrate", "Calibrate the trap model and write model.json"},
        {"secular-scan", "Secular frequencies versus main drive amplitude"},
        {"minimum-scan", "Pseudopotential minimum versus radial drive amplitude"},
        {"phase-scan", "Micromotion versus additional-RF phase"},
        {"axial-scan", "Standing-wave trace along the cavity axis"},
        {"radial-map", "Cavity mode map from spectral areas"},
        {"displacement-cal", "Camera calibration of the radial displacement"},
        {"servo-sim", "Cavity length lock: margins, residual and Bode data"},
        {"trajectory", "Trajectory CSV for the largest scanned phase"},
        {"suite", "Every experiment into one subdirectory each"},
        {"default-config", "Print the documented default configuration"},
    };
    for (auto const& e : entries)
    {
        auto* sub = app.add_subcommand(e.name, e.help);
        if (std::string(e.name) == "phase-scan")
            sub->add_option("--channel", o.channel, "radial or axial")
                ->check(CLI::IsMember({"radial", "axial"}))
                ->capture_default_str();
    }

    CLI11_PARSE(app, argc, argv);
    try
    {
        return run(app.get_subcommands().front()->get_name(), o);
    }
    catch (std::exception const& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
