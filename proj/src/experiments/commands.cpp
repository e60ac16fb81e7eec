#include "fibretrap/experiments.hpp"

namespace fibretrap::exp {

std::vector<std::string> const& command_names()
{
    static std::vector<std::string> const names = {
        "solve-fields", "calibrate",  "secular-scan",     "minimum-scan", "phase-scan",
        "axial-scan",   "radial-map", "displacement-cal", "servo-sim",    "trajectory",
    };
    return names;
}

Report run_command(Setup const& s, std::string const& command, Channel channel)
{
    if (command == "solve-fields")
        return run_solve_fields(s).report(s);
    if (command == "calibrate")
        return calibration_report(s);
    if (command == "secular-scan")
        return run_secular_slope_scan(s).report(s);
    if (command == "minimum-scan")
        return run_minimum_scan(s).report(s);
    if (command == "phase-scan")
        return run_phase_scan(s, channel).report(s);
    if (command == "axial-scan")
        return run_axial_standing_wave_scan(s).report(s);
    if (command == "radial-map")
        return run_radial_mode_map(s).report(s);
    if (command == "displacement-cal")
        return run_displacement_calibration(s).report(s);
    if (command == "servo-sim")
        return run_servo_sim(s).report(s);
    if (command == "trajectory")
        return run_trajectory(s).report(s);
    throw ConfigError("unknown command '" + command + "'");
}

std::vector<std::pair<std::string, Report>> run_suite(Setup const& s)
{
    std::vector<std::pair<std::string, Report>> out;
    for (auto const& name : command_names())
    {
        if (name == "calibrate" && !s.report)
            continue;
        if (name == "phase-scan")
        {
            for (auto ch : {Channel::radial, Channel::axial})
                out.emplace_back(name + "-" + to_string(ch), run_command(s, name, ch));
            continue;
        }
        out.emplace_back(name, run_command(s, name));
    }
    return out;
}

}  // namespace fibretrap::exp
