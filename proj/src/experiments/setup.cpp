#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "fibretrap/experiments.hpp"

namespace fibretrap::exp {

namespace {

double const two_pi = 2 * std::numbers::pi;

std::string read_file(std::filesystem::path const& p)
{
    std::ifstream f(p, std::ios::binary);
    if (!f)
        throw ConfigError("cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(std::filesystem::path const& p, std::string const& bytes)
{
    std::ofstream f(p, std::ios::binary);
    if (!f)
        throw ConfigError("cannot write " + p.string());
    f << bytes;
}

}  // namespace

trap::CalibrationTargets calibration_targets(ExperimentConfig const& c)
{
    trap::CalibrationTargets t;
    t.radial_slope = c.number("calibration.radial_slope_khz_per_v") * 1e3;
    t.axial_slope = c.number("calibration.axial_slope_khz_per_v") * 1e3;
    t.poly_linear = c.number("calibration.poly_linear_um_per_v") * 1e-6;
    t.poly_quadratic = c.number("calibration.poly_quadratic_um_per_v2") * 1e-6;
    t.axial_shift = c.number("calibration.axial_shift_um_per_v") * 1e-6;
    t.displacement_slope = c.number("calibration.displacement_slope_um_per_vpp") * 1e-6;
    t.v_main_ref = c.number("calibration.v_main_ref");
    t.inner_quadrupole_ratio = c.number("calibration.inner_quadrupole_ratio");
    t.amplitude_grid = c.list("scan.minimum_amplitudes_v");
    if (t.amplitude_grid.empty())
        throw ConfigError("scan.minimum_amplitudes_v must not be empty");
    t.vpp_grid = linspace(0, c.number("scan.displacement_vpp_max"), c.integer("scan.displacement_points"));
    t.omega_rf = two_pi * c.number("trap.rf_frequency_mhz") * 1e6;
    t.ion.mass = c.number("trap.ion_mass_u") * trap::constants::atomic_mass_unit
                 - trap::constants::electron_mass;
    t.validity_radius = c.number("trap.validity_radius_um") * 1e-6;
    return t;
}

Setup Setup::from_config(ExperimentConfig const& config, int threads)
{
    Setup s;
    s.config = config;
    s.threads = threads > 0 ? threads : config.integer("scan.threads");
    std::string const& file = config.text("trap.model_file");
    if (file.empty())
    {
        auto cal = trap::calibrate_model(calibration_targets(config));
        s.model = cal.model;
        s.report = cal.report;
    }
    else
    {
        s.model = trap::model_from_json(read_file(file));
    }
    double const gain = config.number("drive.amplifier_gain");
    if (gain < 0)
        throw ConfigError("drive.amplifier_gain must be non-negative");
    if (gain > 0)
        s.model.amplifier_gain = gain;
    return s;
}

trap::DriveConfig reference_drive(Setup const& s)
{
    return trap::main_drive(s.config.number("trap.v_main"),
                            two_pi * s.config.number("trap.rf_frequency_mhz") * 1e6);
}

optics::CavityMode cavity_mode(ExperimentConfig const& c)
{
    auto mode = optics::cavity_mode_from_geometry(c.number("cavity.length_um") * 1e-6,
                                                  c.number("cavity.roc_upper_um") * 1e-6,
                                                  c.number("cavity.roc_lower_um") * 1e-6,
                                                  c.number("cavity.wavelength_nm") * 1e-9);
    mode.antinode_offset = c.number("cavity.antinode_offset_nm") * 1e-9;
    return mode;
}

optics::CameraModel camera_model(ExperimentConfig const& c)
{
    optics::CameraModel cam;
    cam.pixel_pitch = c.number("detection.pixel_pitch_um") * 1e-6;
    cam.psf_sigma = c.number("detection.psf_sigma_um") * 1e-6;
    cam.dark_rate = c.number("detection.camera_dark_rate");
    cam.width = c.integer("detection.camera_width");
    cam.height = c.integer("detection.camera_height");
    cam.validate();
    return cam;
}

void Report::write(std::filesystem::path const& dir) const
{
    std::filesystem::create_directories(dir);
    for (auto const& [stem, table] : tables)
    {
        std::ostringstream os;
        table.write_csv(os);
        write_file(dir / (stem + ".csv"), os.str());
    }
    write_file(dir / (command + ".json"), summary.dump(2) + "\n");
    for (auto const& [name, bytes] : files)
        write_file(dir / name, bytes);
}

void stamp(ScanTable& table, Setup const& s, std::string const& command)
{
    table.set_meta("command", command);
    table.set_meta("master_seed", std::to_string(s.config.master_seed));
    table.set_meta("config_hash", s.config.hash());
    table.set_meta("timestamp", run_timestamp());
}

json header(Setup const& s, std::string const& command)
{
    json j;
    j["command"] = command;
    j["master_seed"] = s.config.master_seed;
    j["config_hash"] = s.config.hash();
    j["timestamp"] = run_timestamp();
    return j;
}

json fit_to_json(fit::FitResult const& f)
{
    json j;
    j["converged"] = f.converged;
    j["iterations"] = f.iterations;
    j["residual_rms"] = f.residual_rms;
    json params = json::object();
    for (std::size_t i = 0; i < f.names.size(); ++i)
    {
        auto const k = static_cast<Eigen::Index>(i);
        params[f.names[i]] = {{"value", f.params[k]}, {"error", std::sqrt(std::max(0.0, f.covariance(k, k)))}};
    }
    j["params"] = params;
    for (auto const& d : f.derived)
        j["derived"][d.name] = {{"value", d.value}, {"error", d.error}};
    return j;
}

}  // namespace fibretrap::exp
