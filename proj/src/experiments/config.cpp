#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "fibretrap/experiments.hpp"

namespace fibretrap::exp {

namespace {

using Value = ExperimentConfig::Value;

struct KeySpec
{
    char const* section;
    char const* key;
    Value value;
    char const* doc;
};

enum Kind
{
    number_kind,
    text_kind,
    list_kind,
};

std::vector<double> range(double a, double b, int n)
{
    return linspace(a, b, n);
}

std::vector<KeySpec> const& schema()
{
    static std::vector<KeySpec> const keys = {
        {"trap", "v_main", 200.0, "outer-pair RF amplitude (V)"},
        {"trap", "rf_frequency_mhz", 20.0, "drive frequency (MHz, ordinary frequency)"},
        {"trap", "ion_mass_u", 40.0, "ion mass in u; one electron mass is subtracted"},
        {"trap", "validity_radius_um", 100.0, "radius of the trusted harmonic region (um)"},
        {"trap", "ion_electrode_distance_um", 175.0, "R of the mismatch formula (um)"},
        {"trap", "damping_khz", 5.0, "cooling rate / 2 pi (kHz)"},
        {"trap", "model_file", std::string(), "calibrated model JSON; empty calibrates from [calibration]"},
        {"trap", "tip_gap_um", 350.0, "inner-electrode tip separation (um)"},
        {"trap", "fibre_recess_um", 10.0, "fibre recess behind each tip (um)"},
        {"trap", "grid_spacing_um", 10.0, "field-solver node spacing (um)"},
        {"trap", "solver_tolerance", 1e-9, "relaxation tolerance relative to 1 V"},
        {"trap", "fit_radius_um", 40.0, "multipole fit ball radius (um)"},

        {"drive", "radial_mismatch_amplitude", 50.0, "radial_y RF amplitude in the radial phase scan (V)"},
        {"drive", "axial_mismatch_amplitude", 1.0, "differential inner RF amplitude in the axial phase scan (V)"},
        {"drive", "amplifier_gain", 0.0, "electrode V per generator Vpp; 0 uses the calibrated value"},
        {"drive", "axial_loss_factor", 0.25, "electrode V per generator V on the axial line"},

        {"cavity", "length_um", 370.0, "mirror separation (um)"},
        {"cavity", "roc_upper_um", 560.0, "upper mirror radius of curvature (um)"},
        {"cavity", "roc_lower_um", 560.0, "lower mirror radius of curvature (um)"},
        {"cavity", "wavelength_nm", 866.0, "cavity wavelength (nm)"},
        {"cavity", "antinode_offset_nm", 0.0, "standing-wave registration; 0 puts an antinode at the centre"},
        {"cavity", "mode_offset_x_um", 0.0, "mode axis position relative to the trap axis (um)"},
        {"cavity", "mode_offset_y_um", -3.9, "mode axis position relative to the trap axis (um)"},
        {"cavity", "emission_peak_rate", 3000.0, "cavity photons/s above background at an antinode"},
        {"cavity", "emission_lorentzian_hwhm_mhz", 0.5, "Lorentzian half width of the emission line (MHz)"},
        {"cavity", "emission_gaussian_sigma_mhz", 0.4, "Gaussian standard deviation of the line (MHz)"},
        {"cavity", "background_rate", 4200.0, "detected background (counts/s)"},
        {"cavity", "sigma_z_nm", 42.0, "axial position spread of the ion (nm)"},

        {"laser", "wavelength_nm", 397.0, "cooling laser wavelength (nm)"},
        {"laser", "linewidth_mhz", 21.6, "natural linewidth Gamma / 2 pi (MHz)"},
        {"laser", "detuning_linewidths", -0.5, "detuning in units of Gamma"},
        {"laser", "saturation", 1.0, "saturation parameter"},
        {"laser", "direction", std::vector<double>{0, 1, 1}, "beam direction (normalized on use)"},
        {"laser", "efficiency", 1e-3, "detected fraction of scattered photons"},

        {"detection", "integration_time_s", 1.0, "counting time per scan point (s)"},
        {"detection", "cavity_phase_integration_s", 300.0, "counting time per point for the axial phase scan on cavity photons (s)"},
        {"detection", "phase_bins", 20.0, "RF-phase histogram bins"},
        {"detection", "pixel_pitch_um", 2.0, "object-space pixel size (um)"},
        {"detection", "psf_sigma_um", 1.5, "imaging point-spread sigma (um)"},
        {"detection", "camera_width", 64.0, "sensor width (pixels)"},
        {"detection", "camera_height", 48.0, "sensor height (pixels)"},
        {"detection", "camera_exposure_s", 0.05, "exposure per frame (s)"},
        {"detection", "camera_photon_rate", 1e5, "detected fluorescence on the camera (photons/s)"},
        {"detection", "camera_dark_rate", 1.0, "dark counts per pixel per second"},
        {"detection", "position_sigma_um", 0.3, "thermal position spread seen by the camera (um)"},

        {"servo", "piezo", std::string("multilayer"), "actuator: multilayer or monolayer"},
        {"servo", "compensate", 1.0, "apply the resonance-inverting stages"},
        {"servo", "kp", 0.04, "proportional gain (V per linewidth)"},
        {"servo", "pi_corner_khz", 1.5, "integrator corner ki / (2 pi kp) (kHz)"},
        {"servo", "lock_wavelength_nm", 897.0, "lock laser wavelength (nm)"},
        {"servo", "lock_linewidth_mhz", 22.0, "cavity linewidth at the lock wavelength (MHz)"},
        {"servo", "vibration_rms_nm", 0.043, "length disturbance rms (nm), calibrated"},
        {"servo", "vibration_corner_hz", 5.0, "disturbance Lorentzian corner (Hz)"},
        {"servo", "sensor_rms", 0.01, "error-signal white noise (linewidths per sample)"},
        {"servo", "duration_s", 1.0, "simulated lock time (s)"},
        {"servo", "bode_points", 400.0, "points of the exported Bode table"},
        {"servo", "trace_stride", 100.0, "samples between exported residual rows"},

        {"calibration", "radial_slope_khz_per_v", 13.6, "radial secular slope target"},
        {"calibration", "axial_slope_khz_per_v", 7.3, "axial secular slope target"},
        {"calibration", "poly_linear_um_per_v", -0.1, "linear coefficient of the minimum shift"},
        {"calibration", "poly_quadratic_um_per_v2", 6.1e-5, "quadratic coefficient of the minimum shift"},
        {"calibration", "axial_shift_um_per_v", 2.0, "null shift per differential inner volt"},
        {"calibration", "displacement_slope_um_per_vpp", 17.3, "camera displacement slope target"},
        {"calibration", "v_main_ref", 200.0, "main amplitude the targets refer to (V)"},
        {"calibration", "inner_quadrupole_ratio", -0.54, "inner/outer Q_zz ratio"},

        {"scan", "threads", 0.0, "worker threads; 0 uses all cores"},
        {"scan", "secular_v_min", 20.0, "secular scan start (V)"},
        {"scan", "secular_v_max", 300.0, "secular scan end (V)"},
        {"scan", "secular_points", 15.0, "secular scan points"},
        {"scan", "secular_trajectory_check", 1.0, "also measure the axial peak from a trajectory"},
        {"scan", "minimum_amplitudes_v", range(0, 200, 21), "radial_y amplitudes of the minimum scan (V)"},
        {"scan", "phase_delta_max", 0.05, "phase scan half range (rad)"},
        {"scan", "phase_points", 11.0, "phase scan points"},
        {"scan", "phase_duration_us", 100.0, "integrated time per phase point (us)"},
        {"scan", "axial_generator_min", 0.0, "axial scan start (generator V)"},
        {"scan", "axial_generator_max", 2.0, "axial scan end (generator V)"},
        {"scan", "axial_points", 41.0, "axial scan points"},
        {"scan", "radial_v_min", 0.0, "radial map start, radial_y amplitude (V)"},
        {"scan", "radial_v_max", 200.0, "radial map end (V)"},
        {"scan", "radial_points", 21.0, "radial map points"},
        {"scan", "radial_repeats", 10.0, "spectra per radial point"},
        {"scan", "detuning_points", 25.0, "cavity detunings per spectrum"},
        {"scan", "detuning_span", 4.0, "detuning half range in line widths (FWHM)"},
        {"scan", "noiseless", 0.0, "use expected counts instead of Poisson draws"},
        {"scan", "displacement_vpp_max", 0.5, "displacement calibration end (Vpp)"},
        {"scan", "displacement_points", 11.0, "displacement calibration points"},
    };
    return keys;
}

Kind kind_of(Value const& v)
{
    return static_cast<Kind>(v.index());
}

std::string format_value(Value const& v)
{
    if (auto const* d = std::get_if<double>(&v))
        return fmt::format("{}", *d);
    if (auto const* s = std::get_if<std::string>(&v))
        return *s;
    std::string out;
    for (double x : std::get<std::vector<double>>(v))
        out += (out.empty() ? "" : ", ") + fmt::format("{}", x);
    return out;
}

std::string trim(std::string const& s)
{
    auto const b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    auto const e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_number(std::string const& raw, std::string const& where)
{
    std::string const s = trim(raw);
    if (s == "true" || s == "yes" || s == "on")
        return 1;
    if (s == "false" || s == "no" || s == "off")
        return 0;
    double v = 0;
    auto const [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v))
        throw ConfigError(fmt::format("{}: '{}' is not a number", where, raw));
    return v;
}

Value parse_value(Kind kind, std::string const& raw, std::string const& where)
{
    switch (kind)
    {
    case number_kind:
        return parse_number(raw, where);
    case text_kind:
        return trim(raw);
    case list_kind:
    {
        std::vector<double> out;
        std::string const s = trim(raw);
        std::size_t start = 0;
        while (!s.empty() && start <= s.size())
        {
            auto const comma = s.find(',', start);
            auto const end = comma == std::string::npos ? s.size() : comma;
            out.push_back(parse_number(s.substr(start, end - start), where));
            start = end + 1;
        }
        return out;
    }
    }
    throw ConfigError(where + ": unsupported value type");
}

std::uint64_t fnv1a(std::string const& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::vector<std::string> const& config_sections()
{
    static std::vector<std::string> const s = {"trap",   "drive", "cavity",      "laser",
                                               "detection", "servo", "calibration", "scan"};
    return s;
}

std::vector<double> linspace(double a, double b, int n)
{
    if (n < 1)
        throw ConfigError("grid needs at least one point");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
    return v;
}

ExperimentConfig ExperimentConfig::defaults()
{
    ExperimentConfig c;
    for (auto const& k : schema())
        c.values[std::string(k.section) + "." + k.key] = k.value;
    return c;
}

ExperimentConfig ExperimentConfig::parse(std::string const& text)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream is(text);
    try
    {
        pt::read_ini(is, tree);
    }
    catch (pt::ini_parser_error const& e)
    {
        throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
    }

    ExperimentConfig c = defaults();
    auto const& sections = config_sections();
    // The INI reader drops empty sections, so headers are collected here.
    std::set<std::string> seen;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);)
    {
        auto const first = line.find_first_not_of(" \t");
        auto const last = line.find_last_not_of(" \t\r");
        if (first == std::string::npos || line[first] != '[' || line[last] != ']')
            continue;
        std::string const name = line.substr(first + 1, last - first - 1);
        if (std::find(sections.begin(), sections.end(), name) == sections.end())
            throw ConfigError(fmt::format("unknown section [{}]", name));
        seen.insert(name);
    }
    for (auto const& [name, node] : tree)
    {
        if (node.empty() && !node.data().empty())
        {
            if (name != "master_seed")
                throw ConfigError(fmt::format("unknown top-level key '{}'", name));
            double const seed = parse_number(node.data(), "master_seed");
            if (seed < 0 || seed != std::floor(seed) || seed > 9007199254740992.0)
                throw ConfigError("master_seed must be a non-negative integer below 2^53");
            c.master_seed = static_cast<std::uint64_t>(seed);
            continue;
        }
        if (std::find(sections.begin(), sections.end(), name) == sections.end())
            throw ConfigError(fmt::format("unknown section [{}]", name));
        for (auto const& [key, leaf] : node)
        {
            std::string const full = name + "." + key;
            auto it = c.values.find(full);
            if (it == c.values.end())
                throw ConfigError(fmt::format("unknown key '{}' in [{}]", key, name));
            it->second = parse_value(kind_of(it->second), leaf.data(), full);
        }
    }
    std::string missing;
    for (auto const& s : sections)
    {
        if (!seen.count(s))
            missing += (missing.empty() ? "" : ", ") + ("[" + s + "]");
    }
    if (!missing.empty())
        throw ConfigError("config is missing sections " + missing);
    return c;
}

ExperimentConfig ExperimentConfig::load(std::filesystem::path const& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    try
    {
        return parse(ss.str());
    }
    catch (ConfigError const& e)
    {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

namespace {

Value const& lookup(std::map<std::string, Value> const& values, std::string const& key)
{
    auto it = values.find(key);
    if (it == values.end())
        throw ConfigError("no config key " + key);
    return it->second;
}

}  // namespace

double ExperimentConfig::number(std::string const& key) const
{
    auto const* d = std::get_if<double>(&lookup(values, key));
    if (!d)
        throw ConfigError(key + " is not numeric");
    return *d;
}

int ExperimentConfig::integer(std::string const& key) const
{
    double const v = number(key);
    if (v != std::floor(v) || std::abs(v) > 1e9)
        throw ConfigError(fmt::format("{} must be an integer, got {}", key, v));
    return static_cast<int>(v);
}

bool ExperimentConfig::flag(std::string const& key) const
{
    return number(key) != 0;
}

std::string const& ExperimentConfig::text(std::string const& key) const
{
    auto const* s = std::get_if<std::string>(&lookup(values, key));
    if (!s)
        throw ConfigError(key + " is not text");
    return *s;
}

std::vector<double> const& ExperimentConfig::list(std::string const& key) const
{
    auto const* l = std::get_if<std::vector<double>>(&lookup(values, key));
    if (!l)
        throw ConfigError(key + " is not a list");
    return *l;
}

void ExperimentConfig::set(std::string const& key, Value v)
{
    auto it = values.find(key);
    if (it == values.end())
        throw ConfigError("unknown config key " + key);
    if (it->second.index() != v.index())
        throw ConfigError("wrong value type for " + key);
    it->second = std::move(v);
}

std::string ExperimentConfig::canonical() const
{
    std::string out;
    for (auto const& k : schema())
    {
        std::string const full = std::string(k.section) + "." + k.key;
        auto const& v = lookup(values, full);
        std::string line = full + " = ";
        if (auto const* d = std::get_if<double>(&v))
            line += fmt::format("{:.17g}", *d);
        else if (auto const* s = std::get_if<std::string>(&v))
            line += *s;
        else
            for (double x : std::get<std::vector<double>>(v))
                line += fmt::format("{:.17g};", x);
        out += line + "\n";
    }
    return out;
}

std::string ExperimentConfig::hash() const
{
    return fmt::format("{:016x}", fnv1a(canonical()));
}

std::string ExperimentConfig::to_ini() const
{
    std::string out = fmt::format("master_seed = {}\n", master_seed);
    std::string section;
    for (auto const& k : schema())
    {
        if (section != k.section)
        {
            section = k.section;
            out += fmt::format("\n[{}]\n", section);
        }
        out += fmt::format("; {}\n{} = {}\n", k.doc, k.key,
                           format_value(lookup(values, section + "." + k.key)));
    }
    return out;
}

std::string run_timestamp()
{
    std::time_t t = 0;
    if (char const* env = std::getenv("SOURCE_DATE_EPOCH"))
    {
        long long v = 0;
        std::string_view const s(env);
        auto const [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec == std::errc() && ptr == s.data() + s.size())
            t = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace fibretrap::exp
