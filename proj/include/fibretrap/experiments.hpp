#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "fibretrap/dynamics.hpp"
#include "fibretrap/fitkit.hpp"
#include "fibretrap/optics.hpp"
#include "fibretrap/scan_table.hpp"
#include "fibretrap/servo.hpp"
#include "fibretrap/trapmodel.hpp"

namespace fibretrap::exp {

using json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

//---------------------------------------------------------------------------//
// Configuration
//---------------------------------------------------------------------------//

/*!
 * Typed view of an INI file with sections [trap] [drive] [cavity] [laser]
 * [detection] [servo] [calibration] [scan] and a top-level master_seed.
 *
 * Every key has a built-in default. A file must contain all eight sections
 * (possibly empty) and may only use known keys.
 */
struct ExperimentConfig
{
    using Value = std::variant<double, std::string, std::vector<double>>;

    std::uint64_t master_seed = 1;
    std::map<std::string, Value> values;  //!< "section.key" -> value

    static ExperimentConfig defaults();
    static ExperimentConfig parse(std::string const& text);
    static ExperimentConfig load(std::filesystem::path const& path);

    double number(std::string const& key) const;
    int integer(std::string const& key) const;
    bool flag(std::string const& key) const;
    std::string const& text(std::string const& key) const;
    std::vector<double> const& list(std::string const& key) const;
    void set(std::string const& key, Value v);

    // Canonical "section.key = value" lines, seed excluded.
    std::string canonical() const;
    // 16 hex digits of FNV-1a over canonical().
    std::string hash() const;
    // Documented INI text with every key at its current value.
    std::string to_ini() const;
};

std::vector<std::string> const& config_sections();

//---------------------------------------------------------------------------//
// Shared setup
//---------------------------------------------------------------------------//

struct Setup
{
    ExperimentConfig config;
    trap::TrapModel model;
    std::optional<trap::CalibrationReport> report;
    //! 0 picks the hardware concurrency.
    int threads = 0;

    // Calibrates from [calibration], or loads [trap] model_file if set.
    static Setup from_config(ExperimentConfig const& config, int threads = 0);
};

trap::CalibrationTargets calibration_targets(ExperimentConfig const& c);
trap::DriveConfig reference_drive(Setup const& s);
optics::CavityMode cavity_mode(ExperimentConfig const& c);
optics::CameraModel camera_model(ExperimentConfig const& c);

//! Everything one command emits.
struct Report
{
    std::string command;
    std::vector<std::pair<std::string, ScanTable>> tables;  //!< file stem, table
    json summary;
    std::vector<std::pair<std::string, std::string>> files;  //!< name, bytes

    // Writes <stem>.csv per table, <command>.json and the extra files.
    void write(std::filesystem::path const& dir) const;
};

// Seed, config hash and timestamp as table metadata and a JSON header.
void stamp(ScanTable& table, Setup const& s, std::string const& command);
json header(Setup const& s, std::string const& command);

// Reproducible timestamp: SOURCE_DATE_EPOCH if set, else the Unix epoch.
std::string run_timestamp();

json fit_to_json(fit::FitResult const& f);
std::vector<double> linspace(double a, double b, int n);

//---------------------------------------------------------------------------//
// Parallel scan points
//---------------------------------------------------------------------------//

/*!
 * Calls fn(i) for i in [0, n) on up to `threads` workers. Results must be
 * written to slot i only. The exception of the lowest failing index is
 * rethrown after all workers stop.
 */
void parallel_for(std::size_t n, int threads, std::function<void(std::size_t)> const& fn);

// Salts separating the RNG streams of different experiments.
namespace salt {
inline constexpr std::uint64_t phase_scan = 0x7068617365;
inline constexpr std::uint64_t axial_scan = 0x6178696c;
inline constexpr std::uint64_t radial_map = 0x72616469;
inline constexpr std::uint64_t displacement = 0x64697370;
inline constexpr std::uint64_t servo = 0x7365727f;
}  // namespace salt

//---------------------------------------------------------------------------//
// Experiments
//---------------------------------------------------------------------------//

struct FieldsResult
{
    field::StackBasis basis;
    double inner_quadrupole_ratio = 0;
    Report report(Setup const& s) const;
};
FieldsResult run_solve_fields(Setup const& s);

Report calibration_report(Setup const& s);

struct SecularScan
{
    ScanTable table;
    fit::FitResult radial_fit;  //!< through origin, kHz per V
    fit::FitResult axial_fit;
    double q_axial = 0;                  //!< at the reference amplitude
    double hessian_axial_hz = 0;         //!< at the reference amplitude
    std::optional<double> trajectory_axial_hz;
    Report report(Setup const& s) const;
};
SecularScan run_secular_slope_scan(Setup const& s);

struct MinimumScanResult
{
    trap::MinimumScan scan;
    double shift_at_max_um = 0;  //!< null coordinate at the largest amplitude
    Report report(Setup const& s) const;
};
MinimumScanResult run_minimum_scan(Setup const& s);

enum class Channel
{
    radial,
    axial,
};
Channel parse_channel(std::string const& name);
std::string to_string(Channel c);

struct LineSummary
{
    fit::FitResult fit;  //!< c0 + c1 delta
    double zero_crossing = 0;
    double r_squared = 0;
};

struct PhaseScan
{
    Channel channel = Channel::radial;
    ScanTable table;
    LineSummary photons;     //!< signed sinusoid amplitude (counts per bin)
    LineSummary trajectory;  //!< signed micromotion amplitude (m)
    dyn::MismatchParams params;  //!< at unit delta
    double predicted_slope = 0;  //!< (1/4) q R alpha, m per rad
    double endpoint_phase_jump = 0;  //!< rad, trajectory phasor, first vs last
    Report report(Setup const& s) const;
};
PhaseScan run_phase_scan(Setup const& s, Channel channel);

struct AxialScan
{
    ScanTable table;
    fit::FitResult fit;  //!< amplitude, visibility, period_nm, z0_nm
    double antinode_spacing_nm = 0;
    double antinode_spacing_err = 0;
    double visibility = 0;
    double visibility_err = 0;
    Report report(Setup const& s) const;
};
AxialScan run_axial_standing_wave_scan(Setup const& s);

struct RadialMap
{
    ScanTable table;
    fit::FitResult fit;  //!< Gaussian in um, relative to the first point
    fit::LineShape shape;  //!< from the summed spectrum, MHz
    double waist_um = 0;
    double center_um = 0;
    Report report(Setup const& s) const;
};
RadialMap run_radial_mode_map(Setup const& s);

struct DisplacementCal
{
    ScanTable table;
    fit::FitResult fit;  //!< um per Vpp
    double slope_um_per_vpp = 0;
    std::vector<fit::Frame> frames;
    Report report(Setup const& s) const;
};
DisplacementCal run_displacement_calibration(Setup const& s);

struct ServoRun
{
    servo::PlantModel plant;
    servo::LoopFilter filter;
    servo::Margins margins;
    servo::Margins uncompensated;
    double linewidth_nm = 0;
    servo::LockResult closed;
    servo::LockResult open;
    double suppression_db = 0;
    Report report(Setup const& s) const;
};
ServoRun run_servo_sim(Setup const& s);

struct TrajectoryRun
{
    dyn::Trajectory trajectory;
    std::array<dyn::AxisPhasor, 3> phasors;
    Report report(Setup const& s) const;
};
// Radial mismatch configuration at the largest scanned phase.
TrajectoryRun run_trajectory(Setup const& s);

//---------------------------------------------------------------------------//
// Command dispatch
//---------------------------------------------------------------------------//

// Subcommand names accepted by run_command, in suite order.
std::vector<std::string> const& command_names();

// Runs one subcommand; `channel` only affects phase-scan.
Report run_command(Setup const& s, std::string const& command, Channel channel = Channel::radial);

/*!
 * Every command as (subdirectory, report): phase-scan once per channel,
 * calibrate only when the model was calibrated in this run.
 */
std::vector<std::pair<std::string, Report>> run_suite(Setup const& s);

}  // namespace fibretrap::exp
