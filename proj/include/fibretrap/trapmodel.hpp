#pragma once

#include <array>
#include <complex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fibretrap/fieldsolver.hpp"
#include "fibretrap/fitkit.hpp"
#include "fibretrap/scan_table.hpp"

namespace fibretrap::trap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using CVec3 = Eigen::Vector3cd;
using CMat3 = Eigen::Matrix3cd;

namespace constants {
inline constexpr double elementary_charge = 1.602176634e-19;
inline constexpr double atomic_mass_unit = 1.66053906660e-27;
inline constexpr double electron_mass = 9.1093837015e-31;
}  // namespace constants

class ModelError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

//! Position outside the region where the quadratic expansion is trusted.
class ValidityError : public ModelError
{
  public:
    using ModelError::ModelError;
};

//! Sources are not in phase, so no point of zero RF field exists.
class PhaseMismatchError : public ModelError
{
  public:
    using ModelError::ModelError;
};

class UnstableError : public ModelError
{
  public:
    using ModelError::ModelError;
};

class CalibrationError : public ModelError
{
  public:
    using ModelError::ModelError;
};

enum class Electrode
{
    outer_pair,
    inner_upper,
    inner_lower,
    radial_x,
    radial_y,
    comp_x,
    comp_y,
};
inline constexpr std::size_t electrode_count = 7;

std::string label(Electrode e);
Electrode parse_electrode(std::string const& name);
std::array<Electrode, electrode_count> all_electrodes();

struct IonSpecies
{
    double mass = 40 * constants::atomic_mass_unit - constants::electron_mass;
    double charge = constants::elementary_charge;

    void validate() const;
};

struct SourceDrive
{
    double amplitude = 0;  //!< V; signed only on the inner electrodes
    double phase = 0;      //!< rad
    double dc = 0;         //!< V
};

/*!
 * Per-electrode RF and dc settings sharing one drive frequency.
 *
 * The differential axial drive is +Vz/2 on the upper and -Vz/2 on the lower
 * inner electrode with equal phases.
 */
struct DriveConfig
{
    double omega_rf = 2 * std::numbers::pi * 20e6;
    std::array<SourceDrive, electrode_count> sources{};

    SourceDrive& operator[](Electrode e) { return sources[static_cast<std::size_t>(e)]; }
    SourceDrive const& operator[](Electrode e) const
    {
        return sources[static_cast<std::size_t>(e)];
    }
    void set_differential_axial(double vz, double phase);
    void validate() const;
    //! Phase of the main (outer pair) drive, or of the strongest source.
    double reference_phase() const;
    //! Largest |V_i sin(phi_i - reference)| relative to the largest |V_i|.
    double quadrature_fraction() const;
};

// Drive with only the outer pair at v_main, phase 0.
DriveConfig main_drive(double v_main, double omega_rf = 2 * std::numbers::pi * 20e6);

struct TrapModel
{
    std::array<field::MultipoleEntry, electrode_count> basis{};
    IonSpecies ion;
    double validity_radius = 100e-6;
    //! Electrode volts per generator Vpp on the radial sources.
    double amplifier_gain = 1;

    field::MultipoleEntry const& operator[](Electrode e) const
    {
        return basis[static_cast<std::size_t>(e)];
    }
    field::MultipoleEntry& operator[](Electrode e)
    {
        return basis[static_cast<std::size_t>(e)];
    }
    void validate() const;
};

/*!
 * Field of all sources as affine maps of position.
 *
 * RF phasor E(r) = -(rf_offset + rf_gradient r); the physical field is
 * Re[E exp(i Omega t)]. The dc field is -(dc_offset + dc_gradient r).
 */
struct LinearField
{
    CVec3 rf_offset = CVec3::Zero();
    CMat3 rf_gradient = CMat3::Zero();
    Vec3 dc_offset = Vec3::Zero();
    Mat3 dc_gradient = Mat3::Zero();
};
LinearField linear_field(TrapModel const& model, DriveConfig const& drive);

void check_validity(TrapModel const& model, Vec3 const& r);
CVec3 rf_phasor_field(TrapModel const& model, DriveConfig const& drive, Vec3 const& r);
Vec3 dc_field(TrapModel const& model, DriveConfig const& drive, Vec3 const& r);

// Time-averaged potential energy in eV.
double pseudopotential(TrapModel const& model, DriveConfig const& drive, Vec3 const& r);
// Hessian of the pseudopotential in J/m^2; constant for the affine model.
Mat3 pseudopotential_hessian(TrapModel const& model, DriveConfig const& drive);

// Newton on E(r) = 0; requires in-phase sources (quadrature below 1e-9).
Vec3 find_rf_null(TrapModel const& model,
                  DriveConfig const& drive,
                  Vec3 const& guess = Vec3::Zero());

struct SecularResult
{
    std::array<double, 3> frequencies_hz{};  //!< ascending
    Mat3 axes = Mat3::Identity();            //!< column k belongs to frequency k
    int axial_index = 2;                     //!< column with the largest z share
    Vec3 null = Vec3::Zero();

    double axial_hz() const { return frequencies_hz[axial_index]; }
    // Mean of the two non-axial frequencies.
    double radial_hz() const;
};
SecularResult secular_frequencies(TrapModel const& model, DriveConfig const& drive);

//---------------------------------------------------------------------------//
// Calibration
//---------------------------------------------------------------------------//

/*!
 * Targets the analytic model is pinned to. Units: slopes in Hz/V,
 * polynomial coefficients in m/V and m/V^2, axial shift in m/V, the
 * displacement slope in m/Vpp.
 */
struct CalibrationTargets
{
    std::optional<double> radial_slope;
    std::optional<double> axial_slope;
    std::optional<double> poly_linear;
    std::optional<double> poly_quadratic;
    std::optional<double> axial_shift;
    std::optional<double> displacement_slope;
    double v_main_ref = 200;
    std::vector<double> amplitude_grid;  //!< radial_y V for the polynomial
    std::vector<double> vpp_grid;        //!< generator Vpp for the gain
    double inner_quadrupole_ratio = -0.54;
    double omega_rf = 2 * std::numbers::pi * 20e6;
    IonSpecies ion;
    double validity_radius = 100e-6;

    // Targets of the reference trap on the default grids.
    static CalibrationTargets reference();
};

struct CalibrationReport
{
    double quadrupole_a = 0;  //!< V/m^2 per V on the outer pair
    double radial_slope_model = 0;
    double axial_slope_model = 0;
    double radial_slope_residual = 0;  //!< model - target, Hz/V
    double axial_slope_residual = 0;
    double slope_residual_rms = 0;
    double radial_beta = 0;   //!< radial dipole, units of V_ref * a (m/V)
    double radial_gamma = 0;  //!< radial quadrupole, units of V_ref * a (1/V)
    int radial_newton_iterations = 0;
    double poly_linear_refit = 0;
    double poly_quadratic_refit = 0;
    double inner_dipole = 0;  //!< V/m per V on each inner electrode
    double amplifier_gain = 0;
    double displacement_slope_model = 0;
    double q_axial_at_ref = 0;
};

struct Calibration
{
    TrapModel model;
    CalibrationReport report;
};

Calibration calibrate_model(CalibrationTargets const& targets);

struct MinimumScan
{
    ScanTable table;
    fit::FitResult fit;  //!< quadratic through the origin, in um and V
    int axis = 1;        //!< coordinate the fit was made on
};

/*!
 * Null position against one source's amplitude with the rest of `drive`
 * unchanged. The fitted coordinate is the one moved furthest.
 */
MinimumScan minimum_vs_amplitude_scan(TrapModel const& model,
                                      DriveConfig const& drive,
                                      Electrode electrode,
                                      std::vector<double> const& amplitudes);

// Linear fit (with intercept) of the null coordinate, in um per Vpp, over
// a generator Vpp grid on radial_y through the model's amplifier gain.
double displacement_slope(TrapModel const& model,
                          DriveConfig const& drive,
                          std::vector<double> const& vpp_grid);

//---------------------------------------------------------------------------//
// Serialization (versioned JSON)
//---------------------------------------------------------------------------//

inline constexpr int model_format_version = 1;
std::string model_to_json(TrapModel const& model, CalibrationReport const* report = nullptr);
TrapModel model_from_json(std::string const& text);

}  // namespace fibretrap::trap
