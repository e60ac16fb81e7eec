#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "fibretrap/optics.hpp"

namespace fibretrap::optics {

namespace {

struct ModeGeometry
{
    double z_r = 0;
    double w0 = 0;
    double waist_z = 0;
};

// Two-mirror Gaussian mode; distances measured from the lower mirror.
ModeGeometry solve_geometry(double length, double r_up, double r_lo, double wavelength)
{
    double const g = (1 - length / r_up) * (1 - length / r_lo);
    if (!(g > 0 && g < 1))
    {
        throw OpticsError(fmt::format(
            "unstable cavity: stability product (1 - L/R1)(1 - L/R2) = {:.6g} not in (0, 1)", g));
    }
    double const denom = r_up + r_lo - 2 * length;
    double const zr2 = length * (r_up - length) * (r_lo - length) * (r_up + r_lo - length)
                       / (denom * denom);
    ModeGeometry m;
    m.z_r = std::sqrt(zr2);
    m.w0 = std::sqrt(wavelength * m.z_r / std::numbers::pi);
    m.waist_z = -length / 2 + length * (r_up - length) / denom;
    return m;
}

}  // namespace

double CavityMode::wavenumber() const
{
    return 2 * std::numbers::pi / wavelength;
}

double CavityMode::stability_product() const
{
    return (1 - length / roc_upper) * (1 - length / roc_lower);
}

double CavityMode::beam_radius(double z) const
{
    double const u = (z - waist_z) / rayleigh_range;
    return w0 * std::sqrt(1 + u * u);
}

double CavityMode::gouy_phase(double z) const
{
    return std::atan((z - waist_z) / rayleigh_range);
}

void CavityMode::validate() const
{
    if (!(wavelength > 0) || !(length >= 1e-6) || !(roc_upper > 0) || !(roc_lower > 0))
        throw OpticsError("cavity mode needs positive wavelength and ROCs and a length of at least 1 um");
    auto const m = solve_geometry(length, roc_upper, roc_lower, wavelength);
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::abs(b); };
    if (!close(w0, m.w0) || !close(rayleigh_range, m.z_r))
        throw OpticsError("cavity waist or Rayleigh range inconsistent with the geometry");
    if (std::abs(waist_z - m.waist_z) > 1e-9 * length)
        throw OpticsError("cavity waist position inconsistent with the geometry");
}

CavityMode cavity_mode_from_geometry(double length,
                                     double roc_upper,
                                     double roc_lower,
                                     double wavelength)
{
    if (!(length >= 1e-6))
        throw OpticsError(fmt::format("cavity length {:.3g} m is degenerate (below 1 um)", length));
    if (!(roc_upper > 0) || !(roc_lower > 0) || !(wavelength > 0))
        throw OpticsError("mirror radii and wavelength must be positive");
    auto const m = solve_geometry(length, roc_upper, roc_lower, wavelength);
    CavityMode mode;
    mode.wavelength = wavelength;
    mode.length = length;
    mode.roc_upper = roc_upper;
    mode.roc_lower = roc_lower;
    mode.w0 = m.w0;
    mode.rayleigh_range = m.z_r;
    mode.waist_z = m.waist_z;
    return mode;
}

namespace {

double standing_phase(CavityMode const& mode, double z)
{
    double const k = mode.wavenumber();
    return k * (z + mode.antinode_offset) - mode.gouy_phase(z);
}

void check_inside(CavityMode const& mode, Vec3 const& r)
{
    if (!(std::abs(r.z()) < mode.length / 2))
        throw OpticsError("position lies outside the cavity");
}

}  // namespace

double mode_amplitude(CavityMode const& mode, Vec3 const& r)
{
    check_inside(mode, r);
    double const w = mode.beam_radius(r.z());
    double const rho2 = r.x() * r.x() + r.y() * r.y();
    return mode.w0 / w * std::cos(standing_phase(mode, r.z())) * std::exp(-rho2 / (w * w));
}

/*!
 * The local wavenumber includes the Gouy slope, so the closed form stays
 * exact to first order in sigma_z / rayleigh_range.
 */
double mean_mode_intensity(CavityMode const& mode, Vec3 const& r, double sigma_z)
{
    check_inside(mode, r);
    if (!(sigma_z >= 0))
        throw OpticsError("position spread must be non-negative");
    double const w = mode.beam_radius(r.z());
    double const rho2 = r.x() * r.x() + r.y() * r.y();
    double const envelope = (mode.w0 / w) * (mode.w0 / w) * std::exp(-2 * rho2 / (w * w));
    double const u = (r.z() - mode.waist_z) / mode.rayleigh_range;
    double const k_local = mode.wavenumber() - 1 / (mode.rayleigh_range * (1 + u * u));
    double const contrast = std::exp(-2 * k_local * k_local * sigma_z * sigma_z);
    return envelope * 0.5 * (1 + contrast * std::cos(2 * standing_phase(mode, r.z())));
}

}  // namespace fibretrap::optics
