#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fibretrap/fitkit.hpp"
#include "fibretrap/rng.hpp"

namespace fibretrap::optics {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

class OpticsError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/*!
 * Gaussian standing-wave mode of a two-mirror cavity centred on the trap.
 *
 * The cavity axis is z; the upper mirror sits at +length/2 and the lower at
 * -length/2. `waist_z` is the waist position relative to the centre.
 */
struct CavityMode
{
    double wavelength = 0;
    double length = 0;
    double roc_upper = 0;
    double roc_lower = 0;
    double w0 = 0;
    double rayleigh_range = 0;
    double waist_z = 0;
    double antinode_offset = 0;
    double g0 = 0;  //!< rad/s, optional peak coupling

    double wavenumber() const;
    // (1 - L/R1)(1 - L/R2)
    double stability_product() const;
    double beam_radius(double z) const;
    double gouy_phase(double z) const;
    void validate() const;
};

CavityMode cavity_mode_from_geometry(double length,
                                     double roc_upper,
                                     double roc_lower,
                                     double wavelength);

// psi in [-1, 1]; coupling follows psi, emission psi^2.
double mode_amplitude(CavityMode const& mode, Vec3 const& r);

/*!
 * psi^2 averaged over a Gaussian axial spread sigma_z about r.z():
 *   envelope * (1 + exp(-2 k^2 sigma_z^2) cos 2 theta) / 2
 * with theta the standing-wave phase at r.z() and the envelope evaluated
 * at r.
 */
double mean_mode_intensity(CavityMode const& mode, Vec3 const& r, double sigma_z);

struct LaserParams
{
    double detuning = 0;     //!< rad/s
    double linewidth = 0;    //!< rad/s, natural linewidth Gamma
    double saturation = 1;
    Vec3 k_vector = Vec3::Zero();  //!< 1/m
    double efficiency = 1;   //!< detected fraction of scattered photons
};

// efficiency * (Gamma/2) s / (1 + s + (2 (Delta - k.v) / Gamma)^2), counts/s.
double fluorescence_rate(LaserParams const& laser, Vec3 const& velocity);

struct EmissionParams
{
    double peak_rate = 0;        //!< counts/s above background at an antinode
    double lorentzian_width = 0; //!< half width, rad/s
    double gaussian_width = 0;   //!< standard deviation, rad/s
    double background_rate = 4200;
};

// background + peak psi^2 V(detuning), with V a unit-peak pseudo-Voigt.
double cavity_emission_rate(CavityMode const& mode,
                            Vec3 const& r,
                            double cavity_detuning,
                            EmissionParams const& p);

struct PhotonStream
{
    double t_start = 0;
    double t_end = 0;
    std::vector<double> arrivals;

    void validate() const;
    // Single column arrival_s.
    void write_csv(std::ostream& os) const;
};

using RateFn = std::function<double(double)>;

// Inhomogeneous Poisson arrivals by thinning against rate_cap.
PhotonStream sample_photon_arrivals(RateFn const& rate,
                                    double t_start,
                                    double t_end,
                                    double rate_cap,
                                    Rng& rng);
PhotonStream sample_photon_arrivals(RateFn const& rate,
                                    double t_start,
                                    double t_end,
                                    double rate_cap,
                                    std::uint64_t seed);

struct CameraModel
{
    double pixel_pitch = 2.0e-6;  //!< object-space metres per pixel
    double psf_sigma = 1.5e-6;
    double counts_per_photon = 1;
    double dark_rate = 0;         //!< counts per pixel per second
    int width = 64;
    int height = 48;

    void validate() const;
    // Pixel coordinate of an object-plane position; the sensor centre is
    // the optical axis.
    Vec2 to_pixels(Vec2 const& object) const;
};

/*!
 * Photon count drawn from Poisson(rate * exposure); each photon lands at the
 * mean plus Gaussian position spread plus PSF; dark counts are Poisson per
 * pixel.
 */
fit::Frame render_ion_image(Vec2 const& mean_position,
                            Vec2 const& position_sigma,
                            CameraModel const& camera,
                            double exposure,
                            double photon_rate,
                            std::uint64_t seed);

// Binary 16-bit portable greymap, counts clipped to 65535.
void write_pgm(std::ostream& os, fit::Frame const& frame);

}  // namespace fibretrap::optics
