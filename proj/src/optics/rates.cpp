#include <cmath>

#include "fibretrap/optics.hpp"

namespace fibretrap::optics {

double fluorescence_rate(LaserParams const& laser, Vec3 const& velocity)
{
    if (!(laser.linewidth > 0))
        throw OpticsError("laser linewidth must be positive");
    double const delta = laser.detuning - laser.k_vector.dot(velocity);
    double const x = 2 * delta / laser.linewidth;
    double const s = laser.saturation;
    return laser.efficiency * 0.5 * laser.linewidth * s / (1 + s + x * x);
}

double cavity_emission_rate(CavityMode const& mode,
                            Vec3 const& r,
                            double cavity_detuning,
                            EmissionParams const& p)
{
    if (!(p.lorentzian_width > 0) || !(p.gaussian_width > 0))
        throw OpticsError("emission line widths must be positive");
    double const psi = mode_amplitude(mode, r);
    return p.background_rate
           + p.peak_rate * psi * psi
                 * fit::pseudo_voigt_unit_peak(cavity_detuning, p.gaussian_width,
                                               p.lorentzian_width);
}

}  // namespace fibretrap::optics
