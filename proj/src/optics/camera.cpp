#include <algorithm>
#include <cmath>
#include <ostream>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include "fibretrap/optics.hpp"

namespace fibretrap::optics {

void CameraModel::validate() const
{
    if (!(pixel_pitch > 0) || !(psf_sigma > 0) || !(counts_per_photon > 0) || !(dark_rate >= 0))
        throw OpticsError("camera pitch, PSF and gain must be positive, dark rate non-negative");
    if (width < 1 || height < 1)
        throw OpticsError("camera sensor must have at least one pixel");
    if (psf_sigma < pixel_pitch / 4)
        throw OpticsError("PSF narrower than a quarter pixel is undersampled");
}

Vec2 CameraModel::to_pixels(Vec2 const& object) const
{
    return Vec2(object.x() / pixel_pitch + 0.5 * (width - 1),
                object.y() / pixel_pitch + 0.5 * (height - 1));
}

namespace {

template<class Dist>
double draw_poisson(double mean, Rng& rng)
{
    if (!(mean > 0))
        return 0;
    Dist d(mean);
    return static_cast<double>(d(rng));
}

}  // namespace

fit::Frame render_ion_image(Vec2 const& mean_position,
                            Vec2 const& position_sigma,
                            CameraModel const& camera,
                            double exposure,
                            double photon_rate,
                            std::uint64_t seed)
{
    camera.validate();
    if (!(exposure >= 0) || !(photon_rate >= 0))
        throw OpticsError("exposure and photon rate must be non-negative");
    if (!(position_sigma.minCoeff() >= 0))
        throw OpticsError("position spread must be non-negative");
    Vec2 const centre = camera.to_pixels(mean_position);
    if (centre.x() < -0.5 || centre.x() > camera.width - 0.5 || centre.y() < -0.5
        || centre.y() > camera.height - 0.5)
        throw OpticsError("ion image lies outside the sensor");

    using Poisson = boost::random::poisson_distribution<long, double>;
    Rng rng = stream_rng(seed, 0, 0x63616d);
    fit::Frame frame;
    frame.width = camera.width;
    frame.height = camera.height;
    frame.pixels.assign(static_cast<std::size_t>(camera.width) * camera.height, 0.0);

    double const photons = draw_poisson<Poisson>(photon_rate * exposure, rng);
    double const sx = std::hypot(position_sigma.x(), camera.psf_sigma) / camera.pixel_pitch;
    double const sy = std::hypot(position_sigma.y(), camera.psf_sigma) / camera.pixel_pitch;
    boost::random::normal_distribution<double> normal;
    for (long n = 0; n < static_cast<long>(photons); ++n)
    {
        double const u = centre.x() + sx * normal(rng);
        double const v = centre.y() + sy * normal(rng);
        auto const i = static_cast<long>(std::floor(u + 0.5));
        auto const j = static_cast<long>(std::floor(v + 0.5));
        if (i >= 0 && i < camera.width && j >= 0 && j < camera.height)
            frame.at(static_cast<int>(i), static_cast<int>(j)) += camera.counts_per_photon;
    }
    double const dark_mean = camera.dark_rate * exposure;
    if (dark_mean > 0)
    {
        for (auto& p : frame.pixels)
            p += draw_poisson<Poisson>(dark_mean, rng);
    }
    return frame;
}

void write_pgm(std::ostream& os, fit::Frame const& frame)
{
    os << "P5\n" << frame.width << " " << frame.height << "\n65535\n";
    for (double p : frame.pixels)
    {
        auto const v = static_cast<unsigned>(std::clamp(std::lround(p), 0L, 65535L));
        char const bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xff)};
        os.write(bytes, 2);
    }
}

}  // namespace fibretrap::optics
