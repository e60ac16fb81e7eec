#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "discrete.hpp"

namespace fibretrap::servo {

namespace {

double const two_pi = 2 * std::numbers::pi;

}  // namespace

double actuator_stroke(Piezo p)
{
    return p == Piezo::multilayer ? 1.5 : 0.45;
}

void PlantModel::validate() const
{
    if (!(dc_gain > 0) || !std::isfinite(dc_gain))
        throw ServoError("plant dc gain must be positive");
    if (!(rolloff_hz >= 0))
        throw ServoError("plant roll-off must be non-negative");
    double last = 0;
    for (auto const& r : resonances)
    {
        if (!(r.frequency_hz > last))
            throw ServoError("plant resonances must be positive and sorted");
        if (!(r.q > 0) || !(r.coupling > -1))
            throw ServoError(fmt::format("resonance at {:g} Hz needs q > 0 and coupling > -1",
                                         r.frequency_hz));
        last = r.frequency_hz;
    }
}

PlantModel PlantModel::reference()
{
    PlantModel p;
    p.resonances = {{900, 20, 0.2}, {9000, 30, 0.15}};
    p.dc_gain = actuator_stroke(Piezo::multilayer);
    return p;
}

cplx plant_frequency_response(PlantModel const& plant, double f_hz)
{
    plant.validate();
    if (!(f_hz > 0))
        throw ServoError("frequency must be positive");
    cplx const s(0, two_pi * f_hz);
    cplx h = plant.dc_gain;
    for (auto const& r : plant.resonances)
    {
        double const wp = two_pi * r.frequency_hz;
        double const wz = wp * (1 + r.coupling);
        h *= (s * s / (wz * wz) + s / (wz * r.q) + 1.0) / (s * s / (wp * wp) + s / (wp * r.q) + 1.0);
    }
    if (plant.rolloff_hz > 0)
        h /= 1.0 + s / (two_pi * plant.rolloff_hz);
    return h;
}

namespace detail {

Biquad bilinear(double n2, double n1, double n0, double d2, double d1, double d0,
                double w_num, double w_den, double sample_rate)
{
    double const t = 1 / sample_rate;
    double const kn = w_num / std::tan(w_num * t / 2);
    double const kd = w_den / std::tan(w_den * t / 2);
    double const a0 = d2 * kd * kd + d1 * kd + d0;
    Biquad b;
    b.b0 = (n2 * kn * kn + n1 * kn + n0) / a0;
    b.b1 = (-2 * n2 * kn * kn + 2 * n0) / a0;
    b.b2 = (n2 * kn * kn - n1 * kn + n0) / a0;
    b.a1 = (-2 * d2 * kd * kd + 2 * d0) / a0;
    b.a2 = (d2 * kd * kd - d1 * kd + d0) / a0;
    return b;
}

Cascade discretize(PlantModel const& plant, double sample_rate)
{
    plant.validate();
    Cascade c;
    c.gain = plant.dc_gain;
    for (auto const& r : plant.resonances)
    {
        double const wp = two_pi * r.frequency_hz;
        double const wz = wp * (1 + r.coupling);
        c.stages.push_back({bilinear(1 / (wz * wz), 1 / (wz * r.q), 1, 1 / (wp * wp),
                                     1 / (wp * r.q), 1, wz, wp, sample_rate)});
    }
    if (plant.rolloff_hz > 0)
    {
        double const wa = two_pi * plant.rolloff_hz;
        c.stages.push_back({bilinear(0, 0, 1, 0, 1 / wa, 1, wa, wa, sample_rate)});
    }
    return c;
}

}  // namespace detail

}  // namespace fibretrap::servo
