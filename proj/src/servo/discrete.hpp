#pragma once

#include <vector>

#include "fibretrap/servo.hpp"

namespace fibretrap::servo::detail {

/*!
 * Bilinear map of (n2 s^2 + n1 s + n0) / (d2 s^2 + d1 s + d0) with the
 * numerator and denominator prewarped separately, so both the pole and the
 * zero frequencies are exact.
 */
Biquad bilinear(double n2, double n1, double n0, double d2, double d1, double d0,
                double w_num, double w_den, double sample_rate);

struct BiquadState
{
    Biquad c;
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

    double step(double x)
    {
        double const y = c.b0 * x + c.b1 * x1 + c.b2 * x2 - c.a1 * y1 - c.a2 * y2;
        x2 = x1;
        x1 = x;
        y2 = y1;
        y1 = y;
        return y;
    }
};

struct Cascade
{
    std::vector<BiquadState> stages;
    double gain = 1;

    double step(double x)
    {
        double v = gain * x;
        for (auto& s : stages)
            v = s.step(v);
        return v;
    }
};

Cascade discretize(PlantModel const& plant, double sample_rate);

// PI plus filter sections with internal state.
struct Controller
{
    Cascade sections;
    double kp = 0;
    double ki_half_t = 0;  // ki * T / 2
    double integ = 0;
    double prev = 0;

    explicit Controller(LoopFilter const& f);
    double step(double e)
    {
        integ += ki_half_t * (e + prev);
        prev = e;
        return sections.step(kp * e + integ);
    }
};

}  // namespace fibretrap::servo::detail
