#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "fibretrap/servo.hpp"

using namespace fibretrap::servo;

namespace {

double const pi = std::numbers::pi;

double deg(cplx h)
{
    return std::arg(h) * 180 / pi;
}

double lock_linewidth()
{
    return linewidth_length_nm(370e-6, 897e-9, 22e6);
}

}  // namespace

TEST_CASE("plant response")
{
    auto plant = PlantModel::reference();
    cplx const low = plant_frequency_response(plant, 10);
    CHECK(std::abs(low) == doctest::Approx(1.5).epsilon(0.01));
    CHECK(std::abs(deg(low)) < 2);

    for (auto const& r : plant.resonances)
    {
        double hi = -1e9, lo = 1e9, unwrap = 0, prev = deg(plant_frequency_response(plant, r.frequency_hz / std::sqrt(2.0)));
        for (int i = 0; i <= 2000; ++i)
        {
            double const f = r.frequency_hz * std::pow(2.0, -0.5 + i / 2000.0);
            double const p = deg(plant_frequency_response(plant, f));
            unwrap += std::remainder(p - prev, 360.0);
            prev = p;
            hi = std::max(hi, unwrap);
            lo = std::min(lo, unwrap);
        }
        CHECK(hi - lo > 60);
    }

    double const top = plant.resonances.back().frequency_hz;
    double last = std::abs(plant_frequency_response(plant, 10 * top));
    bool monotone = true;
    for (int i = 1; i <= 100; ++i)
    {
        double const m = std::abs(plant_frequency_response(plant, 10 * top * std::pow(10.0, i / 100.0)));
        monotone = monotone && m < last;
        last = m;
    }
    CHECK(monotone);

    CHECK(actuator_stroke(Piezo::multilayer) == 1.5);
    CHECK(actuator_stroke(Piezo::monolayer) == 0.45);
    PlantModel bad = plant;
    std::swap(bad.resonances[0], bad.resonances[1]);
    CHECK_THROWS_AS(bad.validate(), ServoError);
}

TEST_CASE("filter composition")
{
    SUBCASE("unity stages are flat")
    {
        FilterSpec s;
        s.kp = 1;
        s.stages = {{10, 0.7, 1, 1, 1}, {100e3, 0.7, 1, 1, 1}};
        auto f = compose_loop_filter(s);
        double worst = 0;
        for (int i = 0; i <= 200; ++i)
        {
            double const fr = std::pow(10.0, i * 5.5 / 200);
            worst = std::max(worst, std::abs(std::abs(f.response(fr)) - 1));
        }
        CHECK(worst < 1e-6);
    }
    SUBCASE("low-pass corner")
    {
        FilterSpec s;
        s.kp = 1;
        s.stages = {{500, 1 / std::sqrt(2.0), 1, 0, 0}};
        auto f = compose_loop_filter(s);
        CHECK(std::abs(f.response(500)) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(0.02));
        CHECK(std::abs(f.response(1)) == doctest::Approx(1).epsilon(1e-6));
    }
    SUBCASE("invalid stages")
    {
        FilterSpec s;
        s.kp = 1;
        s.stages = {{200e3, 0.7, 1, 0, 0}};
        CHECK_THROWS_AS(compose_loop_filter(s), ServoError);
        s.stages = {{1e3, -0.7, 1, 0, 0}};
        CHECK_THROWS_AS(compose_loop_filter(s), ServoError);
        Biquad b;
        b.a2 = 1.2;
        CHECK_FALSE(b.stable());
        LoopFilter lf;
        lf.sections = {b};
        CHECK_THROWS_AS(lf.validate(), ServoError);
    }
}

TEST_CASE("loop margins")
{
    double const lw = lock_linewidth();
    SUBCASE("pure integrator")
    {
        PlantModel flat;
        flat.dc_gain = 1;
        flat.rolloff_hz = 0;
        FilterSpec s;
        s.ki = 2 * pi * 1e3 * lw;
        auto m = loop_margins(flat, compose_loop_filter(s), lw);
        CHECK(m.unity_gain_hz == doctest::Approx(1e3).epsilon(1e-3));
        CHECK(m.phase_margin_deg == doctest::Approx(90).epsilon(0.5 / 90));
    }
    SUBCASE("compensated reference loop")
    {
        auto plant = PlantModel::reference();
        auto spec = reference_filter_spec();
        auto m = loop_margins(plant, compose_loop_filter(spec), lw);
        CHECK(m.phase_margin_deg >= 30);
        CHECK(m.gain_margin_db > 0);

        auto without = spec;
        without.stages.erase(without.stages.begin());
        auto mu = loop_margins(plant, compose_loop_filter(without), lw);
        CHECK(m.phase_margin_deg > mu.phase_margin_deg);

        auto doubled = spec;
        doubled.kp *= 2;
        doubled.ki *= 2;
        auto md = loop_margins(plant, compose_loop_filter(doubled), lw);
        CHECK(md.unity_gain_hz > m.unity_gain_hz);
        CHECK(m.gain_margin_db - md.gain_margin_db == doctest::Approx(20 * std::log10(2.0)).epsilon(1e-6));
    }
    SUBCASE("no crossing")
    {
        CHECK_THROWS_AS(loop_margins(PlantModel::reference(), compose_loop_filter(FilterSpec{}), lw),
                        ServoError);
    }
}

TEST_CASE("linewidth in length units")
{
    double const fsr = 299792458.0 / (2 * 370e-6);
    double const finesse = fsr / 22e6;
    CHECK(lock_linewidth() == doctest::Approx(897 / (2 * finesse)).epsilon(1e-12));
}

TEST_CASE("time-domain chain matches the composed response")
{
    auto plant = PlantModel::reference();
    auto filter = compose_loop_filter(reference_filter_spec());
    for (double f : {20.0, 150.0, 600.0, 850.0, 1200.0, 3000.0, 7000.0, 9500.0, 25000.0, 80000.0})
    {
        cplx const measured = measured_chain_response(plant, filter, f);
        cplx const analytic = plant_frequency_response(plant, f) * filter.response(f)
                              * std::polar(1.0, -2 * pi * f / filter.sample_rate);
        CHECK(std::abs(measured) == doctest::Approx(std::abs(analytic)).epsilon(0.02));
        CHECK(std::abs(deg(measured / analytic)) < 2);
    }
}

TEST_CASE("lock simulation")
{
    auto plant = PlantModel::reference();
    auto filter = compose_loop_filter(reference_filter_spec());
    double const lw = lock_linewidth();

    auto quiet = simulate_lock(plant, filter, lw, NoiseModel{}, 0.05, 1);
    bool zero = true;
    for (double x : quiet.residual)
        zero = zero && x == 0;
    CHECK(zero);

    auto const noise = NoiseModel::reference();
    auto closed = simulate_lock(plant, filter, lw, noise, 1.0, 5);
    auto open = simulate_lock(plant, filter, lw, noise, 1.0, 5, false);
    CHECK(closed.residual_std <= 1.0 / 13);
    CHECK(suppression_db(open, closed, 100) >= 20);
    CHECK(open.residual_std > closed.residual_std);

    auto again = simulate_lock(plant, filter, lw, noise, 1.0, 5, true, 1000);
    CHECK(again.residual == closed.residual);
    auto other = simulate_lock(plant, filter, lw, noise, 1.0, 6);
    CHECK(other.residual != closed.residual);

    std::ostringstream csv;
    quiet.write_csv(csv, 1000);
    CHECK(csv.str().rfind("t_s,error_linewidths\n", 0) == 0);
}

TEST_CASE("positive feedback diverges with an error")
{
    auto plant = PlantModel::reference();
    auto spec = reference_filter_spec();
    spec.kp = -spec.kp;
    spec.ki = -spec.ki;
    NoiseModel n{0.01, 5, 0.01};
    CHECK_THROWS_WITH_AS(simulate_lock(plant, compose_loop_filter(spec), lock_linewidth(), n, 0.2, 1),
                         doctest::Contains("diverged"), ServoError);
}

TEST_CASE("Bode table")
{
    std::ostringstream os;
    write_bode_csv(os, PlantModel::reference(), compose_loop_filter(reference_filter_spec()),
                   lock_linewidth(), 1, 1e5, 11);
    std::string const text = os.str();
    CHECK(text.rfind("f_Hz,mag_dB,phase_deg\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 12);
}
