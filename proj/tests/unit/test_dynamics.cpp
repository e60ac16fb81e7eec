#include "doctest.h"

#include <cmath>
#include <numbers>

#include "fibretrap/dynamics.hpp"

using namespace fibretrap;
using namespace fibretrap::dyn;
using trap::main_drive;

namespace {

double const pi = std::numbers::pi;

trap::Calibration const& calibrated()
{
    static auto const cal = trap::calibrate_model(trap::CalibrationTargets::reference());
    return cal;
}

double rf_period(DriveConfig const& d)
{
    return 2 * pi / d.omega_rf;
}

// Mathieu characteristic exponent for a = 0 from the continued fraction.
double mathieu_beta(double q)
{
    auto tail = [q](double beta, int sign) {
        double v = 0;
        for (int k = 40; k >= 1; --k)
        {
            double const s = beta + sign * 2 * k;
            v = q * q / (s * s - v);
        }
        return v;
    };
    double beta = q / std::sqrt(2.0);
    for (int it = 0; it < 200; ++it)
        beta = std::sqrt(tail(beta, +1) + tail(beta, -1));
    return beta;
}

}  // namespace

TEST_CASE("zero force leaves the ion in place")
{
    TrapModel model;
    DriveConfig drive;
    Vec3 const r0(1e-6, -2e-6, 3e-6);
    auto traj = integrate_trajectory(model, drive, 0, r0, Vec3::Zero(), 60 * rf_period(drive));
    bool still = true;
    for (auto const& r : traj.positions)
        still = still && r == r0;
    CHECK(still);
}

TEST_CASE("integration preconditions")
{
    auto const& model = calibrated().model;
    auto drive = main_drive(200);
    double const t = rf_period(drive);
    CHECK_THROWS_AS(integrate_trajectory(model, drive, 0, Vec3::Zero(), Vec3::Zero(), 60 * t, t / 50),
                    DynamicsError);
    CHECK_THROWS_AS(integrate_trajectory(model, drive, 0, Vec3::Zero(), Vec3::Zero(), 10 * t),
                    DynamicsError);
    CHECK_THROWS_AS(integrate_trajectory(model, drive, -1, Vec3::Zero(), Vec3::Zero(), 60 * t),
                    DynamicsError);
}

TEST_CASE("damped ion settles onto the null")
{
    auto const& model = calibrated().model;
    auto drive = main_drive(200);
    drive[Electrode::radial_y].amplitude = 60;
    Vec3 const null = trap::find_rf_null(model, drive);
    auto traj = integrate_trajectory(model, drive, default_damping, null + Vec3(30e-9, 0, 40e-9),
                                     Vec3::Zero(), 400e-6);
    std::size_t const tail = traj.size() - 20 * 200;
    double worst = 0;
    for (std::size_t i = tail; i < traj.size(); ++i)
        worst = std::max(worst, (traj.positions[i] - null).norm());
    CHECK(worst < 1e-9);
}

TEST_CASE("secular peak matches the pseudopotential and Mathieu theory")
{
    auto const& model = calibrated().model;
    auto drive = main_drive(200);
    auto const sec = trap::secular_frequencies(model, drive);
    auto traj = integrate_trajectory(model, drive, 0, Vec3(0.3e-6, 0, 0.5e-6), Vec3::Zero(), 200e-6);
    double const fz = secular_peak_hz(traj, 2, drive.omega_rf, 0.2 * sec.axial_hz(),
                                      2.0 * sec.axial_hz());
    CHECK(fz == doctest::Approx(sec.axial_hz()).epsilon(0.05));

    double const qz = std::abs(stability_parameters(model, drive).q.z());
    double const mathieu_hz = mathieu_beta(qz) * drive.omega_rf / 2 / (2 * pi);
    CHECK(fz == doctest::Approx(mathieu_hz).epsilon(0.005));

    double const fx = secular_peak_hz(traj, 0, drive.omega_rf, 0.2 * sec.radial_hz(),
                                      2.0 * sec.radial_hz());
    CHECK(fx == doctest::Approx(sec.radial_hz()).epsilon(0.05));
}

TEST_CASE("secular amplitude decays at half the damping rate")
{
    auto const& model = calibrated().model;
    auto drive = main_drive(200);
    double const gamma = 2 * pi * 20e3;
    auto traj = integrate_trajectory(model, drive, gamma, Vec3(0, 0, 1e-6), Vec3::Zero(), 100e-6);
    // Period-averaged z, then local maxima of |z| as the envelope.
    std::size_t const per = 200;
    std::vector<double> zs, ts;
    for (std::size_t b = 0; (b + 1) * per < traj.size(); ++b)
    {
        double s = 0;
        for (std::size_t i = 0; i < per; ++i)
            s += traj.positions[b * per + i].z();
        zs.push_back(std::abs(s / per));
        ts.push_back(traj.time(b * per + per / 2));
    }
    std::vector<double> pt, pl;
    for (std::size_t i = 1; i + 1 < zs.size(); ++i)
    {
        if (zs[i] > zs[i - 1] && zs[i] >= zs[i + 1] && zs[i] > 1e-9)
        {
            pt.push_back(ts[i]);
            pl.push_back(std::log(zs[i]));
        }
    }
    REQUIRE(pt.size() > 20);
    double const slope = fit::fit_polynomial(pt, pl, 1, false).value("c1");
    CHECK(-slope == doctest::Approx(gamma / 2).epsilon(0.05));
}

TEST_CASE("micromotion projection")
{
    double const w = 2 * pi * 20e6;
    Trajectory traj;
    traj.dt = 2 * pi / w / 200;
    double const a = 10e-9;
    for (int i = 0; i <= 200 * 100; ++i)
    {
        double const t = traj.time(i);
        traj.positions.push_back(Vec3(0, 5e-6, a * std::sin(w * t)));
        traj.velocities.push_back(Vec3::Zero());
    }
    auto ph = micromotion_phasor(traj, w);
    CHECK(ph[2].amplitude == doctest::Approx(a).epsilon(1e-9));
    CHECK(ph[2].phase == doctest::Approx(-pi / 2).epsilon(1e-9));
    CHECK(ph[1].amplitude < 1e-18);
    CHECK(ph[0].amplitude == 0);

    traj.positions.resize(200 * 25);
    traj.velocities.resize(200 * 25);
    CHECK_THROWS_AS(micromotion_phasor(traj, w), DynamicsError);
}

TEST_CASE("mismatch formula arithmetic")
{
    MismatchParams p{0.2, 175e-6, 0.5, 0.02, 2 * pi * 20e6};
    CHECK(mismatch_micromotion_prediction(p) == doctest::Approx(87.5e-9).epsilon(1e-12));
    p.delta = 0;
    CHECK(mismatch_micromotion_prediction(p) == 0);
    p.q = 0.95;
    CHECK_THROWS_AS(mismatch_micromotion_prediction(p), DynamicsError);
}

TEST_CASE("stability parameters")
{
    auto model = trap::TrapModel{};
    model[Electrode::outer_pair].Q = Vec3(1e7, 1e7, -2e7).asDiagonal();
    auto sp = stability_parameters(model, main_drive(100));
    CHECK(sp.a.norm() == 0);
    CHECK(sp.q.x() == doctest::Approx(-sp.q.z() / 2).epsilon(1e-14));
    CHECK(sp.q.y() == sp.q.x());

    // Calibrated model: small-q relation holds exactly in the pseudopotential.
    auto const& cal = calibrated();
    auto drive = main_drive(200);
    double const qz = std::abs(stability_parameters(cal.model, drive).q.z());
    double const fz = trap::secular_frequencies(cal.model, drive).axial_hz();
    CHECK(qz == doctest::Approx(2 * std::sqrt(2.0) * 2 * pi * fz / drive.omega_rf).epsilon(1e-12));
    CHECK(qz == doctest::Approx(cal.report.q_axial_at_ref).epsilon(1e-12));

    auto dc = drive;
    dc[Electrode::outer_pair].dc = 1;
    CHECK(stability_parameters(cal.model, dc).a.z() != 0);
}

namespace {

struct MismatchRun
{
    AxisPhasor phasor;
    MismatchParams params;
};

MismatchRun mismatch_run(double delta, double dt = 0)
{
    auto const& model = calibrated().model;
    auto in_phase = main_drive(200);
    in_phase[Electrode::radial_y].amplitude = 100;
    Vec3 const null = trap::find_rf_null(model, in_phase);
    auto drive = in_phase;
    drive[Electrode::radial_y].phase = delta;
    auto traj = integrate_trajectory(model, drive, default_damping, null, Vec3::Zero(), 100e-6, dt);
    MismatchRun out;
    out.phasor = micromotion_phasor(traj, drive.omega_rf)[1];
    out.params = mismatch_params(model, in_phase, {Electrode::radial_y}, 1, 175e-6, delta);
    return out;
}

}  // namespace

TEST_CASE("phase-mismatch micromotion")
{
    auto const a1 = mismatch_run(0.02);
    auto const a2 = mismatch_run(0.04);
    CHECK(a2.phasor.amplitude / a1.phasor.amplitude == doctest::Approx(2.0).epsilon(0.01));
    double const predicted = mismatch_micromotion_prediction(a1.params);
    CHECK(a1.phasor.amplitude == doctest::Approx(predicted).epsilon(0.1));

    auto const m1 = mismatch_run(-0.02);
    CHECK(m1.phasor.amplitude == doctest::Approx(a1.phasor.amplitude).epsilon(0.01));
    double dphi = std::remainder(m1.phasor.phase - a1.phasor.phase, 2 * pi);
    CHECK(std::abs(dphi) == doctest::Approx(pi).epsilon(0.01));

    auto const coarse = mismatch_run(0.02, 2 * default_dt(main_drive(200)));
    CHECK(coarse.phasor.amplitude == doctest::Approx(a1.phasor.amplitude).epsilon(0.01));
}

TEST_CASE("in-phase micromotion is bounded by the secular-driven term")
{
    auto const& model = calibrated().model;
    auto drive = main_drive(200);
    double const amp = 0.5e-6;
    auto traj = integrate_trajectory(model, drive, 0, Vec3(0, 0, amp), Vec3::Zero(), 100e-6);
    double const qz = std::abs(stability_parameters(model, drive).q.z());
    auto ph = micromotion_phasor(traj, drive.omega_rf);
    CHECK(ph[2].amplitude <= qz / 2 * amp + 1e-9);
}

TEST_CASE("thermal kicks are seeded")
{
    auto const& model = calibrated().model;
    auto drive = main_drive(200);
    double const dur = 60 * rf_period(drive);
    auto run = [&](std::uint64_t seed) {
        return integrate_trajectory(model, drive, default_damping, Vec3::Zero(), Vec3::Zero(), dur,
                                    0, ThermalKicks{1e-3, seed});
    };
    auto a = run(7);
    auto b = run(7);
    auto c = run(8);
    CHECK(a.positions.back() == b.positions.back());
    CHECK(a.positions.back() != c.positions.back());
}

TEST_CASE("unstable drive reports the escape time")
{
    auto const& model = calibrated().model;
    auto drive = main_drive(650);
    try
    {
        integrate_trajectory(model, drive, 0, Vec3(0, 0, 1e-6), Vec3::Zero(), 4000 * rf_period(drive));
        FAIL("expected an instability");
    }
    catch (InstabilityError const& e)
    {
        CHECK(e.escape_time > 0);
        CHECK(e.escape_time < 4000 * rf_period(drive));
    }
}
