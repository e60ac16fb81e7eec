#include "doctest.h"

#include <cmath>
#include <numbers>

#include "fibretrap/trapmodel.hpp"

using namespace fibretrap;
using namespace fibretrap::trap;

namespace {

Calibration const& calibrated()
{
    static Calibration const cal = calibrate_model(CalibrationTargets::reference());
    return cal;
}

double const two_pi = 2 * std::numbers::pi;

// Hand-built model with only a pure outer quadrupole kappa diag(1, 1, -2).
TrapModel pure_quadrupole(double kappa)
{
    TrapModel m;
    m[Electrode::outer_pair].Q = Vec3(kappa, kappa, -2 * kappa).asDiagonal();
    return m;
}

// Ground truth for the radial null: -beta V / (1 + gamma V) at V_main = 200.
double rational_null(double v)
{
    auto const& r = calibrated().report;
    return -r.radial_beta * v / (1 + r.radial_gamma * v);
}

}  // namespace

TEST_CASE("electrode labels round-trip")
{
    for (auto e : all_electrodes())
        CHECK(parse_electrode(label(e)) == e);
    CHECK_THROWS_AS(parse_electrode("nope"), ModelError);
}

TEST_CASE("ion defaults to calcium-40 plus")
{
    IonSpecies ion;
    CHECK(ion.mass == doctest::Approx(40 * 1.66053906660e-27 - 9.1093837015e-31).epsilon(1e-15));
    CHECK(ion.charge == 1.602176634e-19);
}

TEST_CASE("phasor field basics")
{
    auto const& model = calibrated().model;
    auto drive = main_drive(200);
    CHECK(rf_phasor_field(model, drive, Vec3::Zero()).norm() == 0);

    drive[Electrode::radial_y].amplitude = 50;
    Vec3 const r(3e-6, -2e-6, 1e-6);
    CVec3 const e1 = rf_phasor_field(model, drive, r);
    CHECK(e1.imag().norm() == 0);

    // Physical field over one RF period peaks at |E|.
    double peak = 0;
    for (int k = 0; k < 2000; ++k)
    {
        double const wt = two_pi * k / 2000;
        Vec3 const et = (e1 * std::polar(1.0, wt)).real();
        peak = std::max(peak, et.norm());
    }
    CHECK(peak == doctest::Approx(e1.norm()).epsilon(1e-5));

    auto doubled = drive;
    for (auto& s : doubled.sources)
        s.amplitude *= 2;
    CVec3 const e2 = rf_phasor_field(model, doubled, r);
    for (int k = 0; k < 3; ++k)
    {
        CHECK(e2[k].real() == 2 * e1[k].real());
        CHECK(e2[k].imag() == 2 * e1[k].imag());
    }
    CHECK_THROWS_AS(rf_phasor_field(model, drive, Vec3(0, 0, 150e-6)), ValidityError);
}

TEST_CASE("pseudopotential of a pure quadrupole along z")
{
    double const kappa = 1e7;
    auto model = pure_quadrupole(kappa);
    auto drive = main_drive(100);
    double const z = 7e-6;
    double const q = model.ion.charge;
    double const m = model.ion.mass;
    double const w = drive.omega_rf;
    double const expected_j = q * q * std::pow(2 * kappa * 100 * z, 2) / (4 * m * w * w);
    CHECK(pseudopotential(model, drive, Vec3(0, 0, z)) * q
          == doctest::Approx(expected_j).epsilon(1e-12));
    CHECK(pseudopotential(model, drive, Vec3::Zero()) == 0);

    auto sec = secular_frequencies(model, drive);
    CHECK(sec.axial_hz() / sec.radial_hz() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("harmonic consistency at the calibrated operating point")
{
    auto const& model = calibrated().model;
    auto drive = main_drive(200);
    auto sec = secular_frequencies(model, drive);
    double const x = 5e-6;
    double const wr = two_pi * sec.radial_hz();
    double const harmonic = 0.5 * model.ion.mass * wr * wr * x * x;
    CHECK(pseudopotential(model, drive, Vec3(x, 0, 0)) * model.ion.charge
          == doctest::Approx(harmonic).epsilon(1e-3));
}

TEST_CASE("null position")
{
    auto const& model = calibrated().model;
    auto drive = main_drive(200);
    CHECK(find_rf_null(model, drive).norm() < 1e-15);

    SUBCASE("radial electrode at 100 V")
    {
        drive[Electrode::radial_y].amplitude = 100;
        Vec3 const r = find_rf_null(model, drive);
        // Target polynomial value; the model's null curve is rational, so the
        // pointwise value agrees to within its deviation from the parabola.
        double const poly = 6.1e-5 * 100 * 100 - 0.1 * 100;
        CHECK(r.y() * 1e6 == doctest::Approx(poly).epsilon(5e-3));
        CHECK(r.y() == doctest::Approx(rational_null(100)).epsilon(1e-12));
        CHECK(std::abs(r.x()) < 1e-15);
        CHECK(std::abs(r.z()) < 1e-15);
        CHECK(rf_phasor_field(model, drive, r).norm() < 1e-6);
    }
    SUBCASE("differential inner drive of 1 V")
    {
        drive.set_differential_axial(1.0, 0.0);
        Vec3 const r = find_rf_null(model, drive);
        CHECK(std::abs(r.z()) >= 2e-6 * (1 - 1e-12));
    }
    SUBCASE("phase mismatch has no null")
    {
        drive[Electrode::radial_y].amplitude = 50;
        drive[Electrode::radial_y].phase = 0.01;
        CHECK_THROWS_AS(find_rf_null(model, drive), PhaseMismatchError);
    }
}

TEST_CASE("secular frequencies")
{
    auto const& cal = calibrated();
    auto sec = secular_frequencies(cal.model, main_drive(200));
    CHECK(sec.axial_hz() == doctest::Approx(200 * cal.report.axial_slope_model).epsilon(1e-12));
    CHECK(sec.radial_hz() == doctest::Approx(200 * cal.report.radial_slope_model).epsilon(1e-12));
    CHECK(sec.axial_index == 2);

    auto sec2 = secular_frequencies(cal.model, main_drive(400));
    for (int k = 0; k < 3; ++k)
        CHECK(sec2.frequencies_hz[k] == doctest::Approx(2 * sec.frequencies_hz[k]).epsilon(1e-12));

    TrapModel flat;
    CHECK_THROWS(secular_frequencies(flat, main_drive(200)));
}

TEST_CASE("calibration closure and disclosure")
{
    auto const& cal = calibrated();
    auto const& rep = cal.report;
    // The 2:1 constraint cannot meet 13.6 radial and 7.3 axial at once.
    CHECK(rep.radial_slope_model == doctest::Approx((13.6e3 + 2 * 7.3e3) / 5).epsilon(1e-12));
    CHECK(std::abs(rep.radial_slope_residual) > 1e3);
    CHECK(std::abs(rep.axial_slope_residual) > 1e3);
    CHECK(rep.slope_residual_rms > 0);

    CHECK(rep.poly_linear_refit == doctest::Approx(-0.1e-6).epsilon(1e-6));
    CHECK(rep.poly_quadratic_refit == doctest::Approx(6.1e-11).epsilon(1e-6));

    auto scan = minimum_vs_amplitude_scan(cal.model, main_drive(200), Electrode::radial_y,
                                          CalibrationTargets::reference().amplitude_grid);
    CHECK(scan.axis == 1);
    CHECK(scan.fit.value("c2") == doctest::Approx(6.1e-5).epsilon(1e-6));
    CHECK(scan.fit.value("c1") == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(std::abs(scan.table.column("y_um").values.back()) > 15);

    CHECK(rep.q_axial_at_ref > 0.3);
    CHECK(rep.q_axial_at_ref < 0.33);
}

TEST_CASE("calibration rejects missing targets")
{
    CalibrationTargets empty;
    CHECK_THROWS_WITH_AS(calibrate_model(empty),
                         doctest::Contains("insufficient calibration targets"),
                         CalibrationError);
    auto t = CalibrationTargets::reference();
    t.axial_shift.reset();
    CHECK_THROWS_WITH(calibrate_model(t), doctest::Contains("axial_shift"));
}

TEST_CASE("single-point scan is rejected by the fit")
{
    CHECK_THROWS_AS(minimum_vs_amplitude_scan(calibrated().model, main_drive(200),
                                              Electrode::radial_y, {0.0}),
                    fit::FitError);
}

TEST_CASE("amplifier gain closes the displacement slope")
{
    auto const& cal = calibrated();
    auto const grid = CalibrationTargets::reference().vpp_grid;
    double const slope = displacement_slope(cal.model, main_drive(200), grid);
    CHECK(std::abs(slope) == doctest::Approx(17.3).epsilon(1e-9));

    // Doubling the gain: compare with a line fitted to the rational curve.
    auto doubled = cal.model;
    doubled.amplifier_gain *= 2;
    std::vector<double> ys;
    for (double v : grid)
        ys.push_back(rational_null(2 * cal.model.amplifier_gain * v) * 1e6);
    double const expected = fit::fit_polynomial(grid, ys, 1, false).value("c1");
    double const got = displacement_slope(doubled, main_drive(200), grid);
    CHECK(got == doctest::Approx(expected).epsilon(1e-9));
    CHECK(got / slope == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("pseudopotential properties")
{
    auto const& model = calibrated().model;
    auto drive = main_drive(200);
    drive[Electrode::radial_y].amplitude = 80;
    drive.set_differential_axial(0.4, 0);
    Vec3 const r(4e-6, -6e-6, 2e-6);

    auto scaled = drive;
    for (auto& s : scaled.sources)
        s.amplitude *= 1.7;
    CHECK(pseudopotential(model, scaled, r)
          == doctest::Approx(1.7 * 1.7 * pseudopotential(model, drive, r)).epsilon(1e-12));

    Vec3 const null = find_rf_null(model, drive);
    auto shifted = drive;
    for (auto& s : shifted.sources)
        s.phase += 0.73;
    CHECK((find_rf_null(model, shifted) - null).norm() < 1e-15);

    Mat3 const h = pseudopotential_hessian(model, drive);
    CHECK((h - h.transpose()).norm() == 0);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(h);
    CHECK(eig.eigenvalues().minCoeff() > 0);
    CHECK((eig.eigenvectors().transpose() * eig.eigenvectors() - Mat3::Identity()).norm() < 1e-12);

    // Independent minimizer: steepest descent on the pseudopotential with
    // finite-difference gradients and exact line search along each step.
    auto psi = [&](Vec3 const& p) { return pseudopotential(model, drive, p); };
    Vec3 p(10e-6, 10e-6, -10e-6);
    double const h_fd = 1e-9;
    for (int it = 0; it < 2000; ++it)
    {
        Vec3 g;
        for (int k = 0; k < 3; ++k)
        {
            Vec3 dp = Vec3::Zero();
            dp[k] = h_fd;
            g[k] = (psi(p + dp) - psi(p - dp)) / (2 * h_fd);
        }
        if (g.norm() == 0)
            break;
        // Quadratic in the step length: fit a parabola along -g.
        Vec3 const dir = -g.normalized();
        double const s = 1e-6;
        double const f0 = psi(p);
        double const fp = psi(p + s * dir);
        double const fm = psi(p - s * dir);
        double const curv = (fp - 2 * f0 + fm) / (s * s);
        double const slope = (fp - fm) / (2 * s);
        if (!(curv > 0))
            break;
        p += (-slope / curv) * dir;
    }
    CHECK((p - null).norm() < 1e-9);
}

TEST_CASE("model JSON round trip is exact")
{
    auto const& cal = calibrated();
    std::string const text = model_to_json(cal.model, &cal.report);
    TrapModel back = model_from_json(text);
    for (auto e : all_electrodes())
    {
        CHECK(back[e].b == cal.model[e].b);
        CHECK(back[e].Q == cal.model[e].Q);
    }
    CHECK(back.amplifier_gain == cal.model.amplifier_gain);
    CHECK(back.ion.mass == cal.model.ion.mass);
    CHECK_THROWS_AS(model_from_json("{\"format\": \"other\"}"), ModelError);
    CHECK_THROWS_AS(model_from_json("not json"), ModelError);
}

TEST_CASE("inner quadrupole ratio default agrees with the solved stack")
{
    field::TrapGeometry geo;
    auto basis = field::solve_stack_basis(geo, 10e-6, 1e-9, 40e-6);
    double const ratio = basis.entries.at("inner_upper").Q(2, 2)
                         / basis.entries.at("outer_pair").Q(2, 2);
    CHECK(ratio == doctest::Approx(CalibrationTargets{}.inner_quadrupole_ratio).epsilon(0.05));
}
