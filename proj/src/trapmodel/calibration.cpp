#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>

#include "fibretrap/trapmodel.hpp"

namespace fibretrap::trap {

namespace {

std::vector<double> linspace(double a, double b, int n)
{
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i)
        v[i] = a + (b - a) * i / (n - 1);
    return v;
}

void require_targets(CalibrationTargets const& t)
{
    std::vector<std::string> missing;
    if (!t.radial_slope && !t.axial_slope)
        missing.emplace_back("radial_slope or axial_slope");
    if (!t.poly_linear)
        missing.emplace_back("poly_linear");
    if (!t.poly_quadratic)
        missing.emplace_back("poly_quadratic");
    if (!t.axial_shift)
        missing.emplace_back("axial_shift");
    if (!t.displacement_slope)
        missing.emplace_back("displacement_slope");
    if (!missing.empty())
    {
        std::string list;
        for (auto const& m : missing)
            list += (list.empty() ? "" : ", ") + m;
        throw CalibrationError("insufficient calibration targets: missing " + list);
    }
    auto distinct_nonzero = [](std::vector<double> const& g) {
        std::vector<double> v;
        for (double x : g)
        {
            if (x != 0 && std::find(v.begin(), v.end(), x) == v.end())
                v.push_back(x);
        }
        return v.size();
    };
    if (distinct_nonzero(t.amplitude_grid) < 3)
        throw CalibrationError("amplitude grid needs at least three distinct non-zero values");
    if (distinct_nonzero(t.vpp_grid) < 2)
        throw CalibrationError("Vpp grid needs at least two distinct non-zero values");
    if (!(t.v_main_ref > 0))
        throw CalibrationError("reference main amplitude must be positive");
    if ((t.radial_slope && !(*t.radial_slope > 0)) || (t.axial_slope && !(*t.axial_slope > 0)))
        throw CalibrationError("secular slopes must be positive");
    if (!(*t.displacement_slope > 0))
        throw CalibrationError("displacement slope target must be positive");
}

/*!
 * Radial electrode on the y side with dipole beta*V_ref*a along y and
 * quadrupole (gamma*V_ref*a/2) diag(-1, 2, -1). At V_main = V_ref its null
 * sits at y = -beta V / (1 + gamma V).
 */
field::MultipoleEntry radial_entry(double beta, double gamma, double v_ref, double a, int axis)
{
    field::MultipoleEntry e;
    e.b[axis] = beta * v_ref * a;
    Vec3 diag = Vec3::Constant(-1);
    diag[axis] = 2;
    e.Q = (gamma * v_ref * a / 2) * diag.asDiagonal();
    return e;
}

struct RadialSolution
{
    double beta = 0;
    double gamma = 0;
    int iterations = 0;
};

/*!
 * Choose (beta, gamma) so that the least-squares quadratic through the
 * origin, fitted to the rational null curve on the grid, returns exactly the
 * target coefficients. Newton in two unknowns with analytic derivatives.
 */
RadialSolution solve_radial(std::vector<double> const& grid, double c1, double c2)
{
    auto const n = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd x(n, 2);
    for (Eigen::Index k = 0; k < n; ++k)
    {
        x(k, 0) = grid[k];
        x(k, 1) = grid[k] * grid[k];
    }
    Eigen::MatrixXd const proj = (x.transpose() * x).ldlt().solve(x.transpose());
    Eigen::Vector2d const target(c1, c2);
    Eigen::Vector2d const scale(std::abs(c1), std::abs(c2));

    RadialSolution s;
    s.beta = -c1;
    s.gamma = -c2 / c1;
    for (s.iterations = 1; s.iterations <= 50; ++s.iterations)
    {
        Eigen::VectorXd y(n);
        Eigen::MatrixXd dy(n, 2);
        for (Eigen::Index k = 0; k < n; ++k)
        {
            double const v = grid[k];
            double const den = 1 + s.gamma * v;
            if (!(den > 0))
                throw CalibrationError("radial calibration drove the null through a pole");
            y[k] = -s.beta * v / den;
            dy(k, 0) = -v / den;
            dy(k, 1) = s.beta * v * v / (den * den);
        }
        Eigen::Vector2d const f = proj * y - target;
        if ((f.cwiseQuotient(scale)).cwiseAbs().maxCoeff() < 1e-14)
            return s;
        Eigen::Matrix2d const jac = proj * dy;
        Eigen::Vector2d const step = jac.fullPivLu().solve(-f);
        s.beta += step[0];
        s.gamma += step[1];
    }
    throw CalibrationError("radial calibration did not converge");
}

}  // namespace

CalibrationTargets CalibrationTargets::reference()
{
    CalibrationTargets t;
    t.radial_slope = 13.6e3;
    t.axial_slope = 7.3e3;
    t.poly_linear = -0.1e-6;
    t.poly_quadratic = 6.1e-5 * 1e-6;
    t.axial_shift = 2.0e-6;
    t.displacement_slope = 17.3e-6;
    t.amplitude_grid = linspace(0, 200, 21);
    t.vpp_grid = linspace(0, 0.5, 11);
    return t;
}

/*!
 * The outer pair is a pure quadrupole a diag(1, 1, -2), so its axial
 * secular frequency is exactly twice the radial one. Both slope targets are
 * matched in least squares through the radial slope k: minimizing
 * (k - s_r)^2 + (2k - s_z)^2 gives k = (s_r + 2 s_z)/5.
 */
Calibration calibrate_model(CalibrationTargets const& t)
{
    require_targets(t);
    t.ion.validate();
    double const m = t.ion.mass;
    double const q = t.ion.charge;
    double const w = t.omega_rf;

    Calibration out;
    auto& rep = out.report;
    double k = 0;
    if (t.radial_slope && t.axial_slope)
        k = (*t.radial_slope + 2 * *t.axial_slope) / 5;
    else if (t.radial_slope)
        k = *t.radial_slope;
    else
        k = *t.axial_slope / 2;
    // omega_r per volt = q a / (sqrt(2) m W).
    double const a = 2 * std::numbers::pi * k * std::sqrt(2.0) * m * w / q;
    rep.quadrupole_a = a;
    rep.radial_slope_model = k;
    rep.axial_slope_model = 2 * k;
    double ss = 0;
    int terms = 0;
    if (t.radial_slope)
    {
        rep.radial_slope_residual = k - *t.radial_slope;
        ss += rep.radial_slope_residual * rep.radial_slope_residual;
        ++terms;
    }
    if (t.axial_slope)
    {
        rep.axial_slope_residual = 2 * k - *t.axial_slope;
        ss += rep.axial_slope_residual * rep.axial_slope_residual;
        ++terms;
    }
    rep.slope_residual_rms = std::sqrt(ss / terms);

    TrapModel& model = out.model;
    model.ion = t.ion;
    model.validity_radius = t.validity_radius;
    model[Electrode::outer_pair].Q = Vec3(a, a, -2 * a).asDiagonal();

    auto const radial = solve_radial(t.amplitude_grid, *t.poly_linear, *t.poly_quadratic);
    rep.radial_beta = radial.beta;
    rep.radial_gamma = radial.gamma;
    rep.radial_newton_iterations = radial.iterations;
    double const vr = t.v_main_ref;
    model[Electrode::radial_x] = radial_entry(radial.beta, radial.gamma, vr, a, 0);
    model[Electrode::radial_y] = radial_entry(radial.beta, radial.gamma, vr, a, 1);
    model[Electrode::comp_x] = model[Electrode::radial_x];
    model[Electrode::comp_x].b *= -1;
    model[Electrode::comp_y] = model[Electrode::radial_y];
    model[Electrode::comp_y].b *= -1;

    // Differential drive Vz moves the null by Vz d / (2 a V_main).
    double const d = 2 * vr * a * *t.axial_shift;
    rep.inner_dipole = d;
    Mat3 const q_inner = t.inner_quadrupole_ratio * model[Electrode::outer_pair].Q;
    model[Electrode::inner_upper].b = Vec3(0, 0, d);
    model[Electrode::inner_upper].Q = q_inner;
    model[Electrode::inner_lower].b = Vec3(0, 0, -d);
    model[Electrode::inner_lower].Q = q_inner;
    model.validate();

    DriveConfig const ref = main_drive(vr, w);
    auto const scan = minimum_vs_amplitude_scan(model, ref, Electrode::radial_y, t.amplitude_grid);
    rep.poly_linear_refit = scan.fit.value("c1") * 1e-6;
    rep.poly_quadratic_refit = scan.fit.value("c2") * 1e-6;

    // Amplifier gain: |linear slope| of the null over the Vpp grid equals
    // the target.
    double const target_um = *t.displacement_slope * 1e6;
    auto mismatch = [&](double gain) {
        TrapModel trial = model;
        trial.amplifier_gain = gain;
        return std::abs(displacement_slope(trial, ref, t.vpp_grid)) - target_um;
    };
    double const g0 = target_um / std::abs(*t.poly_linear * 1e6);
    double lo = 0.5 * g0;
    double hi = 2 * g0;
    while (mismatch(lo) > 0 && lo > 1e-6 * g0)
        lo /= 2;
    while (mismatch(hi) < 0 && hi < 1e3 * g0)
        hi *= 1.5;
    boost::math::tools::eps_tolerance<double> tol(50);
    std::uintmax_t iters = 100;
    auto const bracket = boost::math::tools::toms748_solve(mismatch, lo, hi, tol, iters);
    model.amplifier_gain = 0.5 * (bracket.first + bracket.second);
    rep.amplifier_gain = model.amplifier_gain;
    rep.displacement_slope_model = displacement_slope(model, ref, t.vpp_grid) * 1e-6;

    // q_z = 2 q |d^2 Phi/dz^2| / (m W^2) with |Phi_zz| = 2 a V.
    rep.q_axial_at_ref = 2 * q * (2 * a * vr) / (m * w * w);
    return out;
}

}  // namespace fibretrap::trap
