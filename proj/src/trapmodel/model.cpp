#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "fibretrap/trapmodel.hpp"

namespace fibretrap::trap {

namespace {

constexpr std::array<char const*, electrode_count> labels = {
    "outer_pair", "inner_upper", "inner_lower", "radial_x", "radial_y", "comp_x", "comp_y",
};

bool signed_allowed(Electrode e)
{
    return e == Electrode::inner_upper || e == Electrode::inner_lower;
}

}  // namespace

std::string label(Electrode e)
{
    return labels[static_cast<std::size_t>(e)];
}

Electrode parse_electrode(std::string const& name)
{
    for (std::size_t k = 0; k < electrode_count; ++k)
    {
        if (name == labels[k])
            return static_cast<Electrode>(k);
    }
    throw ModelError("unknown electrode label '" + name + "'");
}

std::array<Electrode, electrode_count> all_electrodes()
{
    std::array<Electrode, electrode_count> out{};
    for (std::size_t k = 0; k < electrode_count; ++k)
        out[k] = static_cast<Electrode>(k);
    return out;
}

void IonSpecies::validate() const
{
    if (!(mass > 0) || !(charge > 0) || !std::isfinite(mass) || !std::isfinite(charge))
        throw ModelError("ion mass and charge must be positive");
}

//---------------------------------------------------------------------------//
void DriveConfig::set_differential_axial(double vz, double phase)
{
    (*this)[Electrode::inner_upper].amplitude = vz / 2;
    (*this)[Electrode::inner_upper].phase = phase;
    (*this)[Electrode::inner_lower].amplitude = -vz / 2;
    (*this)[Electrode::inner_lower].phase = phase;
}

void DriveConfig::validate() const
{
    if (!(omega_rf > 0) || !std::isfinite(omega_rf))
        throw ModelError("drive frequency must be positive");
    for (auto e : all_electrodes())
    {
        auto const& s = (*this)[e];
        if (!std::isfinite(s.amplitude) || !std::isfinite(s.phase) || !std::isfinite(s.dc))
            throw ModelError("non-finite drive setting on " + label(e));
        if (s.amplitude < 0 && !signed_allowed(e))
            throw ModelError("negative RF amplitude on " + label(e)
                             + " (signed amplitudes are reserved for the inner electrodes)");
    }
}

double DriveConfig::reference_phase() const
{
    if ((*this)[Electrode::outer_pair].amplitude != 0)
        return (*this)[Electrode::outer_pair].phase;
    double best = 0;
    double phase = 0;
    for (auto const& s : sources)
    {
        if (std::abs(s.amplitude) > best)
        {
            best = std::abs(s.amplitude);
            phase = s.phase;
        }
    }
    return phase;
}

double DriveConfig::quadrature_fraction() const
{
    double const ref = reference_phase();
    double biggest = 0;
    double worst = 0;
    for (auto const& s : sources)
    {
        biggest = std::max(biggest, std::abs(s.amplitude));
        worst = std::max(worst, std::abs(s.amplitude * std::sin(s.phase - ref)));
    }
    return biggest > 0 ? worst / biggest : 0;
}

DriveConfig main_drive(double v_main, double omega_rf)
{
    DriveConfig d;
    d.omega_rf = omega_rf;
    d[Electrode::outer_pair].amplitude = v_main;
    return d;
}

//---------------------------------------------------------------------------//
void TrapModel::validate() const
{
    ion.validate();
    if (!(validity_radius > 0))
        throw ModelError("validity radius must be positive");
    for (auto e : all_electrodes())
    {
        auto const& m = (*this)[e];
        double const scale = std::max(m.Q.norm(), 1e-300);
        if ((m.Q - m.Q.transpose()).norm() > 1e-12 * scale)
            throw ModelError("quadrupole of " + label(e) + " is not symmetric");
        if (std::abs(m.Q.trace()) > 1e-9 * scale)
            throw ModelError("quadrupole of " + label(e) + " is not traceless");
    }
    if ((*this)[Electrode::outer_pair].b.norm() != 0)
        throw ModelError("outer_pair must carry no dipole");
}

LinearField linear_field(TrapModel const& model, DriveConfig const& drive)
{
    LinearField f;
    for (auto e : all_electrodes())
    {
        auto const& s = drive[e];
        auto const& m = model[e];
        if (s.amplitude != 0)
        {
            std::complex<double> const p = std::polar(1.0, s.phase) * s.amplitude;
            f.rf_offset += p * m.b.cast<std::complex<double>>();
            f.rf_gradient += p * m.Q.cast<std::complex<double>>();
        }
        if (s.dc != 0)
        {
            f.dc_offset += s.dc * m.b;
            f.dc_gradient += s.dc * m.Q;
        }
    }
    return f;
}

void check_validity(TrapModel const& model, Vec3 const& r)
{
    if (!(r.norm() <= model.validity_radius))
    {
        throw ValidityError(fmt::format(
            "position ({:.3g}, {:.3g}, {:.3g}) um lies outside the {:.0f} um validity ball",
            r.x() * 1e6, r.y() * 1e6, r.z() * 1e6, model.validity_radius * 1e6));
    }
}

CVec3 rf_phasor_field(TrapModel const& model, DriveConfig const& drive, Vec3 const& r)
{
    check_validity(model, r);
    LinearField const f = linear_field(model, drive);
    return -(f.rf_offset + f.rf_gradient * r.cast<std::complex<double>>());
}

Vec3 dc_field(TrapModel const& model, DriveConfig const& drive, Vec3 const& r)
{
    check_validity(model, r);
    LinearField const f = linear_field(model, drive);
    return -(f.dc_offset + f.dc_gradient * r);
}

double pseudopotential(TrapModel const& model, DriveConfig const& drive, Vec3 const& r)
{
    CVec3 const e = rf_phasor_field(model, drive, r);
    double const q = model.ion.charge;
    double const w = drive.omega_rf;
    // Energy q^2 |E|^2 / (4 m W^2), divided by q for eV.
    return q * e.squaredNorm() / (4 * model.ion.mass * w * w);
}

Mat3 pseudopotential_hessian(TrapModel const& model, DriveConfig const& drive)
{
    CMat3 const a = linear_field(model, drive).rf_gradient;
    double const q = model.ion.charge;
    double const w = drive.omega_rf;
    Mat3 const h = (a.adjoint() * a).real();
    return q * q / (2 * model.ion.mass * w * w) * 0.5 * (h + h.transpose());
}

Vec3 find_rf_null(TrapModel const& model, DriveConfig const& drive, Vec3 const& guess)
{
    drive.validate();
    if (drive.quadrature_fraction() > 1e-9)
    {
        throw PhaseMismatchError(
            "sources are not in phase, so the RF field has no null; integrate the "
            "motion with the dynamics module instead");
    }
    check_validity(model, guess);
    LinearField const f = linear_field(model, drive);
    std::complex<double> const unrotate = std::polar(1.0, -drive.reference_phase());
    Mat3 const a = (unrotate * f.rf_gradient).real();
    Vec3 const b = (unrotate * f.rf_offset).real();

    Eigen::FullPivLU<Mat3> lu(a);
    if (lu.rank() < 3)
        throw ModelError("RF gradient is singular; the drive does not confine in 3D");

    Vec3 r = guess;
    for (int it = 0; it < 20; ++it)
    {
        Vec3 const e = b + a * r;
        if (e.norm() < 1e-6)
            break;
        r -= lu.solve(e);
        if (!r.allFinite() || r.norm() > model.validity_radius)
        {
            throw ModelError(fmt::format(
                "null search left the validity ball at ({:.4g}, {:.4g}, {:.4g}) um",
                r.x() * 1e6, r.y() * 1e6, r.z() * 1e6));
        }
    }
    double const residual = rf_phasor_field(model, drive, r).norm();
    if (!(residual < 1e-6))
        throw ModelError(fmt::format("null search stalled with |E| = {:.3g} V/m", residual));
    return r;
}

double SecularResult::radial_hz() const
{
    double s = 0;
    for (int k = 0; k < 3; ++k)
    {
        if (k != axial_index)
            s += frequencies_hz[k];
    }
    return s / 2;
}

/*!
 * Frequencies come from the pseudopotential curvature alone; dc offsets only
 * shift the null in this model.
 */
SecularResult secular_frequencies(TrapModel const& model, DriveConfig const& drive)
{
    SecularResult out;
    out.null = find_rf_null(model, drive);
    Mat3 const h = pseudopotential_hessian(model, drive);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(h);
    auto const& lam = eig.eigenvalues();
    if (!(lam.minCoeff() > 1e-12 * lam.cwiseAbs().maxCoeff()))
        throw UnstableError("unstable configuration: pseudopotential Hessian is not positive definite");
    out.axes = eig.eigenvectors();
    double best = -1;
    for (int k = 0; k < 3; ++k)
    {
        out.frequencies_hz[k] = std::sqrt(lam[k] / model.ion.mass) / (2 * std::numbers::pi);
        if (std::abs(out.axes(2, k)) > best)
        {
            best = std::abs(out.axes(2, k));
            out.axial_index = k;
        }
    }
    return out;
}

//---------------------------------------------------------------------------//
MinimumScan minimum_vs_amplitude_scan(TrapModel const& model,
                                      DriveConfig const& drive,
                                      Electrode electrode,
                                      std::vector<double> const& amplitudes)
{
    if (amplitudes.empty())
        throw ModelError("minimum scan needs at least one amplitude");
    MinimumScan scan;
    auto& amp = scan.table.add("amplitude_V", ScanTable::Role::independent).values;
    std::array<std::vector<double>, 3> coords;
    double const phase = drive[electrode].amplitude != 0 ? drive[electrode].phase
                                                         : drive.reference_phase();
    for (double v : amplitudes)
    {
        DriveConfig d = drive;
        d[electrode].amplitude = v;
        d[electrode].phase = phase;
        Vec3 const r = find_rf_null(model, d);
        amp.push_back(v);
        for (int k = 0; k < 3; ++k)
            coords[k].push_back(r[k] * 1e6);
    }
    char const* names[] = {"x_um", "y_um", "z_um"};
    double moved = -1;
    for (int k = 0; k < 3; ++k)
    {
        double far = 0;
        for (double c : coords[k])
            far = std::max(far, std::abs(c));
        if (far > moved)
        {
            moved = far;
            scan.axis = k;
        }
        scan.table.add(names[k], ScanTable::Role::dependent, coords[k]);
    }
    scan.fit = fit::fit_polynomial(scan.table.column("amplitude_V").values,
                                   coords[scan.axis], 2, true);
    return scan;
}

double displacement_slope(TrapModel const& model,
                          DriveConfig const& drive,
                          std::vector<double> const& vpp_grid)
{
    std::vector<double> ys;
    double const phase = drive.reference_phase();
    for (double vpp : vpp_grid)
    {
        DriveConfig d = drive;
        d[Electrode::radial_y].amplitude = model.amplifier_gain * vpp;
        d[Electrode::radial_y].phase = phase;
        ys.push_back(find_rf_null(model, d).y() * 1e6);
    }
    return fit::fit_polynomial(vpp_grid, ys, 1, false).value("c1");
}

}  // namespace fibretrap::trap
