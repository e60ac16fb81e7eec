#include <cmath>
#include <complex>

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include "fibretrap/dynamics.hpp"

namespace fibretrap::dyn {

using trap::Mat3;

std::array<AxisPhasor, 3> micromotion_phasor(Trajectory const& traj, double omega)
{
    traj.validate();
    if (!(omega > 0))
        throw DynamicsError("projection frequency must be positive");
    double const period = 2 * std::numbers::pi / omega;
    auto const n = traj.size();
    auto const first = static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(n)));
    double const span = traj.dt * static_cast<double>(n - 1 - first);
    auto const periods = static_cast<long>(std::floor(span / period * (1 + 1e-12)));
    if (periods < 20)
    {
        throw DynamicsError(fmt::format(
            "trajectory too short: {} whole periods after the transient, need 20", periods));
    }
    auto const count = static_cast<std::size_t>(
                           std::llround(static_cast<double>(periods) * period / traj.dt));
    // Half-open window [first, first + count) spans the whole periods.
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d atb = Eigen::Matrix3d::Zero();  // column per axis
    for (std::size_t i = first; i < first + count && i < n; ++i)
    {
        double const t = traj.time(i);
        Eigen::Vector3d const basis(std::cos(omega * t), std::sin(omega * t), 1.0);
        ata += basis * basis.transpose();
        atb += basis * traj.positions[i].transpose();
    }
    Eigen::Matrix3d const coef = ata.ldlt().solve(atb);
    std::array<AxisPhasor, 3> out;
    for (int k = 0; k < 3; ++k)
    {
        double const c = coef(0, k);
        double const s = coef(1, k);
        out[k].amplitude = std::hypot(c, s);
        out[k].phase = std::atan2(-s, c);
    }
    return out;
}

void MismatchParams::validate() const
{
    if (!(q > 0 && q < 0.9))
        throw DynamicsError(fmt::format("q = {:.3g} outside (0, 0.9)", q));
    if (!(R > 0) || !(omega > 0))
        throw DynamicsError("R and omega must be positive");
    if (!std::isfinite(alpha) || !std::isfinite(delta))
        throw DynamicsError("alpha and delta must be finite");
}

double mismatch_micromotion_prediction(MismatchParams const& p)
{
    p.validate();
    return 0.25 * p.q * p.R * p.alpha * std::abs(p.delta);
}

StabilityParameters stability_parameters(TrapModel const& model, DriveConfig const& drive)
{
    trap::find_rf_null(model, drive);
    auto const lf = trap::linear_field(model, drive);
    std::complex<double> const unrotate = std::polar(1.0, -drive.reference_phase());
    Mat3 const rf = (unrotate * lf.rf_gradient).real();
    double const m = model.ion.mass;
    double const qe = model.ion.charge;
    double const w2 = drive.omega_rf * drive.omega_rf;
    StabilityParameters out;
    for (int k = 0; k < 3; ++k)
    {
        out.a[k] = 4 * qe * lf.dc_gradient(k, k) / (m * w2);
        out.q[k] = 2 * qe * rf(k, k) / (m * w2);
    }
    return out;
}

MismatchParams mismatch_params(TrapModel const& model,
                               DriveConfig const& drive,
                               std::vector<Electrode> const& sources,
                               int axis,
                               double R,
                               double delta)
{
    if (axis < 0 || axis > 2)
        throw DynamicsError("axis must be 0, 1 or 2");
    Vec3 const null = trap::find_rf_null(model, drive);
    auto const lf = trap::linear_field(model, drive);
    std::complex<double> const unrotate = std::polar(1.0, -drive.reference_phase());
    double const curvature = std::abs((unrotate * lf.rf_gradient).real()(axis, axis));
    Vec3 g = Vec3::Zero();
    for (auto e : sources)
        g += drive[e].amplitude * (model[e].b + model[e].Q * null);
    auto const sp = stability_parameters(model, drive);
    MismatchParams p;
    p.q = std::abs(sp.q[axis]);
    p.R = R;
    p.alpha = 2 * std::abs(g[axis]) / (curvature * R);
    p.delta = delta;
    p.omega = drive.omega_rf;
    return p;
}

double secular_peak_hz(Trajectory const& traj, int axis, double omega_rf, double f_lo, double f_hi)
{
    traj.validate();
    double const period = 2 * std::numbers::pi / omega_rf;
    auto const per = static_cast<std::size_t>(std::llround(period / traj.dt));
    if (per < 1 || std::abs(static_cast<double>(per) * traj.dt - period) > 1e-9 * period)
        throw DynamicsError("trajectory step must divide the RF period");
    std::size_t const blocks = (traj.size() - 1) / per;
    if (blocks < 64)
        throw DynamicsError("trajectory too short for a spectral estimate");

    std::vector<double> series(blocks);
    double mean = 0;
    for (std::size_t b = 0; b < blocks; ++b)
    {
        double s = 0;
        for (std::size_t i = 0; i < per; ++i)
            s += traj.positions[b * per + i][axis];
        series[b] = s / static_cast<double>(per);
        mean += series[b];
    }
    mean /= static_cast<double>(blocks);
    std::size_t nfft = 1;
    while (nfft < 8 * blocks)
        nfft <<= 1;
    std::vector<double> buf(nfft, 0.0);
    for (std::size_t b = 0; b < blocks; ++b)
    {
        double const w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(b) / static_cast<double>(blocks - 1));
        buf[b] = w * (series[b] - mean);
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, buf);
    double const df = 1.0 / (static_cast<double>(nfft) * period);
    auto const lo = static_cast<std::size_t>(std::max(1.0, std::ceil(f_lo / df)));
    auto const hi = std::min(nfft / 2 - 1, static_cast<std::size_t>(std::floor(f_hi / df)));
    if (lo + 2 > hi)
        throw DynamicsError("frequency window is empty at this resolution");
    std::size_t best = lo;
    for (std::size_t k = lo; k <= hi; ++k)
    {
        if (std::norm(spec[k]) > std::norm(spec[best]))
            best = k;
    }
    double shift = 0;
    if (best > lo && best < hi)
    {
        double const a = std::log(std::norm(spec[best - 1]));
        double const b = std::log(std::norm(spec[best]));
        double const c = std::log(std::norm(spec[best + 1]));
        double const den = a - 2 * b + c;
        if (den < 0)
            shift = 0.5 * (a - c) / den;
    }
    return (static_cast<double>(best) + shift) * df;
}

}  // namespace fibretrap::dyn
