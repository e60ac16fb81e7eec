#include <cmath>
#include <ostream>

#include <boost/random/normal_distribution.hpp>
#include <fmt/format.h>

#include "fibretrap/dynamics.hpp"
#include "fibretrap/rng.hpp"

namespace fibretrap::dyn {

namespace {

using trap::Mat3;

constexpr double boltzmann = 1.380649e-23;

// Acceleration as a closure over the precomputed real field pieces.
struct ForceField
{
    Mat3 rf_cos;  // Re gradient
    Mat3 rf_sin;  // Im gradient
    Vec3 off_cos;
    Vec3 off_sin;
    Mat3 dc_grad;
    Vec3 dc_off;
    double q_over_m;
    double omega;
    double damping;

    Vec3 operator()(Vec3 const& r, Vec3 const& v, double t) const
    {
        double const c = std::cos(omega * t);
        double const s = std::sin(omega * t);
        Vec3 const grad = (off_cos + rf_cos * r) * c - (off_sin + rf_sin * r) * s + dc_off
                          + dc_grad * r;
        return -q_over_m * grad - damping * v;
    }
};

}  // namespace

void Trajectory::validate() const
{
    if (!(dt > 0))
        throw DynamicsError("trajectory step must be positive");
    if (positions.size() != velocities.size() || positions.size() < 2)
        throw DynamicsError("trajectory needs at least two samples of position and velocity");
}

void Trajectory::write_csv(std::ostream& os) const
{
    os << "t_s,x_m,y_m,z_m,vx_m_per_s,vy_m_per_s,vz_m_per_s\n";
    for (std::size_t i = 0; i < size(); ++i)
    {
        auto const& r = positions[i];
        auto const& v = velocities[i];
        os << fmt::format("{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g}\n", time(i),
                          r.x(), r.y(), r.z(), v.x(), v.y(), v.z());
    }
}

double default_dt(DriveConfig const& drive)
{
    return 2 * std::numbers::pi / drive.omega_rf / 200;
}

Trajectory integrate_trajectory(TrapModel const& model,
                                DriveConfig const& drive,
                                double damping,
                                Vec3 const& r0,
                                Vec3 const& v0,
                                double duration,
                                double dt,
                                std::optional<ThermalKicks> kicks)
{
    model.validate();
    drive.validate();
    double const period = 2 * std::numbers::pi / drive.omega_rf;
    if (dt == 0)
        dt = default_dt(drive);
    if (!(dt > 0) || dt > period / 100 * (1 + 1e-12))
        throw DynamicsError(fmt::format("step {:.3g} s exceeds one hundredth of the RF period", dt));
    if (!(duration >= 50 * period * (1 - 1e-12)))
        throw DynamicsError("duration must cover at least 50 RF periods");
    if (!(damping >= 0) || !std::isfinite(damping))
        throw DynamicsError("damping rate must be non-negative");
    if (!r0.allFinite() || !v0.allFinite())
        throw DynamicsError("initial state must be finite");
    trap::check_validity(model, r0);

    auto const lf = trap::linear_field(model, drive);
    ForceField const acc{lf.rf_gradient.real(), lf.rf_gradient.imag(), lf.rf_offset.real(),
                         lf.rf_offset.imag(),   lf.dc_gradient,        lf.dc_offset,
                         model.ion.charge / model.ion.mass, drive.omega_rf, damping};

    double kick_sigma = 0;
    Rng rng;
    boost::random::normal_distribution<double> normal;
    if (kicks)
    {
        if (!(kicks->temperature >= 0))
            throw DynamicsError("kick temperature must be non-negative");
        kick_sigma = std::sqrt(2 * damping * boltzmann * kicks->temperature * dt / model.ion.mass);
        rng = stream_rng(kicks->seed, 0, 0x6b69636b);
    }

    auto const steps = static_cast<std::size_t>(std::llround(duration / dt));
    Trajectory traj;
    traj.dt = dt;
    traj.positions.reserve(steps + 1);
    traj.velocities.reserve(steps + 1);
    Vec3 r = r0;
    Vec3 v = v0;
    traj.positions.push_back(r);
    traj.velocities.push_back(v);
    double const rmax = model.validity_radius;
    for (std::size_t i = 0; i < steps; ++i)
    {
        double const t = dt * static_cast<double>(i);
        Vec3 const k1v = acc(r, v, t);
        Vec3 const k1r = v;
        Vec3 const k2v = acc(r + 0.5 * dt * k1r, v + 0.5 * dt * k1v, t + 0.5 * dt);
        Vec3 const k2r = v + 0.5 * dt * k1v;
        Vec3 const k3v = acc(r + 0.5 * dt * k2r, v + 0.5 * dt * k2v, t + 0.5 * dt);
        Vec3 const k3r = v + 0.5 * dt * k2v;
        Vec3 const k4v = acc(r + dt * k3r, v + dt * k3v, t + dt);
        Vec3 const k4r = v + dt * k3v;
        r += dt / 6 * (k1r + 2 * k2r + 2 * k3r + k4r);
        v += dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
        if (kick_sigma > 0)
        {
            for (int k = 0; k < 3; ++k)
                v[k] += kick_sigma * normal(rng);
        }
        if (!(r.norm() <= rmax))
        {
            double const te = t + dt;
            throw InstabilityError(
                fmt::format("ion left the {:.0f} um validity ball at t = {:.6g} s", rmax * 1e6, te),
                te);
        }
        traj.positions.push_back(r);
        traj.velocities.push_back(v);
    }
    return traj;
}

}  // namespace fibretrap::dyn
