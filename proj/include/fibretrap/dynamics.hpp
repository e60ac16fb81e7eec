#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "fibretrap/trapmodel.hpp"

namespace fibretrap::dyn {

using trap::DriveConfig;
using trap::Electrode;
using trap::TrapModel;
using trap::Vec3;

class DynamicsError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

//! The ion left the validity ball; carries the escape time.
class InstabilityError : public DynamicsError
{
  public:
    InstabilityError(std::string const& what, double t) : DynamicsError(what), escape_time(t) {}
    double escape_time;
};

struct Trajectory
{
    double t0 = 0;
    double dt = 0;
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;

    std::size_t size() const { return positions.size(); }
    double time(std::size_t i) const { return t0 + dt * static_cast<double>(i); }
    void validate() const;
    // Columns t_s, x_m, y_m, z_m, vx_m_per_s, vy_m_per_s, vz_m_per_s.
    void write_csv(std::ostream& os) const;
};

//! Seeded white-noise velocity kicks at the equilibrium of the damping.
struct ThermalKicks
{
    double temperature = 0;  //!< K
    std::uint64_t seed = 0;
};

inline constexpr double default_damping = 2 * std::numbers::pi * 5e3;

// Default step: one two-hundredth of an RF period.
double default_dt(DriveConfig const& drive);

/*!
 * Classical fourth-order Runge-Kutta on
 *   m r'' = -q grad Phi(r, t) - m damping r'
 * with Phi = sum_i [V_i cos(W t + phi_i) + U_i] beta_i(r). Kicks, when
 * enabled, are applied once per step after the deterministic update.
 */
Trajectory integrate_trajectory(TrapModel const& model,
                                DriveConfig const& drive,
                                double damping,
                                Vec3 const& r0,
                                Vec3 const& v0,
                                double duration,
                                double dt = 0,
                                std::optional<ThermalKicks> kicks = std::nullopt);

struct AxisPhasor
{
    double amplitude = 0;  //!< m
    double phase = 0;      //!< rad; coordinate = amplitude cos(w t + phase)
};

/*!
 * Least-squares projection of each coordinate on {cos wt, sin wt, 1} over
 * the largest whole number of periods after discarding the first 30%.
 */
std::array<AxisPhasor, 3> micromotion_phasor(Trajectory const& traj, double omega);

struct MismatchParams
{
    double q = 0;
    double R = 0;      //!< m
    double alpha = 0;
    double delta = 0;  //!< rad
    double omega = 0;  //!< rad/s

    void validate() const;
};

// Amplitude (1/4) q R alpha |delta| in metres.
double mismatch_micromotion_prediction(MismatchParams const& p);

struct StabilityParameters
{
    Vec3 a = Vec3::Zero();
    Vec3 q = Vec3::Zero();
};
StabilityParameters stability_parameters(TrapModel const& model, DriveConfig const& drive);

/*!
 * Parameters of the (1/4) q R alpha delta estimate for a phase mismatch on
 * `sources` (their signed amplitudes as set in `drive`) along `axis`. The trap dipole efficiency is
 * alpha = 2 |g| / (|Phi''| R), with g the summed field gradient of the
 * mismatched sources at the null and Phi'' the RF curvature along the axis,
 * so that (1/4) q R alpha delta equals the driven amplitude q_e |g| delta /
 * (m W^2).
 */
MismatchParams mismatch_params(TrapModel const& model,
                               DriveConfig const& drive,
                               std::vector<Electrode> const& sources,
                               int axis,
                               double R,
                               double delta);

/*!
 * Strongest spectral line of one coordinate within [f_lo, f_hi] after
 * averaging over whole RF periods. Hann window, zero padding and parabolic
 * peak interpolation.
 */
double secular_peak_hz(Trajectory const& traj,
                       int axis,
                       double omega_rf,
                       double f_lo,
                       double f_hi);

}  // namespace fibretrap::dyn
