#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "fibretrap/experiments.hpp"

namespace fibretrap::exp {

namespace {

double const pi = std::numbers::pi;
double const two_pi = 2 * pi;

using Role = ScanTable::Role;
using trap::CVec3;
using trap::Electrode;
using trap::Vec3;

//! Detection rate as a function of ion position and velocity.
using ChannelRate = std::function<double(Vec3 const&, Vec3 const&)>;

struct ChannelSetup
{
    std::vector<Electrode> sources;
    int axis = 1;
    trap::DriveConfig in_phase;
    ChannelRate rate;
};

trap::DriveConfig with_phase(trap::DriveConfig d, std::vector<Electrode> const& sources, double delta)
{
    for (auto e : sources)
        d[e].phase = delta;
    return d;
}

optics::LaserParams cooling_laser(ExperimentConfig const& c)
{
    optics::LaserParams l;
    l.linewidth = two_pi * c.number("laser.linewidth_mhz") * 1e6;
    l.detuning = c.number("laser.detuning_linewidths") * l.linewidth;
    l.saturation = c.number("laser.saturation");
    l.efficiency = c.number("laser.efficiency");
    auto const& dir = c.list("laser.direction");
    if (dir.size() != 3)
        throw ConfigError("laser.direction needs three components");
    Vec3 const d(dir[0], dir[1], dir[2]);
    if (!(d.norm() > 0))
        throw ConfigError("laser.direction must be non-zero");
    l.k_vector = two_pi / (c.number("laser.wavelength_nm") * 1e-9) * d.normalized();
    return l;
}

Vec3 mode_offset(ExperimentConfig const& c)
{
    return Vec3(c.number("cavity.mode_offset_x_um") * 1e-6, c.number("cavity.mode_offset_y_um") * 1e-6, 0);
}

ChannelSetup make_channel(Setup const& s, Channel channel)
{
    auto const& c = s.config;
    ChannelSetup ch;
    ch.in_phase = reference_drive(s);
    if (channel == Channel::radial)
    {
        ch.sources = {Electrode::radial_y};
        ch.axis = 1;
        ch.in_phase[Electrode::radial_y].amplitude = c.number("drive.radial_mismatch_amplitude");
        auto const laser = cooling_laser(c);
        ch.rate = [laser](Vec3 const&, Vec3 const& v) { return optics::fluorescence_rate(laser, v); };
        return ch;
    }
    ch.sources = {Electrode::inner_upper, Electrode::inner_lower};
    ch.axis = 2;
    ch.in_phase.set_differential_axial(c.number("drive.axial_mismatch_amplitude"), 0);
    Vec3 const null = trap::find_rf_null(s.model, ch.in_phase);

    // Register the standing wave so the mean ion position sits a quarter
    // of the way from an antinode to a node, where d(psi^2)/dz peaks.
    auto mode = cavity_mode(c);
    double const z0 = null.z();
    mode.antinode_offset = (pi / 4 + mode.gouy_phase(z0)) / mode.wavenumber() - z0;
    double const sigma_z = c.number("cavity.sigma_z_nm") * 1e-9;
    double const peak = c.number("cavity.emission_peak_rate");
    double const background = c.number("cavity.background_rate");
    Vec3 const offset = mode_offset(c);
    ch.rate = [=](Vec3 const& r, Vec3 const&) {
        return background + peak * optics::mean_mode_intensity(mode, r - offset, sigma_z);
    };
    return ch;
}

/*!
 * First-order response to a unit phase mismatch: the extra field phasor
 * i delta E_sources drives x = -q E / (m W^2); the detected rate follows
 * through its position and velocity gradients.
 */
struct Expected
{
    CVec3 motion;     //!< m per rad
    std::complex<double> rate;  //!< counts/s per rad
};

Expected expected_response(Setup const& s, ChannelSetup const& ch, Vec3 const& null)
{
    double const eps = 1e-6;
    auto const shifted = with_phase(ch.in_phase, ch.sources, eps);
    CVec3 const de = (trap::rf_phasor_field(s.model, shifted, null)
                      - trap::rf_phasor_field(s.model, ch.in_phase, null))
                     / eps;
    double const w = ch.in_phase.omega_rf;
    Expected e;
    e.motion = -s.model.ion.charge / (s.model.ion.mass * w * w) * de;

    Vec3 grad_r = Vec3::Zero();
    Vec3 grad_v = Vec3::Zero();
    double const hr = 1e-10;
    double const hv = 1e-2;
    for (int k = 0; k < 3; ++k)
    {
        Vec3 dr = Vec3::Zero();
        dr[k] = hr;
        grad_r[k] = (ch.rate(null + dr, Vec3::Zero()) - ch.rate(null - dr, Vec3::Zero())) / (2 * hr);
        Vec3 dv = Vec3::Zero();
        dv[k] = hv;
        grad_v[k] = (ch.rate(null, dv) - ch.rate(null, -dv)) / (2 * hv);
    }
    std::complex<double> const iw(0, w);
    e.rate = 0;
    for (int k = 0; k < 3; ++k)
        e.rate += grad_r[k] * e.motion[k] + grad_v[k] * iw * e.motion[k];
    return e;
}

LineSummary fit_line(std::vector<double> const& x, std::vector<double> const& y, std::vector<double> const& sig)
{
    LineSummary l;
    l.fit = fit::fit_polynomial(x, y, 1, false, sig);
    l.zero_crossing = -l.fit.value("c0") / l.fit.value("c1");
    l.r_squared = l.fit.value("r_squared");
    return l;
}

}  // namespace

Channel parse_channel(std::string const& name)
{
    if (name == "radial")
        return Channel::radial;
    if (name == "axial")
        return Channel::axial;
    throw ConfigError("channel must be radial or axial, got '" + name + "'");
}

std::string to_string(Channel c)
{
    return c == Channel::radial ? "radial" : "axial";
}

PhaseScan run_phase_scan(Setup const& s, Channel channel)
{
    auto const& c = s.config;
    int const points = c.integer("scan.phase_points");
    if (points < 3)
        throw ConfigError("phase scan needs at least three points");
    double const dmax = c.number("scan.phase_delta_max");
    if (!(dmax > 0))
        throw ConfigError("scan.phase_delta_max must be positive");
    int const bins = c.integer("detection.phase_bins");
    double const t_int = c.number(channel == Channel::radial ? "detection.integration_time_s"
                                                             : "detection.cavity_phase_integration_s");
    double const duration = c.number("scan.phase_duration_us") * 1e-6;
    double const damping = two_pi * c.number("trap.damping_khz") * 1e3;
    auto const deltas = linspace(-dmax, dmax, points);

    auto const ch = make_channel(s, channel);
    Vec3 const null = trap::find_rf_null(s.model, ch.in_phase);
    auto const expected = expected_response(s, ch, null);
    double const w = ch.in_phase.omega_rf;
    double const motion_ref = std::arg(expected.motion[ch.axis]);
    // Rate = Re[P e^{i W t}] = |P| cos(theta - (-arg P)).
    double const rate_ref = -std::arg(expected.rate);

    std::size_t const n = deltas.size();
    std::vector<double> signed_nm(n), amp_nm(n), phase(n), photons(n), sig_amp(n), sig_err(n), offset(n);
    std::vector<std::array<dyn::AxisPhasor, 3>> phasors(n);
    parallel_for(n, s.threads, [&](std::size_t i) {
        auto const drive = with_phase(ch.in_phase, ch.sources, deltas[i]);
        auto const traj = dyn::integrate_trajectory(s.model, drive, damping, null, Vec3::Zero(), duration);
        phasors[i] = dyn::micromotion_phasor(traj, w);
        Vec3 mean = Vec3::Zero();
        std::size_t const first = traj.size() * 3 / 10;
        for (std::size_t j = first; j < traj.size(); ++j)
            mean += traj.positions[j];
        mean /= static_cast<double>(traj.size() - first);

        CVec3 x;
        for (int k = 0; k < 3; ++k)
            x[k] = std::polar(phasors[i][static_cast<std::size_t>(k)].amplitude,
                              phasors[i][static_cast<std::size_t>(k)].phase);
        auto const& p = phasors[i][static_cast<std::size_t>(ch.axis)];
        amp_nm[i] = p.amplitude * 1e9;
        phase[i] = p.phase;
        signed_nm[i] = p.amplitude * std::cos(p.phase - motion_ref) * 1e9;

        auto rate_at = [&](double t) {
            std::complex<double> const e = std::polar(1.0, w * t);
            Vec3 const r = mean + (x * e).real();
            Vec3 const v = (x * e * std::complex<double>(0, w)).real();
            return ch.rate(r, v);
        };
        double cap = 0;
        for (int j = 0; j < 512; ++j)
            cap = std::max(cap, rate_at(two_pi / w * j / 512));
        cap = 1.02 * cap + 1;
        Rng rng = stream_rng(c.master_seed, i, salt::phase_scan);
        auto const stream = optics::sample_photon_arrivals(rate_at, 0, t_int, cap, rng);
        photons[i] = static_cast<double>(stream.arrivals.size());

        std::vector<double> counts(static_cast<std::size_t>(bins), 0.0), centers, sigmas;
        for (double t : stream.arrivals)
        {
            double const theta = std::fmod(w * t, two_pi);
            auto b = static_cast<std::size_t>(theta / two_pi * bins);
            counts[std::min(b, counts.size() - 1)] += 1;
        }
        for (int b = 0; b < bins; ++b)
        {
            centers.push_back(two_pi * (b + 0.5) / bins);
            sigmas.push_back(std::sqrt(std::max(counts[static_cast<std::size_t>(b)], 1.0)));
        }
        auto const f = fit::fit_fixed_frequency_sinusoid(centers, counts, rate_ref, true, sigmas);
        sig_amp[i] = f.value("signed_amplitude");
        sig_err[i] = f.error("amplitude");
        offset[i] = f.value("offset");
    });

    PhaseScan out;
    out.channel = channel;
    out.table.add("delta_rad", Role::independent, deltas);
    out.table.add("micromotion_signed_nm", Role::dependent, signed_nm);
    out.table.add("micromotion_amplitude_nm", Role::dependent, amp_nm);
    out.table.add("micromotion_phase_rad", Role::dependent, phase);
    out.table.add("photons", Role::dependent, photons);
    out.table.add("signed_amplitude_counts", Role::dependent, sig_amp);
    out.table.add("signed_amplitude_err", Role::error, sig_err);
    out.table.add("offset_counts", Role::dependent, offset);
    stamp(out.table, s, "phase-scan");
    out.table.set_meta("channel", to_string(channel));

    out.photons = fit_line(deltas, sig_amp, sig_err);
    std::vector<double> signed_m(n);
    for (std::size_t i = 0; i < n; ++i)
        signed_m[i] = signed_nm[i] * 1e-9;
    out.trajectory = fit_line(deltas, signed_m, {});
    out.params = dyn::mismatch_params(s.model, ch.in_phase, ch.sources, ch.axis,
                                      c.number("trap.ion_electrode_distance_um") * 1e-6, dmax);
    out.predicted_slope = dyn::mismatch_micromotion_prediction(out.params) / dmax;
    auto const& first = phasors.front()[static_cast<std::size_t>(ch.axis)];
    auto const& last = phasors.back()[static_cast<std::size_t>(ch.axis)];
    out.endpoint_phase_jump = std::abs(std::remainder(last.phase - first.phase, two_pi));
    return out;
}

Report PhaseScan::report(Setup const& s) const
{
    Report rep;
    rep.command = "phase-scan";
    rep.summary = header(s, rep.command);
    rep.summary["channel"] = to_string(channel);
    auto line = [](LineSummary const& l, double scale) {
        json j;
        j["slope"] = l.fit.value("c1") * scale;
        j["intercept"] = l.fit.value("c0") * scale;
        j["zero_crossing_rad"] = l.zero_crossing;
        j["r_squared"] = l.r_squared;
        return j;
    };
    rep.summary["photon_line"] = line(photons, 1);
    rep.summary["trajectory_line_nm"] = line(trajectory, 1e9);
    rep.summary["predicted_slope_nm_per_rad"] = predicted_slope * 1e9;
    rep.summary["slope_ratio"] = std::abs(trajectory.fit.value("c1")) / predicted_slope;
    rep.summary["mismatch_params"] = {{"q", params.q}, {"R_m", params.R}, {"alpha", params.alpha}};
    rep.summary["endpoint_phase_jump_rad"] = endpoint_phase_jump;
    rep.summary["photon_fit"] = fit_to_json(photons.fit);
    rep.summary["trajectory_fit"] = fit_to_json(trajectory.fit);
    rep.tables.emplace_back("phase_scan_" + to_string(channel), table);
    return rep;
}

}  // namespace fibretrap::exp
