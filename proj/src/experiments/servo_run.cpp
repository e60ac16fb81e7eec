#include <numbers>
#include <sstream>

#include "fibretrap/experiments.hpp"

namespace fibretrap::exp {

namespace {

servo::Piezo parse_piezo(std::string const& name)
{
    if (name == "multilayer")
        return servo::Piezo::multilayer;
    if (name == "monolayer")
        return servo::Piezo::monolayer;
    throw ConfigError("servo.piezo must be multilayer or monolayer, got '" + name + "'");
}

json margins_json(servo::Margins const& m)
{
    return {{"gain_margin_db", m.gain_margin_db},
            {"phase_margin_deg", m.phase_margin_deg},
            {"unity_gain_hz", m.unity_gain_hz}};
}

double const suppression_band_hz = 100;

}  // namespace

ServoRun run_servo_sim(Setup const& s)
{
    auto const& c = s.config;
    ServoRun out;
    out.plant = servo::PlantModel::reference();
    out.plant.dc_gain = servo::actuator_stroke(parse_piezo(c.text("servo.piezo")));

    auto spec = servo::reference_filter_spec();
    spec.kp = c.number("servo.kp");
    spec.ki = spec.kp * 2 * std::numbers::pi * c.number("servo.pi_corner_khz") * 1e3;
    auto bare = spec;
    // Without compensation only the trailing low-pass stage remains.
    bare.stages.erase(bare.stages.begin(), bare.stages.end() - 1);
    out.filter = servo::compose_loop_filter(c.flag("servo.compensate") ? spec : bare);

    out.linewidth_nm = servo::linewidth_length_nm(c.number("cavity.length_um") * 1e-6,
                                                  c.number("servo.lock_wavelength_nm") * 1e-9,
                                                  c.number("servo.lock_linewidth_mhz") * 1e6);
    out.margins = servo::loop_margins(out.plant, out.filter, out.linewidth_nm);
    out.uncompensated = servo::loop_margins(out.plant, servo::compose_loop_filter(bare), out.linewidth_nm);

    servo::NoiseModel noise;
    noise.vibration_rms_nm = c.number("servo.vibration_rms_nm");
    noise.vibration_corner_hz = c.number("servo.vibration_corner_hz");
    noise.sensor_rms = c.number("servo.sensor_rms");
    double const duration = c.number("servo.duration_s");
    std::uint64_t const seed = stream_rng(c.master_seed, 0, salt::servo)();
    out.closed = servo::simulate_lock(out.plant, out.filter, out.linewidth_nm, noise, duration, seed, true);
    out.open = servo::simulate_lock(out.plant, out.filter, out.linewidth_nm, noise, duration, seed, false);
    out.suppression_db = servo::suppression_db(out.open, out.closed, suppression_band_hz);
    return out;
}

Report ServoRun::report(Setup const& s) const
{
    auto const& c = s.config;
    Report rep;
    rep.command = "servo-sim";
    rep.summary = header(s, rep.command);
    rep.summary["piezo"] = c.text("servo.piezo");
    rep.summary["compensated"] = c.flag("servo.compensate");
    rep.summary["linewidth_nm"] = linewidth_nm;
    rep.summary["margins"] = margins_json(margins);
    rep.summary["uncompensated_margins"] = margins_json(uncompensated);
    rep.summary["closed_residual_linewidths"] = closed.residual_std;
    rep.summary["open_residual_linewidths"] = open.residual_std;
    rep.summary["suppression_below_100hz_db"] = suppression_db;

    std::ostringstream bode;
    servo::write_bode_csv(bode, plant, filter, linewidth_nm, 1, 0.45 * filter.sample_rate,
                          c.integer("servo.bode_points"));
    rep.files.emplace_back("bode.csv", bode.str());
    auto const stride = static_cast<std::size_t>(std::max(1, c.integer("servo.trace_stride")));
    std::ostringstream lock;
    closed.write_csv(lock, stride);
    rep.files.emplace_back("lock_closed.csv", lock.str());
    std::ostringstream free;
    open.write_csv(free, stride);
    rep.files.emplace_back("lock_open.csv", free.str());
    return rep;
}

}  // namespace fibretrap::exp
