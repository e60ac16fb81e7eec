#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "fibretrap/experiments.hpp"

namespace fibretrap::exp {

namespace {

double const two_pi = 2 * std::numbers::pi;

using Role = ScanTable::Role;

std::string csv_of(dyn::Trajectory const& t)
{
    std::ostringstream os;
    t.write_csv(os);
    return os.str();
}

}  // namespace

//---------------------------------------------------------------------------//
// solve-fields
//---------------------------------------------------------------------------//

FieldsResult run_solve_fields(Setup const& s)
{
    auto const& c = s.config;
    field::TrapGeometry geo;
    geo.tip_gap = c.number("trap.tip_gap_um") * 1e-6;
    geo.fibre_recess = c.number("trap.fibre_recess_um") * 1e-6;
    FieldsResult r;
    r.basis = field::solve_stack_basis(geo, c.number("trap.grid_spacing_um") * 1e-6,
                                       c.number("trap.solver_tolerance"),
                                       c.number("trap.fit_radius_um") * 1e-6, true);
    r.inner_quadrupole_ratio
        = r.basis.entries.at("inner_upper").Q(2, 2) / r.basis.entries.at("outer_pair").Q(2, 2);
    return r;
}

Report FieldsResult::report(Setup const& s) const
{
    Report rep;
    rep.command = "solve-fields";
    rep.summary = header(s, rep.command);
    ScanTable t;
    std::vector<double> ids, a0, bz, qzz, c3, c4, rms, sweeps, residual;
    for (auto const& [name, e] : basis.entries)
    {
        ids.push_back(field::electrode_id(name));
        a0.push_back(e.a0);
        bz.push_back(e.b.z());
        qzz.push_back(e.Q(2, 2));
        c3.push_back(e.c3);
        c4.push_back(e.c4);
        rms.push_back(e.fit_rms);
        auto const& r = basis.reports.at(name);
        sweeps.push_back(static_cast<double>(r.sweeps));
        residual.push_back(r.residual);

        json j;
        j["a0"] = e.a0;
        j["b_z_V_per_m"] = e.b.z();
        j["Q_zz_V_per_m2"] = e.Q(2, 2);
        j["c3"] = e.c3;
        j["c4"] = e.c4;
        j["fit_rms_V"] = e.fit_rms;
        j["fit_nodes"] = e.fit_nodes;
        j["sweeps"] = r.sweeps;
        j["laplace_residual"] = r.residual;
        rep.summary["electrodes"][name] = j;

        auto f = basis.fields.find(name);
        if (f != basis.fields.end())
        {
            std::ostringstream os;
            field::write_field_csv(os, f->second);
            rep.files.emplace_back("field_" + name + ".csv", os.str());
        }
    }
    t.add("electrode_id", Role::independent, ids);
    t.add("a0", Role::dependent, a0);
    t.add("b_z_V_per_m", Role::dependent, bz);
    t.add("Q_zz_V_per_m2", Role::dependent, qzz);
    t.add("c3", Role::dependent, c3);
    t.add("c4", Role::dependent, c4);
    t.add("fit_rms_V", Role::dependent, rms);
    t.add("sweeps", Role::dependent, sweeps);
    t.add("laplace_residual", Role::dependent, residual);
    stamp(t, s, rep.command);
    rep.tables.emplace_back("multipoles", std::move(t));
    rep.summary["inner_quadrupole_ratio"] = inner_quadrupole_ratio;
    return rep;
}

//---------------------------------------------------------------------------//
// calibrate
//---------------------------------------------------------------------------//

Report calibration_report(Setup const& s)
{
    if (!s.report)
        throw ConfigError("calibrate needs [trap] model_file to be empty");
    auto const& r = *s.report;
    Report rep;
    rep.command = "calibrate";
    rep.summary = header(s, rep.command);
    json j;
    j["quadrupole_a_V_per_m2"] = r.quadrupole_a;
    j["radial_slope_model_khz_per_v"] = r.radial_slope_model * 1e-3;
    j["axial_slope_model_khz_per_v"] = r.axial_slope_model * 1e-3;
    j["radial_slope_residual_khz_per_v"] = r.radial_slope_residual * 1e-3;
    j["axial_slope_residual_khz_per_v"] = r.axial_slope_residual * 1e-3;
    j["slope_residual_rms_khz_per_v"] = r.slope_residual_rms * 1e-3;
    j["radial_beta"] = r.radial_beta;
    j["radial_gamma"] = r.radial_gamma;
    j["radial_newton_iterations"] = r.radial_newton_iterations;
    j["poly_linear_refit_um_per_v"] = r.poly_linear_refit * 1e6;
    j["poly_quadratic_refit_um_per_v2"] = r.poly_quadratic_refit * 1e6;
    j["inner_dipole_V_per_m"] = r.inner_dipole;
    j["amplifier_gain_V_per_vpp"] = r.amplifier_gain;
    j["displacement_slope_model_um_per_vpp"] = r.displacement_slope_model * 1e6;
    j["q_axial_at_ref"] = r.q_axial_at_ref;
    rep.summary["calibration"] = j;
    rep.files.emplace_back("model.json", trap::model_to_json(s.model, &r));
    return rep;
}

//---------------------------------------------------------------------------//
// secular-scan
//---------------------------------------------------------------------------//

SecularScan run_secular_slope_scan(Setup const& s)
{
    auto const& c = s.config;
    auto const grid = linspace(c.number("scan.secular_v_min"), c.number("scan.secular_v_max"),
                               c.integer("scan.secular_points"));
    if (grid.size() < 2)
        throw ConfigError("secular scan needs at least two points");
    double const omega = two_pi * c.number("trap.rf_frequency_mhz") * 1e6;
    std::vector<double> radial(grid.size()), axial(grid.size());
    parallel_for(grid.size(), s.threads, [&](std::size_t i) {
        auto const sec = trap::secular_frequencies(s.model, trap::main_drive(grid[i], omega));
        radial[i] = sec.radial_hz() * 1e-3;
        axial[i] = sec.axial_hz() * 1e-3;
    });

    SecularScan out;
    out.table.add("v_main_V", Role::independent, grid);
    out.table.add("radial_kHz", Role::dependent, radial);
    out.table.add("axial_kHz", Role::dependent, axial);
    stamp(out.table, s, "secular-scan");
    out.radial_fit = fit::fit_polynomial(grid, radial, 1, true);
    out.axial_fit = fit::fit_polynomial(grid, axial, 1, true);

    auto const ref = reference_drive(s);
    auto const sec = trap::secular_frequencies(s.model, ref);
    out.hessian_axial_hz = sec.axial_hz();
    out.q_axial = std::abs(dyn::stability_parameters(s.model, ref).q.z());
    if (c.flag("scan.secular_trajectory_check"))
    {
        auto traj = dyn::integrate_trajectory(s.model, ref, 0, trap::Vec3(0.3e-6, 0, 0.5e-6),
                                              trap::Vec3::Zero(), 200e-6);
        out.trajectory_axial_hz
            = dyn::secular_peak_hz(traj, 2, ref.omega_rf, 0.2 * sec.axial_hz(), 2.0 * sec.axial_hz());
    }
    return out;
}

Report SecularScan::report(Setup const& s) const
{
    Report rep;
    rep.command = "secular-scan";
    rep.summary = header(s, rep.command);
    rep.summary["radial_slope_khz_per_v"] = radial_fit.value("c1");
    rep.summary["axial_slope_khz_per_v"] = axial_fit.value("c1");
    if (s.report)
    {
        rep.summary["target_radial_slope_khz_per_v"] = s.config.number("calibration.radial_slope_khz_per_v");
        rep.summary["target_axial_slope_khz_per_v"] = s.config.number("calibration.axial_slope_khz_per_v");
        rep.summary["slope_residual_rms_khz_per_v"] = s.report->slope_residual_rms * 1e-3;
    }
    rep.summary["q_axial_at_v_main"] = q_axial;
    rep.summary["hessian_axial_hz"] = hessian_axial_hz;
    if (trajectory_axial_hz)
    {
        rep.summary["trajectory_axial_hz"] = *trajectory_axial_hz;
        rep.summary["trajectory_relative_deviation"] = *trajectory_axial_hz / hessian_axial_hz - 1;
    }
    rep.summary["radial_fit"] = fit_to_json(radial_fit);
    rep.summary["axial_fit"] = fit_to_json(axial_fit);
    rep.tables.emplace_back("secular_scan", table);
    return rep;
}

//---------------------------------------------------------------------------//
// minimum-scan
//---------------------------------------------------------------------------//

MinimumScanResult run_minimum_scan(Setup const& s)
{
    auto const& amps = s.config.list("scan.minimum_amplitudes_v");
    if (amps.empty())
        throw ConfigError("scan.minimum_amplitudes_v must not be empty");
    MinimumScanResult out;
    out.scan = trap::minimum_vs_amplitude_scan(s.model, reference_drive(s), trap::Electrode::radial_y, amps);
    stamp(out.scan.table, s, "minimum-scan");
    auto const& amp = out.scan.table.column("amplitude_V").values;
    auto const far = static_cast<std::size_t>(
        std::max_element(amp.begin(), amp.end(), [](double a, double b) { return std::abs(a) < std::abs(b); })
        - amp.begin());
    char const* names[] = {"x_um", "y_um", "z_um"};
    out.shift_at_max_um = out.scan.table.column(names[out.scan.axis]).values[far];
    return out;
}

Report MinimumScanResult::report(Setup const& s) const
{
    Report rep;
    rep.command = "minimum-scan";
    rep.summary = header(s, rep.command);
    rep.summary["axis"] = std::string(1, "xyz"[scan.axis]);
    rep.summary["quadratic_um_per_v2"] = scan.fit.value("c2");
    rep.summary["linear_um_per_v"] = scan.fit.value("c1");
    rep.summary["shift_at_max_amplitude_um"] = shift_at_max_um;
    rep.summary["fit"] = fit_to_json(scan.fit);
    rep.tables.emplace_back("minimum_scan", scan.table);
    return rep;
}

//---------------------------------------------------------------------------//
// displacement-cal
//---------------------------------------------------------------------------//

DisplacementCal run_displacement_calibration(Setup const& s)
{
    auto const& c = s.config;
    auto const vpp = linspace(0, c.number("scan.displacement_vpp_max"), c.integer("scan.displacement_points"));
    if (vpp.size() < 2)
        throw ConfigError("displacement calibration needs at least two points");
    auto const cam = camera_model(c);
    double const exposure = c.number("detection.camera_exposure_s");
    double const rate = c.number("detection.camera_photon_rate");
    double const spread = c.number("detection.position_sigma_um") * 1e-6;
    auto const ref = reference_drive(s);

    std::size_t const n = vpp.size();
    DisplacementCal out;
    out.frames.resize(n);
    std::vector<double> volts(n), truth(n), px(n), py(n), obj(n), err(n);
    parallel_for(n, s.threads, [&](std::size_t i) {
        auto drive = ref;
        volts[i] = s.model.amplifier_gain * vpp[i];
        drive[trap::Electrode::radial_y].amplitude = volts[i];
        trap::Vec3 const null = trap::find_rf_null(s.model, drive);
        truth[i] = null.y() * 1e6;
        // The camera looks along x: image axes are (y, z).
        std::uint64_t const seed = stream_rng(c.master_seed, i, salt::displacement)();
        out.frames[i] = optics::render_ion_image(optics::Vec2(null.y(), null.z()),
                                                 optics::Vec2(spread, spread), cam, exposure, rate, seed);
        auto const f = fit::fit_gaussian_spot_2d(out.frames[i], cam.pixel_pitch);
        px[i] = f.value("x0");
        py[i] = f.value("y0");
        obj[i] = f.value("x0") * cam.pixel_pitch * 1e6;
        err[i] = f.error("x0") * cam.pixel_pitch * 1e6;
    });
    std::vector<double> disp(n);
    for (std::size_t i = 0; i < n; ++i)
        disp[i] = obj[i] - obj[0];

    out.table.add("generator_Vpp", Role::independent, vpp);
    out.table.add("electrode_V", Role::dependent, volts);
    out.table.add("null_y_um", Role::dependent, truth);
    out.table.add("centroid_x_px", Role::dependent, px);
    out.table.add("centroid_y_px", Role::dependent, py);
    out.table.add("displacement_um", Role::dependent, disp);
    out.table.add("displacement_err_um", Role::error, err);
    stamp(out.table, s, "displacement-cal");
    out.fit = fit::fit_polynomial(vpp, disp, 1, false);
    out.slope_um_per_vpp = std::abs(out.fit.value("c1"));
    return out;
}

Report DisplacementCal::report(Setup const& s) const
{
    Report rep;
    rep.command = "displacement-cal";
    rep.summary = header(s, rep.command);
    rep.summary["slope_um_per_vpp"] = slope_um_per_vpp;
    rep.summary["slope_error_um_per_vpp"] = fit.error("c1");
    rep.summary["amplifier_gain_V_per_vpp"] = s.model.amplifier_gain;
    rep.summary["fit"] = fit_to_json(fit);
    rep.tables.emplace_back("displacement_cal", table);
    for (std::size_t i = 0; i < frames.size(); ++i)
    {
        std::ostringstream os;
        optics::write_pgm(os, frames[i]);
        rep.files.emplace_back(fmt::format("displacement_frame_{:02}.pgm", i), os.str());
    }
    return rep;
}

//---------------------------------------------------------------------------//
// trajectory
//---------------------------------------------------------------------------//

TrajectoryRun run_trajectory(Setup const& s)
{
    auto const& c = s.config;
    auto in_phase = reference_drive(s);
    in_phase[trap::Electrode::radial_y].amplitude = c.number("drive.radial_mismatch_amplitude");
    trap::Vec3 const null = trap::find_rf_null(s.model, in_phase);
    auto drive = in_phase;
    drive[trap::Electrode::radial_y].phase = c.number("scan.phase_delta_max");
    TrajectoryRun out;
    out.trajectory = dyn::integrate_trajectory(s.model, drive, two_pi * c.number("trap.damping_khz") * 1e3,
                                               null, trap::Vec3::Zero(),
                                               c.number("scan.phase_duration_us") * 1e-6);
    out.phasors = dyn::micromotion_phasor(out.trajectory, drive.omega_rf);
    return out;
}

Report TrajectoryRun::report(Setup const& s) const
{
    Report rep;
    rep.command = "trajectory";
    rep.summary = header(s, rep.command);
    rep.summary["delta_rad"] = s.config.number("scan.phase_delta_max");
    for (int k = 0; k < 3; ++k)
    {
        rep.summary["micromotion"][std::string(1, "xyz"[k])]
            = {{"amplitude_nm", phasors[static_cast<std::size_t>(k)].amplitude * 1e9},
               {"phase_rad", phasors[static_cast<std::size_t>(k)].phase}};
    }
    rep.files.emplace_back("trajectory.csv", csv_of(trajectory));
    return rep;
}

}  // namespace fibretrap::exp
