#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/random/poisson_distribution.hpp>

#include "fibretrap/experiments.hpp"

namespace fibretrap::exp {

namespace {

double const pi = std::numbers::pi;
double const two_pi = 2 * pi;

using Role = ScanTable::Role;
using trap::Electrode;
using trap::Vec3;

double draw_counts(double mean, bool noiseless, Rng& rng)
{
    if (noiseless || mean <= 0)
        return std::max(mean, 0.0);
    boost::random::poisson_distribution<long long, double> poisson(mean);
    return static_cast<double>(poisson(rng));
}

Vec3 mode_offset(ExperimentConfig const& c)
{
    return Vec3(c.number("cavity.mode_offset_x_um") * 1e-6, c.number("cavity.mode_offset_y_um") * 1e-6, 0);
}

}  // namespace

//---------------------------------------------------------------------------//
// axial-scan
//---------------------------------------------------------------------------//

AxialScan run_axial_standing_wave_scan(Setup const& s)
{
    auto const& c = s.config;
    int const points = c.integer("scan.axial_points");
    if (points < 8)
        throw ConfigError("axial scan needs at least eight points");
    auto const gen = linspace(c.number("scan.axial_generator_min"), c.number("scan.axial_generator_max"), points);
    double const loss = c.number("drive.axial_loss_factor");
    if (!(loss > 0))
        throw ConfigError("drive.axial_loss_factor must be positive");
    auto const mode = cavity_mode(c);
    Vec3 const offset = mode_offset(c);
    double const sigma_z = c.number("cavity.sigma_z_nm") * 1e-9;
    double const peak = c.number("cavity.emission_peak_rate");
    double const background = c.number("cavity.background_rate");
    double const t_int = c.number("detection.integration_time_s");
    bool const noiseless = c.flag("scan.noiseless");
    auto const ref = reference_drive(s);

    std::size_t const n = gen.size();
    std::vector<double> volts(n), z_nm(n), rate(n), counts(n), err(n);
    parallel_for(n, s.threads, [&](std::size_t i) {
        auto drive = ref;
        volts[i] = gen[i] * loss;
        drive.set_differential_axial(volts[i], 0);
        Vec3 const null = trap::find_rf_null(s.model, drive);
        z_nm[i] = null.z() * 1e9;
        rate[i] = background + peak * optics::mean_mode_intensity(mode, null - offset, sigma_z);
        Rng rng = stream_rng(c.master_seed, i, salt::axial_scan);
        counts[i] = draw_counts(rate[i] * t_int, noiseless, rng);
        err[i] = std::sqrt(std::max(counts[i], 1.0));
    });

    AxialScan out;
    out.table.add("generator_V", Role::independent, gen);
    out.table.add("electrode_V", Role::dependent, volts);
    out.table.add("z_nm", Role::dependent, z_nm);
    out.table.add("expected_rate", Role::dependent, rate);
    out.table.add("counts", Role::dependent, counts);
    out.table.add("counts_err", Role::error, err);
    stamp(out.table, s, "axial-scan");

    // Background-subtracted standing wave: bg + C (1 + v cos(2 pi (z - z0) / P)) / 2.
    double const bg = background * t_int;
    fit::CurveFn model = [bg](double z, Eigen::VectorXd const& p) {
        return bg + p[0] * (1 + p[1] * std::cos(two_pi * (z - p[3]) / p[2])) / 2;
    };
    auto const hi = std::max_element(counts.begin(), counts.end());
    auto const lo = std::min_element(counts.begin(), counts.end());
    double const top = *hi - bg;
    double const bottom = std::max(*lo - bg, 0.0);
    Eigen::VectorXd init(4);
    init << top + bottom, std::clamp((top - bottom) / std::max(top + bottom, 1.0), 0.05, 1.0),
        c.number("cavity.wavelength_nm") / 2, z_nm[static_cast<std::size_t>(hi - counts.begin())];
    std::vector<double> sig = noiseless ? std::vector<double>{} : err;
    out.fit = fit::fit_curve(model, z_nm, counts, sig, init, {"amplitude", "visibility", "period_nm", "z0_nm"});
    out.antinode_spacing_nm = out.fit.value("period_nm");
    out.antinode_spacing_err = out.fit.error("period_nm");
    out.visibility = out.fit.value("visibility");
    out.visibility_err = out.fit.error("visibility");
    return out;
}

Report AxialScan::report(Setup const& s) const
{
    Report rep;
    rep.command = "axial-scan";
    rep.summary = header(s, rep.command);
    rep.summary["antinode_spacing_nm"] = antinode_spacing_nm;
    rep.summary["antinode_spacing_err_nm"] = antinode_spacing_err;
    rep.summary["visibility"] = visibility;
    rep.summary["visibility_err"] = visibility_err;
    rep.summary["sigma_z_nm"] = s.config.number("cavity.sigma_z_nm");
    rep.summary["background_rate"] = s.config.number("cavity.background_rate");
    rep.summary["fit"] = fit_to_json(fit);
    rep.tables.emplace_back("axial_scan", table);
    return rep;
}

//---------------------------------------------------------------------------//
// radial-map
//---------------------------------------------------------------------------//

RadialMap run_radial_mode_map(Setup const& s)
{
    auto const& c = s.config;
    int const points = c.integer("scan.radial_points");
    if (points < 5)
        throw ConfigError("radial map needs at least five points");
    int const repeats = c.integer("scan.radial_repeats");
    if (repeats < 1)
        throw ConfigError("scan.radial_repeats must be at least 1");
    auto const amps = linspace(c.number("scan.radial_v_min"), c.number("scan.radial_v_max"), points);
    auto const mode = cavity_mode(c);
    Vec3 const offset = mode_offset(c);
    double const sigma_z = c.number("cavity.sigma_z_nm") * 1e-9;
    double const peak = c.number("cavity.emission_peak_rate");
    double const background = c.number("cavity.background_rate");
    double const t_int = c.number("detection.integration_time_s");
    double const gs = c.number("cavity.emission_gaussian_sigma_mhz");
    double const gl = c.number("cavity.emission_lorentzian_hwhm_mhz");
    double const fwhm = fit::pseudo_voigt_mix(gs, gl).fwhm;
    double const span = c.number("scan.detuning_span");
    auto const detunings = linspace(-span * fwhm, span * fwhm, c.integer("scan.detuning_points"));
    bool const noiseless = c.flag("scan.noiseless");
    auto const ref = reference_drive(s);
    // The ion is moved to the antinode nearest the trap centre at every point.
    double const z_antinode = -mode.antinode_offset;

    std::size_t const n = amps.size();
    std::size_t const reps = static_cast<std::size_t>(repeats);
    std::vector<double> y_um(n), coupling(n), area(n), area_err(n);
    std::vector<std::vector<std::vector<double>>> spectra(n);
    parallel_for(n, s.threads, [&](std::size_t i) {
        auto drive = ref;
        drive[Electrode::radial_y].amplitude = amps[i];
        Vec3 null = trap::find_rf_null(s.model, drive);
        y_um[i] = null.y() * 1e6;
        null.z() = z_antinode;
        coupling[i] = optics::mean_mode_intensity(mode, null - offset, sigma_z);
        Rng rng = stream_rng(c.master_seed, i, salt::radial_map);
        for (std::size_t r = 0; r < reps; ++r)
        {
            std::vector<double> counts;
            for (double d : detunings)
            {
                double const rate = background + peak * coupling[i] * fit::pseudo_voigt_unit_peak(d, gs, gl);
                counts.push_back(draw_counts(rate * t_int, noiseless, rng));
            }
            spectra[i].push_back(std::move(counts));
        }
    });

    // Weak spectra far from the mode cannot constrain the widths, so the line
    // shape comes from a free fit of the summed spectrum.
    std::vector<double> total(detunings.size(), 0.0);
    for (auto const& point : spectra)
        for (auto const& counts : point)
            for (std::size_t j = 0; j < counts.size(); ++j)
                total[j] += counts[j];
    auto const shape_fit = fit::fit_pseudo_voigt(detunings, total);
    fit::LineShape const shape{shape_fit.value("center"), std::abs(shape_fit.value("gaussian_width")),
                               std::abs(shape_fit.value("lorentzian_width"))};

    parallel_for(n, s.threads, [&](std::size_t i) {
        std::vector<double> areas;
        for (auto const& counts : spectra[i])
            areas.push_back(fit::fit_pseudo_voigt_fixed_shape(detunings, counts, shape).value("spectral_area"));
        double mean = 0;
        for (double a : areas)
            mean += a;
        mean /= repeats;
        double var = 0;
        for (double a : areas)
            var += (a - mean) * (a - mean);
        area[i] = mean;
        area_err[i] = repeats > 1 ? std::sqrt(var / (repeats - 1) / repeats) : 0;
    });

    std::vector<double> disp(n);
    for (std::size_t i = 0; i < n; ++i)
        disp[i] = y_um[i] - y_um[0];

    RadialMap out;
    out.table.add("radial_V", Role::independent, amps);
    out.table.add("displacement_um", Role::dependent, disp);
    out.table.add("null_y_um", Role::dependent, y_um);
    out.table.add("mode_intensity", Role::dependent, coupling);
    out.table.add("spectral_area", Role::dependent, area);
    out.table.add("spectral_area_err", Role::error, area_err);
    stamp(out.table, s, "radial-map");
    bool const weighted = !noiseless && repeats > 1
                          && std::all_of(area_err.begin(), area_err.end(), [](double e) { return e > 0; });
    out.fit = fit::fit_gaussian_1d(disp, area, weighted ? area_err : std::vector<double>{});
    out.shape = shape;
    out.waist_um = out.fit.value("waist");
    out.center_um = out.fit.value("center");
    return out;
}

Report RadialMap::report(Setup const& s) const
{
    Report rep;
    rep.command = "radial-map";
    rep.summary = header(s, rep.command);
    rep.summary["waist_um"] = waist_um;
    rep.summary["waist_err_um"] = fit.error("waist");
    rep.summary["center_um"] = center_um;
    rep.summary["center_err_um"] = fit.error("center");
    rep.summary["configured_waist_um"] = cavity_mode(s.config).w0 * 1e6;
    rep.summary["line_shape_MHz"] = {{"center", shape.center},
                                     {"gaussian_width", shape.gaussian_width},
                                     {"lorentzian_width", shape.lorentzian_width}};
    rep.summary["fit"] = fit_to_json(fit);
    rep.tables.emplace_back("radial_map", table);
    return rep;
}

}  // namespace fibretrap::exp
