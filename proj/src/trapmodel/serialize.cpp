#include "json.hpp"

#include "fibretrap/trapmodel.hpp"

namespace fibretrap::trap {

namespace {

using nlohmann::json;

constexpr char const* format_tag = "fibretrap.trap_model";

json entry_to_json(field::MultipoleEntry const& e)
{
    json q = json::array();
    for (int i = 0; i < 3; ++i)
        q.push_back({e.Q(i, 0), e.Q(i, 1), e.Q(i, 2)});
    return {{"a0", e.a0}, {"b", {e.b[0], e.b[1], e.b[2]}}, {"Q", q}};
}

field::MultipoleEntry entry_from_json(json const& j)
{
    field::MultipoleEntry e;
    e.a0 = j.at("a0").get<double>();
    auto const& b = j.at("b");
    auto const& q = j.at("Q");
    if (b.size() != 3 || q.size() != 3)
        throw ModelError("model file: malformed multipole entry");
    for (int i = 0; i < 3; ++i)
    {
        e.b[i] = b.at(i).get<double>();
        if (q.at(i).size() != 3)
            throw ModelError("model file: malformed quadrupole row");
        for (int k = 0; k < 3; ++k)
            e.Q(i, k) = q.at(i).at(k).get<double>();
    }
    return e;
}

json report_to_json(CalibrationReport const& r)
{
    return {
        {"quadrupole_a_V_per_m2", r.quadrupole_a},
        {"radial_slope_model_Hz_per_V", r.radial_slope_model},
        {"axial_slope_model_Hz_per_V", r.axial_slope_model},
        {"radial_slope_residual_Hz_per_V", r.radial_slope_residual},
        {"axial_slope_residual_Hz_per_V", r.axial_slope_residual},
        {"slope_residual_rms_Hz_per_V", r.slope_residual_rms},
        {"radial_beta_m_per_V", r.radial_beta},
        {"radial_gamma_per_V", r.radial_gamma},
        {"radial_newton_iterations", r.radial_newton_iterations},
        {"poly_linear_refit_m_per_V", r.poly_linear_refit},
        {"poly_quadratic_refit_m_per_V2", r.poly_quadratic_refit},
        {"inner_dipole_V_per_m", r.inner_dipole},
        {"amplifier_gain_V_per_Vpp", r.amplifier_gain},
        {"displacement_slope_model_m_per_Vpp", r.displacement_slope_model},
        {"q_axial_at_reference", r.q_axial_at_ref},
    };
}

}  // namespace

std::string model_to_json(TrapModel const& model, CalibrationReport const* report)
{
    json j;
    j["format"] = format_tag;
    j["version"] = model_format_version;
    j["ion"] = {{"mass_kg", model.ion.mass}, {"charge_C", model.ion.charge}};
    j["validity_radius_m"] = model.validity_radius;
    j["amplifier_gain_V_per_Vpp"] = model.amplifier_gain;
    json basis = json::object();
    for (auto e : all_electrodes())
        basis[label(e)] = entry_to_json(model[e]);
    j["basis"] = basis;
    if (report)
        j["calibration"] = report_to_json(*report);
    return j.dump(2) + "\n";
}

TrapModel model_from_json(std::string const& text)
{
    json j;
    try
    {
        j = json::parse(text);
    }
    catch (json::parse_error const& e)
    {
        throw ModelError(std::string("model file is not valid JSON: ") + e.what());
    }
    try
    {
        if (j.at("format").get<std::string>() != format_tag)
            throw ModelError("model file: unexpected format tag");
        int const version = j.at("version").get<int>();
        if (version != model_format_version)
            throw ModelError("model file: unsupported version " + std::to_string(version));
        TrapModel m;
        m.ion.mass = j.at("ion").at("mass_kg").get<double>();
        m.ion.charge = j.at("ion").at("charge_C").get<double>();
        m.validity_radius = j.at("validity_radius_m").get<double>();
        m.amplifier_gain = j.at("amplifier_gain_V_per_Vpp").get<double>();
        auto const& basis = j.at("basis");
        for (auto e : all_electrodes())
            m[e] = entry_from_json(basis.at(label(e)));
        m.validate();
        return m;
    }
    catch (json::exception const& e)
    {
        throw ModelError(std::string("model file: ") + e.what());
    }
}

}  // namespace fibretrap::trap
