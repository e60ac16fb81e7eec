#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "discrete.hpp"

namespace fibretrap::servo {

namespace {

double const two_pi = 2 * std::numbers::pi;

}  // namespace

cplx Biquad::response(double f_hz, double sample_rate) const
{
    cplx const zi = std::polar(1.0, -two_pi * f_hz / sample_rate);
    return (b0 + zi * (b1 + zi * b2)) / (1.0 + zi * (a1 + zi * a2));
}

bool Biquad::stable() const
{
    // Jury conditions for 1 + a1 z^-1 + a2 z^-2.
    return std::abs(a2) < 1 && std::abs(a1) < 1 + a2;
}

cplx LoopFilter::response(double f_hz) const
{
    double const t = 1 / sample_rate;
    cplx const zi = std::polar(1.0, -two_pi * f_hz * t);
    cplx h = kp + ki * t / 2 * (1.0 + zi) / (1.0 - zi);
    for (auto const& s : sections)
        h *= s.response(f_hz, sample_rate);
    return h;
}

void LoopFilter::validate(PlantModel const* plant) const
{
    if (!(sample_rate > 0))
        throw ServoError("sample rate must be positive");
    for (std::size_t i = 0; i < sections.size(); ++i)
    {
        if (!sections[i].stable())
            throw ServoError(fmt::format("filter section {} is unstable", i));
    }
    if (plant && !plant->resonances.empty()
        && sample_rate < 100 * plant->resonances.back().frequency_hz)
        throw ServoError("sample rate must be at least 100x the highest resonance");
}

LoopFilter compose_loop_filter(FilterSpec const& spec)
{
    if (!(spec.sample_rate > 0))
        throw ServoError("sample rate must be positive");
    if (!std::isfinite(spec.kp) || !std::isfinite(spec.ki))
        throw ServoError("PI gains must be finite");
    LoopFilter f;
    f.sample_rate = spec.sample_rate;
    f.kp = spec.kp;
    f.ki = spec.ki;
    double const nyquist = spec.sample_rate / 2;
    for (auto const& st : spec.stages)
    {
        if (!(st.f0_hz > 0) || !(st.f0_hz < nyquist / 4))
            throw ServoError(fmt::format("stage corner {:g} Hz must lie below a quarter of Nyquist",
                                         st.f0_hz));
        if (!(st.q > 0))
            throw ServoError("stage quality factor must be positive");
        double const w = two_pi * st.f0_hz;
        double w_num = w;
        if (st.g_hp > 0 && st.g_lp > 0)
            w_num = w * std::sqrt(st.g_lp / st.g_hp);
        auto const b = detail::bilinear(st.g_hp, st.g_bp * w / st.q, st.g_lp * w * w, 1, w / st.q,
                                        w * w, w_num, w, spec.sample_rate);
        if (!b.stable())
            throw ServoError(fmt::format("stage at {:g} Hz is unstable", st.f0_hz));
        f.sections.push_back(b);
    }
    return f;
}

FilterSpec reference_filter_spec()
{
    FilterSpec s;
    // Inverse of a resonance: poles at the plant zero, zeros at the plant pole.
    auto inverse = [](Resonance const& r) {
        double const ratio = 1 / (1 + r.coupling);
        return FilterStage{r.frequency_hz * (1 + r.coupling), r.q, ratio * ratio, ratio, 1};
    };
    auto const plant = PlantModel::reference();
    for (auto const& r : plant.resonances)
        s.stages.push_back(inverse(r));
    s.stages.push_back({20e3, 0.7071067811865476, 1, 0, 0});
    s.kp = 0.04;
    s.ki = s.kp * two_pi * 1.5e3;
    s.sample_rate = 1e6;
    return s;
}

double linewidth_length_nm(double cavity_length, double wavelength, double linewidth_hz)
{
    if (!(cavity_length > 0) || !(wavelength > 0) || !(linewidth_hz > 0))
        throw ServoError("cavity length, wavelength and linewidth must be positive");
    double const fsr = 299792458.0 / (2 * cavity_length);
    return wavelength / 2 * linewidth_hz / fsr * 1e9;
}

cplx open_loop_response(PlantModel const& plant,
                        LoopFilter const& filter,
                        double linewidth_nm,
                        double f_hz)
{
    cplx const delay = std::polar(1.0, -two_pi * f_hz / filter.sample_rate);
    return plant_frequency_response(plant, f_hz) * filter.response(f_hz) * delay / linewidth_nm;
}

Margins loop_margins(PlantModel const& plant, LoopFilter const& filter, double linewidth_nm)
{
    plant.validate();
    filter.validate(&plant);
    if (!(linewidth_nm > 0))
        throw ServoError("linewidth must be positive");
    auto loop = [&](double lf) { return open_loop_response(plant, filter, linewidth_nm, std::exp(lf)); };
    double const lo = std::log(0.1);
    double const hi = std::log(0.45 * filter.sample_rate);
    int const n = 20000;
    auto bisect = [&](auto g, double a, double b) {
        double ga = g(a);
        for (int it = 0; it < 80; ++it)
        {
            double const m = 0.5 * (a + b);
            double const gm = g(m);
            if ((gm > 0) == (ga > 0))
            {
                a = m;
                ga = gm;
            }
            else
            {
                b = m;
            }
        }
        return 0.5 * (a + b);
    };
    auto mag = [&](double lf) { return std::abs(loop(lf)) - 1; };
    auto imag = [&](double lf) { return loop(lf).imag(); };

    Margins m;
    m.phase_margin_deg = std::numeric_limits<double>::infinity();
    bool crossed = false;
    double last_unity = lo;
    std::vector<std::pair<double, double>> phase_crossings;
    double prev_lf = lo;
    cplx prev = loop(lo);
    for (int i = 1; i <= n; ++i)
    {
        double const lf = lo + (hi - lo) * i / n;
        cplx const cur = loop(lf);
        if ((std::abs(prev) > 1) != (std::abs(cur) > 1))
        {
            double const x = bisect(mag, prev_lf, lf);
            double const pm = 180 - std::abs(std::arg(loop(x))) * 180 / std::numbers::pi;
            m.phase_margin_deg = std::min(m.phase_margin_deg, pm);
            last_unity = x;
            crossed = true;
        }
        if ((prev.imag() > 0) != (cur.imag() > 0) && (prev.real() < 0 || cur.real() < 0))
        {
            double const x = bisect(imag, prev_lf, lf);
            if (loop(x).real() < 0)
                phase_crossings.emplace_back(x, std::abs(loop(x)));
        }
        prev = cur;
        prev_lf = lf;
    }
    if (!crossed)
        throw ServoError("open loop has no unity-gain crossing");
    m.unity_gain_hz = std::exp(last_unity);
    m.gain_margin_db = std::numeric_limits<double>::infinity();
    for (auto const& [x, a] : phase_crossings)
    {
        if (x > last_unity)
            m.gain_margin_db = std::min(m.gain_margin_db, -20 * std::log10(a));
    }
    return m;
}

namespace detail {

Controller::Controller(LoopFilter const& f)
    : kp(f.kp), ki_half_t(f.ki / f.sample_rate / 2)
{
    for (auto const& s : f.sections)
        sections.stages.push_back({s});
}

}  // namespace detail

}  // namespace fibretrap::servo
