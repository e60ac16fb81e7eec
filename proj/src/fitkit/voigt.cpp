#include "fibretrap/fitkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fibretrap::fit {

namespace {

double const fwhm_per_sigma = 2 * std::sqrt(2 * std::numbers::ln2);

// Peak heights of the unit-area Lorentzian and Gaussian with FWHM f.
double lorentz_peak(double f)
{
    return 2 / (std::numbers::pi * f);
}
double gauss_peak(double f)
{
    return 2 * std::sqrt(std::numbers::ln2 / std::numbers::pi) / f;
}

}  // namespace

VoigtMix pseudo_voigt_mix(double sigma, double gamma)
{
    double const fg = fwhm_per_sigma * std::abs(sigma);
    double const fl = 2 * std::abs(gamma);
    double const f5 = std::pow(fg, 5) + 2.69269 * std::pow(fg, 4) * fl
                      + 2.42843 * std::pow(fg, 3) * fl * fl
                      + 4.47163 * fg * fg * std::pow(fl, 3)
                      + 0.07842 * fg * std::pow(fl, 4) + std::pow(fl, 5);
    VoigtMix mix;
    mix.fwhm = std::pow(f5, 0.2);
    if (!(mix.fwhm > 0))
        return mix;
    double const ratio = fl / mix.fwhm;
    mix.eta = std::clamp(1.36603 * ratio - 0.47719 * ratio * ratio
                             + 0.11116 * ratio * ratio * ratio,
                         0.0, 1.0);
    return mix;
}

double pseudo_voigt_unit_peak(double x, double sigma, double gamma)
{
    auto const mix = pseudo_voigt_mix(sigma, gamma);
    if (!(mix.fwhm > 0))
        return x == 0 ? 1.0 : 0.0;
    double const f = mix.fwhm;
    double const u = 2 * x / f;
    double const lor = lorentz_peak(f) / (1 + u * u);
    double const gau = gauss_peak(f) * std::exp(-std::numbers::ln2 * u * u);
    double const peak = mix.eta * lorentz_peak(f) + (1 - mix.eta) * gauss_peak(f);
    return (mix.eta * lor + (1 - mix.eta) * gau) / peak;
}

double pseudo_voigt_area(double amplitude, double sigma, double gamma)
{
    auto const mix = pseudo_voigt_mix(sigma, gamma);
    if (!(mix.fwhm > 0))
        return 0;
    double const f = mix.fwhm;
    return amplitude / (mix.eta * lorentz_peak(f) + (1 - mix.eta) * gauss_peak(f));
}

//---------------------------------------------------------------------------//
FitResult fit_pseudo_voigt(std::span<double const> detunings,
                           std::span<double const> counts,
                           std::span<double const> sigmas)
{
    if (detunings.size() != counts.size())
        throw FitError("fit_pseudo_voigt: mismatched data lengths");
    if (detunings.size() < 9)
        throw FitError("fit_pseudo_voigt: need at least 9 points across the line");

    // Offset from the wings, width from the half-maximum crossings.
    std::size_t const n = detunings.size();
    double const offset0 = std::min(counts.front(), counts.back());
    auto const peak_it = std::max_element(counts.begin(), counts.end());
    auto const ipk = static_cast<std::size_t>(peak_it - counts.begin());
    double const amp0 = *peak_it - offset0;
    double const half = offset0 + 0.5 * amp0;
    std::size_t lo = ipk;
    while (lo > 0 && counts[lo] > half)
        --lo;
    std::size_t hi = ipk;
    while (hi + 1 < n && counts[hi] > half)
        ++hi;
    double fwhm0 = std::abs(detunings[hi] - detunings[lo]);
    if (!(fwhm0 > 0))
        fwhm0 = std::abs(detunings.back() - detunings.front()) / 4;

    CurveFn model = [](double x, Eigen::VectorXd const& p) {
        return p[4] + p[3] * pseudo_voigt_unit_peak(x - p[0], p[1], p[2]);
    };
    Eigen::VectorXd init(5);
    init << detunings[ipk], 0.5 * fwhm0 / fwhm_per_sigma, 0.25 * fwhm0, amp0,
        offset0;
    FitResult res = fit_curve(model, detunings, counts, sigmas, init,
                              {"center", "gaussian_width", "lorentzian_width",
                               "amplitude", "offset"});
    res.params[1] = std::abs(res.params[1]);
    res.params[2] = std::abs(res.params[2]);

    // Area and its covariance-propagated uncertainty.
    auto area_of = [](Eigen::VectorXd const& p) {
        return pseudo_voigt_area(p[3], p[1], p[2]);
    };
    double const area = area_of(res.params);
    Eigen::VectorXd grad(5);
    Eigen::VectorXd probe = res.params;
    for (Eigen::Index k = 0; k < 5; ++k)
    {
        double const h = jacobian_step(res.params[k]);
        probe[k] = res.params[k] + h;
        double const up = area_of(probe);
        probe[k] = res.params[k] - h;
        double const down = area_of(probe);
        probe[k] = res.params[k];
        grad[k] = (up - down) / (2 * h);
    }
    double const var = grad.dot(res.covariance * grad);
    res.derived.push_back({"spectral_area", area, std::sqrt(std::max(0.0, var))});
    return res;
}

FitResult fit_pseudo_voigt_fixed_shape(std::span<double const> detunings,
                                       std::span<double const> counts,
                                       LineShape const& shape,
                                       std::span<double const> sigmas)
{
    if (detunings.size() != counts.size())
        throw FitError("fit_pseudo_voigt_fixed_shape: mismatched data lengths");
    if (detunings.size() < 3)
        throw FitError("fit_pseudo_voigt_fixed_shape: need at least 3 points");
    if (!(pseudo_voigt_mix(shape.gaussian_width, shape.lorentzian_width).fwhm > 0))
        throw FitError("fit_pseudo_voigt_fixed_shape: line shape has zero width");

    CurveFn model = [shape](double x, Eigen::VectorXd const& p) {
        return p[1] + p[0] * pseudo_voigt_unit_peak(x - shape.center, shape.gaussian_width,
                                                    shape.lorentzian_width);
    };
    auto const [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    Eigen::VectorXd init(2);
    init << *hi - *lo, *lo;
    FitResult res = fit_curve(model, detunings, counts, sigmas, init, {"amplitude", "offset"});
    double const per_amplitude = pseudo_voigt_area(1, shape.gaussian_width, shape.lorentzian_width);
    res.derived.push_back({"spectral_area", res.params[0] * per_amplitude,
                           std::sqrt(std::max(0.0, res.covariance(0, 0))) * per_amplitude});
    return res;
}

}  // namespace fibretrap::fit
