#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace fibretrap::fit {

class FitError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

//! A named scalar derived from fitted parameters (e.g. spectral area).
struct DerivedValue
{
    std::string name;
    double value = 0;
    double error = 0;
};

/*!
 * Outcome of any fit in this module.
 *
 * `covariance` is symmetric positive semi-definite whenever `converged` is
 * set. Derived values carry their own propagated uncertainty.
 */
struct FitResult
{
    std::vector<std::string> names;
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;
    double residual_rms = 0;
    bool converged = false;
    int iterations = 0;
    std::vector<DerivedValue> derived;

    double value(std::string_view name) const;
    double error(std::string_view name) const;
    bool has(std::string_view name) const;
};

//---------------------------------------------------------------------------//
// Damped Gauss-Newton engine
//---------------------------------------------------------------------------//

//! Maps a parameter vector to the (weighted) residual vector.
using ResidualFn = std::function<Eigen::VectorXd(Eigen::VectorXd const&)>;

struct EngineOptions
{
    int max_iterations = 200;
    double param_tolerance = 1e-10;
    double cost_tolerance = 1e-12;
    //! Residuals already divided by absolute per-point sigmas.
    bool absolute_sigma = false;
};

// Per-parameter step sqrt(eps) * max(|p|, 1), scaled by step_scale.
double jacobian_step(double p, double step_scale = 1.0);

// Central-difference Jacobian of the residual function.
Eigen::MatrixXd numeric_jacobian(ResidualFn const& residuals,
                                 Eigen::VectorXd const& params,
                                 double step_scale = 1.0);

FitResult gauss_newton(ResidualFn const& residuals,
                       Eigen::VectorXd const& initial,
                       std::vector<std::string> names,
                       EngineOptions const& options = {});

//! Scalar model y = f(x; p) used by the curve-fitting helpers.
using CurveFn = std::function<double(double, Eigen::VectorXd const&)>;

// Weighted curve fit; empty `sigmas` means unit weights with the covariance
// rescaled by the reduced chi-square.
FitResult fit_curve(CurveFn const& model,
                    std::span<double const> xs,
                    std::span<double const> ys,
                    std::span<double const> sigmas,
                    Eigen::VectorXd const& initial,
                    std::vector<std::string> names,
                    EngineOptions options = {});

//---------------------------------------------------------------------------//
// Built-in models
//---------------------------------------------------------------------------//

// Linear least squares on {x^k}; params named c0..cN (c0 absent when
// through_origin). Derived: r_squared.
FitResult fit_polynomial(std::span<double const> xs,
                         std::span<double const> ys,
                         int degree,
                         bool through_origin,
                         std::span<double const> sigmas = {});

/*!
 * Fit counts = offset + amplitude * cos(f * theta - phase) over phase bins.
 *
 * With `frequency_known` the multiplier f is fixed to 1 and the fit is
 * linear. Derived: signed_amplitude, whose sign is that of
 * cos(phase - reference_phase).
 */
FitResult fit_fixed_frequency_sinusoid(std::span<double const> bin_centers,
                                       std::span<double const> counts,
                                       double reference_phase,
                                       bool frequency_known = true,
                                       std::span<double const> sigmas = {});

// A * exp(-2 (x - x0)^2 / w^2) + B, params amplitude, center, waist, offset.
double gaussian_beam_profile(double x, Eigen::VectorXd const& p);
FitResult fit_gaussian_1d(std::span<double const> xs,
                          std::span<double const> ys,
                          std::span<double const> sigmas = {});

//! Row-major image; pixel (i, j) has its centre at coordinate (i, j).
struct Frame
{
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    double at(int i, int j) const { return pixels[j * width + i]; }
    double& at(int i, int j) { return pixels[j * width + i]; }
};

// Elliptical Gaussian spot; params x0, y0, sx, sy (pixels), amplitude,
// offset. Derived: x0_object, y0_object in units of pixel_pitch.
FitResult fit_gaussian_spot_2d(Frame const& frame, double pixel_pitch);

//---------------------------------------------------------------------------//
// Pseudo-Voigt line shape (Thompson-Cox-Hastings mixing)
//---------------------------------------------------------------------------//

struct VoigtMix
{
    double fwhm = 0;
    double eta = 0;  //!< Lorentzian fraction
};

// sigma: Gaussian standard deviation; gamma: Lorentzian half width.
VoigtMix pseudo_voigt_mix(double sigma, double gamma);
double pseudo_voigt_unit_peak(double x, double sigma, double gamma);
double pseudo_voigt_area(double amplitude, double sigma, double gamma);

// Params center, gaussian_width, lorentzian_width, amplitude, offset.
// Derived: spectral_area (offset excluded).
FitResult fit_pseudo_voigt(std::span<double const> detunings,
                           std::span<double const> counts,
                           std::span<double const> sigmas = {});

struct LineShape
{
    double center = 0;
    double gaussian_width = 0;
    double lorentzian_width = 0;
};

// Linear fit of amplitude and offset for a known line shape, for spectra
// too weak to constrain the widths. Derived: spectral_area.
FitResult fit_pseudo_voigt_fixed_shape(std::span<double const> detunings,
                                       std::span<double const> counts,
                                       LineShape const& shape,
                                       std::span<double const> sigmas = {});

}  // namespace fibretrap::fit
