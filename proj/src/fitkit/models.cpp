#include "fibretrap/fitkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

namespace fibretrap::fit {

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

void require_same_length(std::span<double const> a,
                         std::span<double const> b,
                         std::span<double const> sigmas,
                         char const* who)
{
    if (a.size() != b.size() || (!sigmas.empty() && sigmas.size() != a.size()))
        throw FitError(std::string(who) + ": mismatched data lengths");
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
            throw FitError(std::string(who) + ": non-finite data");
    }
}

}  // namespace

//---------------------------------------------------------------------------//
/*!
 * Weighted linear least squares via column-scaled normal equations.
 *
 * Columns are x^k / s^k with s = max|x|, which keeps the normal matrix well
 * conditioned for the low degrees used here.
 */
FitResult fit_polynomial(std::span<double const> xs,
                         std::span<double const> ys,
                         int degree,
                         bool through_origin,
                         std::span<double const> sigmas)
{
    require_same_length(xs, ys, sigmas, "fit_polynomial");
    if (degree < 0)
        throw FitError("fit_polynomial: negative degree");
    int const first = through_origin ? 1 : 0;
    int const n_par = degree - first + 1;
    std::set<double> distinct(xs.begin(), xs.end());
    if (through_origin)
        distinct.erase(0.0);
    if (n_par <= 0 || static_cast<int>(distinct.size()) < n_par
        || static_cast<int>(xs.size()) <= degree)
        throw FitError("fit_polynomial: insufficient points for degree "
                       + std::to_string(degree));

    double scale = 0;
    for (double x : xs)
        scale = std::max(scale, std::abs(x));
    if (scale == 0)
        scale = 1;

    auto const n = static_cast<Eigen::Index>(xs.size());
    Eigen::MatrixXd design(n, n_par);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        double const w = sigmas.empty() ? 1.0 : 1.0 / sigmas[i];
        double const u = xs[i] / scale;
        double pw = through_origin ? u : 1.0;
        for (int k = 0; k < n_par; ++k)
        {
            design(i, k) = pw * w;
            pw *= u;
        }
        rhs[i] = ys[i] * w;
    }

    Eigen::MatrixXd const normal = design.transpose() * design;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
    double const top = eig.eigenvalues().maxCoeff();
    if (!(eig.eigenvalues().minCoeff() > top * 1e-13))
        throw FitError("fit_polynomial: rank-deficient design matrix");
    Eigen::MatrixXd const inv = eig.eigenvectors()
                                * eig.eigenvalues().cwiseInverse().asDiagonal()
                                * eig.eigenvectors().transpose();
    Eigen::VectorXd scaled = inv * (design.transpose() * rhs);
    // One step of iterative refinement recovers digits lost to the normal
    // equations.
    scaled += inv * (design.transpose() * (rhs - design * scaled));

    FitResult res;
    res.params.resize(n_par);
    Eigen::VectorXd unscale(n_par);
    for (int k = 0; k < n_par; ++k)
    {
        int const power = k + first;
        unscale[k] = std::pow(scale, -power);
        res.params[k] = scaled[k] * unscale[k];
        res.names.push_back("c" + std::to_string(power));
    }

    Eigen::VectorXd const resid = rhs - design * scaled;
    double const dof = std::max<double>(1.0, double(n - n_par));
    double const chi2 = resid.squaredNorm();
    Eigen::MatrixXd cov = unscale.asDiagonal() * inv * unscale.asDiagonal();
    if (sigmas.empty())
        cov *= chi2 / dof;
    res.covariance = 0.5 * (cov + cov.transpose());

    double ss_res = 0;
    double ss_tot = 0;
    double const mean = std::accumulate(ys.begin(), ys.end(), 0.0) / double(n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        double fit = 0;
        double pw = 1;
        for (int p = 0; p <= degree; ++p)
        {
            if (p >= first)
                fit += res.params[p - first] * pw;
            pw *= xs[i];
        }
        ss_res += (ys[i] - fit) * (ys[i] - fit);
        ss_tot += (ys[i] - mean) * (ys[i] - mean);
    }
    res.residual_rms = std::sqrt(ss_res / double(n));
    res.converged = true;
    res.iterations = 1;
    res.derived.push_back(
        {"r_squared", ss_tot > 0 ? 1 - ss_res / ss_tot : 1.0, 0.0});
    return res;
}

//---------------------------------------------------------------------------//
FitResult fit_fixed_frequency_sinusoid(std::span<double const> bin_centers,
                                       std::span<double const> counts,
                                       double reference_phase,
                                       bool frequency_known,
                                       std::span<double const> sigmas)
{
    require_same_length(bin_centers, counts, sigmas, "fit_sinusoid");
    auto const n = bin_centers.size();
    if (n < 8)
        throw FitError("fit_sinusoid: need at least 8 phase bins");
    auto [lo, hi] = std::minmax_element(bin_centers.begin(), bin_centers.end());
    if (*hi - *lo < two_pi * (double(n) - 1) / double(n) - 1e-9)
        throw FitError("fit_sinusoid: bins do not span a full period");

    // Linear stage on {cos, sin, 1}.
    auto const rows = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd design(rows, 3);
    Eigen::VectorXd rhs(rows);
    for (Eigen::Index i = 0; i < rows; ++i)
    {
        double const w = sigmas.empty() ? 1.0 : 1.0 / sigmas[i];
        design(i, 0) = std::cos(bin_centers[i]) * w;
        design(i, 1) = std::sin(bin_centers[i]) * w;
        design(i, 2) = w;
        rhs[i] = counts[i] * w;
    }
    Eigen::MatrixXd const normal = design.transpose() * design;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    Eigen::VectorXd const lin = ldlt.solve(design.transpose() * rhs);
    Eigen::MatrixXd cov_lin = ldlt.solve(Eigen::MatrixXd::Identity(3, 3));
    Eigen::VectorXd const resid = rhs - design * lin;
    if (sigmas.empty())
        cov_lin *= resid.squaredNorm() / std::max<double>(1.0, double(n) - 3);

    double const c = lin[0];
    double const s = lin[1];
    double amplitude = std::hypot(c, s);
    double phase = std::atan2(s, c);
    double const offset = lin[2];

    FitResult res;
    res.names = {"amplitude", "phase", "offset"};
    res.params = Eigen::Vector3d(amplitude, phase, offset);
    // Jacobian of (A, phi, B) with respect to (c, s, B).
    Eigen::Matrix3d jac = Eigen::Matrix3d::Zero();
    if (amplitude > 0)
    {
        jac(0, 0) = c / amplitude;
        jac(0, 1) = s / amplitude;
        jac(1, 0) = -s / (amplitude * amplitude);
        jac(1, 1) = c / (amplitude * amplitude);
    }
    else
    {
        jac(0, 0) = 1;
    }
    jac(2, 2) = 1;
    res.covariance = jac * cov_lin * jac.transpose();
    res.converged = true;
    res.iterations = 1;

    if (!frequency_known)
    {
        CurveFn model = [](double th, Eigen::VectorXd const& p) {
            return p[2] + p[0] * std::cos(p[3] * th - p[1]);
        };
        Eigen::VectorXd init(4);
        init << amplitude, phase, offset, 1.0;
        FitResult nl = fit_curve(model, bin_centers, counts, sigmas, init,
                                 {"amplitude", "phase", "offset", "frequency"});
        if (nl.params[0] < 0)
        {
            nl.params[0] = -nl.params[0];
            nl.params[1] += std::numbers::pi;
        }
        nl.params[1] = std::remainder(nl.params[1], two_pi);
        res = std::move(nl);
        amplitude = res.params[0];
        phase = res.params[1];
    }
    else
    {
        double ss = 0;
        for (std::size_t i = 0; i < n; ++i)
        {
            double const d
                = counts[i] - (offset + amplitude * std::cos(bin_centers[i] - phase));
            ss += d * d;
        }
        res.residual_rms = std::sqrt(ss / double(n));
    }

    double const sign = std::cos(phase - reference_phase) >= 0 ? 1.0 : -1.0;
    res.derived.push_back({"signed_amplitude", sign * amplitude, res.error("amplitude")});
    return res;
}

//---------------------------------------------------------------------------//
double gaussian_beam_profile(double x, Eigen::VectorXd const& p)
{
    double const d = x - p[1];
    return p[0] * std::exp(-2 * d * d / (p[2] * p[2])) + p[3];
}

FitResult fit_gaussian_1d(std::span<double const> xs,
                          std::span<double const> ys,
                          std::span<double const> sigmas)
{
    require_same_length(xs, ys, sigmas, "fit_gaussian_1d");
    if (xs.size() < 5)
        throw FitError("fit_gaussian_1d: need at least 5 points");

    // Moment-based starting point.
    double const base = *std::min_element(ys.begin(), ys.end());
    double const peak = *std::max_element(ys.begin(), ys.end());
    double wsum = 0;
    double mean = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
    {
        wsum += ys[i] - base;
        mean += (ys[i] - base) * xs[i];
    }
    mean = wsum > 0 ? mean / wsum : xs[xs.size() / 2];
    double var = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        var += (ys[i] - base) * (xs[i] - mean) * (xs[i] - mean);
    var = wsum > 0 ? var / wsum : 0;
    auto [xlo, xhi] = std::minmax_element(xs.begin(), xs.end());
    double waist = var > 0 ? 2 * std::sqrt(var) : 0.25 * (*xhi - *xlo);
    if (!(waist > 0))
        waist = 1;

    Eigen::VectorXd init(4);
    init << peak - base, mean, waist, base;
    FitResult res = fit_curve(gaussian_beam_profile, xs, ys, sigmas, init,
                              {"amplitude", "center", "waist", "offset"});
    res.params[2] = std::abs(res.params[2]);
    if (!(peak > base))
        res.converged = false;
    return res;
}

//---------------------------------------------------------------------------//
FitResult fit_gaussian_spot_2d(Frame const& frame, double pixel_pitch)
{
    if (frame.width < 3 || frame.height < 3
        || frame.pixels.size() != std::size_t(frame.width) * frame.height)
        throw FitError("fit_gaussian_spot_2d: malformed frame");

    std::vector<double> sorted = frame.pixels;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    double const median = sorted[sorted.size() / 2];
    std::vector<double> dev(frame.pixels.size());
    std::transform(frame.pixels.begin(), frame.pixels.end(), dev.begin(),
                   [&](double v) { return std::abs(v - median); });
    std::nth_element(dev.begin(), dev.begin() + dev.size() / 2, dev.end());
    double const noise = std::max({1.4826 * dev[dev.size() / 2],
                                   std::sqrt(std::max(median, 0.0)), 1e-12});

    auto const max_it = std::max_element(frame.pixels.begin(), frame.pixels.end());
    double const peak = *max_it;
    if (!(peak - median >= 5 * noise))
        throw FitError("fit_gaussian_spot_2d: no significant spot in frame");

    // Moments of the above-median signal.
    double w = 0;
    double mx = 0;
    double my = 0;
    for (int j = 0; j < frame.height; ++j)
    {
        for (int i = 0; i < frame.width; ++i)
        {
            double const s = std::max(0.0, frame.at(i, j) - median);
            w += s;
            mx += s * i;
            my += s * j;
        }
    }
    mx /= w;
    my /= w;
    double vx = 0;
    double vy = 0;
    for (int j = 0; j < frame.height; ++j)
    {
        for (int i = 0; i < frame.width; ++i)
        {
            double const s = std::max(0.0, frame.at(i, j) - median);
            vx += s * (i - mx) * (i - mx);
            vy += s * (j - my) * (j - my);
        }
    }
    double const sx0 = std::max(0.5, std::sqrt(vx / w));
    double const sy0 = std::max(0.5, std::sqrt(vy / w));

    auto const n = static_cast<Eigen::Index>(frame.pixels.size());
    std::vector<double> weights(frame.pixels.size());
    for (std::size_t k = 0; k < weights.size(); ++k)
        weights[k] = 1.0 / std::sqrt(std::max(frame.pixels[k], 1.0));

    auto residuals = [&](Eigen::VectorXd const& p) {
        Eigen::VectorXd r(n);
        double const ax = 0.5 / (p[2] * p[2]);
        double const ay = 0.5 / (p[3] * p[3]);
        for (int j = 0; j < frame.height; ++j)
        {
            double const dy = j - p[1];
            double const ey = std::exp(-ay * dy * dy);
            for (int i = 0; i < frame.width; ++i)
            {
                double const dx = i - p[0];
                double const model = p[4] * std::exp(-ax * dx * dx) * ey + p[5];
                auto const k = static_cast<std::size_t>(j * frame.width + i);
                r[static_cast<Eigen::Index>(k)]
                    = (frame.pixels[k] - model) * weights[k];
            }
        }
        return r;
    };

    Eigen::VectorXd init(6);
    init << mx, my, sx0, sy0, peak - median, median;
    EngineOptions opts;
    opts.absolute_sigma = true;
    FitResult res = gauss_newton(residuals, init,
                                 {"x0", "y0", "sx", "sy", "amplitude", "offset"},
                                 opts);
    res.params[2] = std::abs(res.params[2]);
    res.params[3] = std::abs(res.params[3]);
    res.derived.push_back({"x0_object", res.params[0] * pixel_pitch,
                           res.error("x0") * pixel_pitch});
    res.derived.push_back({"y0_object", res.params[1] * pixel_pitch,
                           res.error("y0") * pixel_pitch});
    return res;
}

}  // namespace fibretrap::fit
