#include "fibretrap/fitkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

namespace fibretrap::fit {

namespace {

bool all_finite(Eigen::VectorXd const& v)
{
    return v.allFinite();
}

// Inverse of a symmetric PSD matrix; NaN-filled when singular.
Eigen::MatrixXd safe_inverse(Eigen::MatrixXd const& a, bool& ok)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    auto const& ev = eig.eigenvalues();
    double const top = ev.cwiseAbs().maxCoeff();
    ok = top > 0 && ev.minCoeff() > top * 1e-14;
    if (!ok)
    {
        return Eigen::MatrixXd::Constant(a.rows(), a.cols(),
                                         std::numeric_limits<double>::quiet_NaN());
    }
    Eigen::MatrixXd inv = eig.eigenvectors() * ev.cwiseInverse().asDiagonal()
                          * eig.eigenvectors().transpose();
    return 0.5 * (inv + inv.transpose());
}

}  // namespace

//---------------------------------------------------------------------------//
double FitResult::value(std::string_view name) const
{
    for (std::size_t i = 0; i < names.size(); ++i)
    {
        if (names[i] == name)
            return params[static_cast<Eigen::Index>(i)];
    }
    for (auto const& d : derived)
    {
        if (d.name == name)
            return d.value;
    }
    throw FitError("no fitted quantity named '" + std::string(name) + "'");
}

double FitResult::error(std::string_view name) const
{
    for (std::size_t i = 0; i < names.size(); ++i)
    {
        if (names[i] == name)
        {
            auto k = static_cast<Eigen::Index>(i);
            return std::sqrt(std::max(0.0, covariance(k, k)));
        }
    }
    for (auto const& d : derived)
    {
        if (d.name == name)
            return d.error;
    }
    throw FitError("no fitted quantity named '" + std::string(name) + "'");
}

bool FitResult::has(std::string_view name) const
{
    return std::find(names.begin(), names.end(), name) != names.end()
           || std::any_of(derived.begin(), derived.end(),
                          [&](auto const& d) { return d.name == name; });
}

//---------------------------------------------------------------------------//
double jacobian_step(double p, double step_scale)
{
    static double const root_eps
        = std::sqrt(std::numeric_limits<double>::epsilon());
    return step_scale * root_eps * std::max(std::abs(p), 1.0);
}

Eigen::MatrixXd numeric_jacobian(ResidualFn const& residuals,
                                 Eigen::VectorXd const& params,
                                 double step_scale)
{
    Eigen::VectorXd probe = params;
    Eigen::MatrixXd jac;
    for (Eigen::Index k = 0; k < params.size(); ++k)
    {
        double const h = jacobian_step(params[k], step_scale);
        probe[k] = params[k] + h;
        Eigen::VectorXd const up = residuals(probe);
        probe[k] = params[k] - h;
        Eigen::VectorXd const down = residuals(probe);
        probe[k] = params[k];
        if (jac.size() == 0)
            jac.resize(up.size(), params.size());
        jac.col(k) = (up - down) / (2 * h);
    }
    return jac;
}

//---------------------------------------------------------------------------//
/*!
 * Levenberg-damped Gauss-Newton.
 *
 * Each iteration first tries the undamped step; the damping factor grows by
 * 10x on every rejected step and decays on acceptance. The result carries
 * the best parameters seen even when the iteration cap is hit.
 */
FitResult gauss_newton(ResidualFn const& residuals,
                       Eigen::VectorXd const& initial,
                       std::vector<std::string> names,
                       EngineOptions const& options)
{
    if (!all_finite(initial))
        throw FitError("initial parameters are not finite");

    FitResult result;
    result.names = std::move(names);
    Eigen::VectorXd p = initial;
    Eigen::VectorXd r = residuals(p);
    if (!all_finite(r))
        throw FitError("residuals at the initial point are not finite "
                       "(NaN or infinite data?)");
    auto const n_data = r.size();
    auto const n_par = p.size();
    double cost = 0.5 * r.squaredNorm();

    double lambda = 0;
    bool converged = false;
    bool singular = false;
    int it = 0;
    for (it = 1; it <= options.max_iterations && !converged; ++it)
    {
        Eigen::MatrixXd const jac = numeric_jacobian(residuals, p);
        Eigen::MatrixXd const jtj = jac.transpose() * jac;
        Eigen::VectorXd const grad = jac.transpose() * r;
        Eigen::VectorXd const diag = jtj.diagonal();
        if ((diag.array() <= 0).any())
        {
            singular = true;
            break;
        }

        bool accepted = false;
        while (!accepted)
        {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * diag;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
            Eigen::VectorXd step = ldlt.solve(-grad);
            bool const solved = ldlt.info() == Eigen::Success
                                && all_finite(step)
                                && ldlt.isPositive();
            if (solved)
            {
                Eigen::VectorXd trial = p + step;
                Eigen::VectorXd r_trial = residuals(trial);
                double const c_trial = all_finite(r_trial)
                                           ? 0.5 * r_trial.squaredNorm()
                                           : std::numeric_limits<double>::infinity();
                if (c_trial <= cost)
                {
                    double const drop = cost - c_trial;
                    bool small_step = true;
                    for (Eigen::Index k = 0; k < n_par; ++k)
                    {
                        if (std::abs(step[k])
                            > options.param_tolerance * std::abs(trial[k]))
                            small_step = false;
                    }
                    bool const stagnant = drop <= options.cost_tolerance * cost
                                          || c_trial == 0;
                    p = std::move(trial);
                    r = std::move(r_trial);
                    cost = c_trial;
                    lambda = lambda < 1e-12 ? 0 : lambda / 10;
                    accepted = true;
                    converged = small_step || stagnant;
                    continue;
                }
            }
            lambda = lambda == 0 ? 1e-4 : lambda * 10;
            if (lambda > 1e16)
            {
                // No descent direction left: the current point is stationary
                // to working precision.
                converged = true;
                break;
            }
        }
    }

    result.params = p;
    result.iterations = std::min(it - 1, options.max_iterations);
    result.residual_rms = std::sqrt(r.squaredNorm() / double(n_data));

    Eigen::MatrixXd const jac = numeric_jacobian(residuals, p);
    bool invertible = false;
    result.covariance = safe_inverse(jac.transpose() * jac, invertible);
    if (invertible && !options.absolute_sigma)
    {
        double const dof = std::max<double>(1.0, double(n_data - n_par));
        result.covariance *= r.squaredNorm() / dof;
    }
    result.converged = converged && invertible && !singular;
    return result;
}

//---------------------------------------------------------------------------//
FitResult fit_curve(CurveFn const& model,
                    std::span<double const> xs,
                    std::span<double const> ys,
                    std::span<double const> sigmas,
                    Eigen::VectorXd const& initial,
                    std::vector<std::string> names,
                    EngineOptions options)
{
    if (xs.size() != ys.size() || (!sigmas.empty() && sigmas.size() != ys.size()))
        throw FitError("fit_curve: mismatched data lengths");
    for (std::size_t i = 0; i < xs.size(); ++i)
    {
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])
            || (!sigmas.empty() && !(sigmas[i] > 0)))
            throw FitError("fit_curve: non-finite data or non-positive sigma");
    }
    options.absolute_sigma = !sigmas.empty();

    // Canonical point order: the numeric Jacobian's rounding noise otherwise
    // makes the converged point depend on the input order at the 1e-9 level.
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto sigma_at = [&](std::size_t i) { return sigmas.empty() ? 1.0 : sigmas[i]; };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tuple(xs[a], ys[a], sigma_at(a)) < std::tuple(xs[b], ys[b], sigma_at(b));
    });
    auto residuals = [&](Eigen::VectorXd const& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(xs.size()));
        for (std::size_t k = 0; k < order.size(); ++k)
        {
            std::size_t const i = order[k];
            r[static_cast<Eigen::Index>(k)] = (ys[i] - model(xs[i], p)) / sigma_at(i);
        }
        return r;
    };
    FitResult res = gauss_newton(residuals, initial, std::move(names), options);

    double ss = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
    {
        double const d = ys[i] - model(xs[i], res.params);
        ss += d * d;
    }
    res.residual_rms = std::sqrt(ss / double(xs.size()));
    return res;
}

}  // namespace fibretrap::fit
