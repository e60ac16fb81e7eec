#include <array>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "fibretrap/fieldsolver.hpp"

namespace fibretrap::field {

namespace {

// Axisymmetric harmonic polynomials in (r, z), in increasing degree.
double harmonic(int degree, double r, double z)
{
    double const r2 = r * r;
    double const z2 = z * z;
    switch (degree)
    {
    case 0: return 1;
    case 1: return z;
    case 2: return z2 - 0.5 * r2;
    case 3: return z * (z2 - 1.5 * r2);
    case 4: return z2 * z2 - 3 * z2 * r2 + 0.375 * r2 * r2;
    default: break;
    }
    return 0;
}

}  // namespace

MultipoleEntry extract_multipoles(PotentialGrid const& field,
                                  Eigen::Vector3d const& center,
                                  double fit_radius,
                                  int max_degree)
{
    if (max_degree != 2 && max_degree != 4)
        throw std::invalid_argument("extract_multipoles: max_degree must be 2 or 4");
    if (std::hypot(center.x(), center.y()) > 1e-12)
        throw std::invalid_argument("extract_multipoles: centre must lie on the axis");
    double const h = field.spacing;
    double const zc = center.z();
    if (!(fit_radius >= 2 * h))
        throw std::invalid_argument("extract_multipoles: fit radius spans too few nodes");
    if (fit_radius > field.r(field.nr - 1) || zc - fit_radius < field.z(0)
        || zc + fit_radius > field.z(field.nz - 1))
        throw std::invalid_argument("extract_multipoles: fit ball leaves the grid");

    std::vector<std::array<double, 3>> samples;  // (u, v, value)
    int const reach = static_cast<int>(std::ceil(fit_radius / h)) + 1;
    int const jc = static_cast<int>(std::lround((zc - field.z_min) / h));
    for (int j = std::max(0, jc - reach); j <= std::min(field.nz - 1, jc + reach); ++j)
    {
        for (int i = 0; i <= std::min(field.nr - 1, reach); ++i)
        {
            double const r = field.r(i);
            double const dz = field.z(j) - zc;
            if (r * r + dz * dz > fit_radius * fit_radius * (1 + 1e-12))
                continue;
            if (field.is_dirichlet(i, j))
            {
                throw std::invalid_argument(fmt::format(
                    "extract_multipoles: fit ball of radius {:.3g} m contains "
                    "electrode or boundary nodes",
                    fit_radius));
            }
            samples.push_back({r / fit_radius, dz / fit_radius, field.at(i, j)});
        }
    }
    auto const n = static_cast<Eigen::Index>(samples.size());
    auto const m = static_cast<Eigen::Index>(max_degree + 1);
    if (n < 2 * m)
        throw std::invalid_argument("extract_multipoles: too few nodes in fit ball");

    Eigen::MatrixXd design(n, m);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index k = 0; k < n; ++k)
    {
        auto const [u, v, val] = samples[static_cast<std::size_t>(k)];
        for (Eigen::Index t = 0; t < m; ++t)
            design(k, t) = harmonic(static_cast<int>(t), u, v);
        rhs[k] = val;
    }
    Eigen::VectorXd const coef = design.colPivHouseholderQr().solve(rhs);

    auto coefficient = [&](int degree) {
        return coef[degree] / std::pow(fit_radius, degree);
    };

    MultipoleEntry e;
    e.a0 = coefficient(0);
    e.b = Eigen::Vector3d(0, 0, coefficient(1));
    double const c2 = coefficient(2);
    e.Q = Eigen::Vector3d(-c2, -c2, 2 * c2).asDiagonal();
    if (max_degree == 4)
    {
        e.c3 = coefficient(3);
        e.c4 = coefficient(4);
    }
    e.fit_rms = std::sqrt((design * coef - rhs).squaredNorm() / double(n));
    e.fit_nodes = static_cast<int>(n);
    return e;
}

StackBasis solve_stack_basis(TrapGeometry const& geometry,
                             double spacing,
                             double tolerance,
                             double fit_radius,
                             bool keep_fields)
{
    PotentialGrid const grid = build_axisymmetric_grid(geometry, spacing);
    StackBasis basis;
    for (int id : stack_electrodes())
    {
        RelaxReport report;
        PotentialGrid field = solve_basis_potential(grid, id, tolerance, &report);
        std::string const name = electrode_name(id);
        basis.entries[name]
            = extract_multipoles(field, Eigen::Vector3d::Zero(), fit_radius, 4);
        basis.reports[name] = report;
        if (keep_fields)
            basis.fields[name] = std::move(field);
    }
    return basis;
}

}  // namespace fibretrap::field
