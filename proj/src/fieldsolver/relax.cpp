#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "fibretrap/fieldsolver.hpp"

namespace fibretrap::field {

namespace {

// Radial stencil weights for the discrete (1/r) d/dr (r d/dr) operator.
struct RadialWeights
{
    std::vector<double> plus;
    std::vector<double> minus;
};

RadialWeights radial_weights(int nr)
{
    RadialWeights w;
    w.plus.assign(nr, 0.0);
    w.minus.assign(nr, 0.0);
    for (int i = 1; i < nr; ++i)
    {
        w.plus[i] = 1 + 0.5 / i;
        w.minus[i] = 1 - 0.5 / i;
    }
    return w;
}

// Value the stencil wants at a free node.
inline double stencil_average(PotentialGrid const& g, RadialWeights const& w,
                              int i, int j)
{
    double const up = g.values[g.index(i, j + 1)];
    double const dn = g.values[g.index(i, j - 1)];
    if (i == 0)
    {
        // On the axis the radial Laplacian is 4 (phi_1 - phi_0) / h^2.
        return (4 * g.values[g.index(1, j)] + up + dn) / 6;
    }
    return 0.25
           * (w.plus[i] * g.values[g.index(i + 1, j)]
              + w.minus[i] * g.values[g.index(i - 1, j)] + up + dn);
}

void check_free_nodes_interior(PotentialGrid const& g)
{
    for (int j = 0; j < g.nz; ++j)
    {
        for (int i = 0; i < g.nr; ++i)
        {
            bool const edge = i == g.nr - 1 || j == 0 || j == g.nz - 1;
            if (edge && !g.is_dirichlet(i, j))
                throw SolverError("relax: free node on the grid edge", 0);
        }
    }
}

}  // namespace

double laplace_residual(PotentialGrid const& g)
{
    RadialWeights const w = radial_weights(g.nr);
    double worst = 0;
    for (int j = 1; j < g.nz - 1; ++j)
    {
        for (int i = 0; i < g.nr - 1; ++i)
        {
            if (g.is_dirichlet(i, j))
                continue;
            worst = std::max(worst, std::abs(stencil_average(g, w, i, j) - g.at(i, j)));
        }
    }
    return worst;
}

RelaxReport relax(PotentialGrid& g, RelaxOptions const& options)
{
    if (!(options.tolerance > 0 && options.tolerance < 1))
        throw SolverError("relax: tolerance must lie in (0, 1)", 0);
    if (g.nr < 3 || g.nz < 3 || g.values.size() != std::size_t(g.nr) * g.nz
        || g.owner.size() != g.values.size())
        throw SolverError("relax: malformed grid", 0);
    check_free_nodes_interior(g);

    RelaxReport report;
    double scale = 0;
    for (std::size_t k = 0; k < g.values.size(); ++k)
    {
        if (g.owner[k] >= 0)
            scale = std::max(scale, std::abs(g.values[k]));
    }
    if (scale == 0)
    {
        for (std::size_t k = 0; k < g.values.size(); ++k)
        {
            if (g.owner[k] < 0)
                g.values[k] = 0;
        }
        return report;
    }

    double omega = options.omega;
    if (omega == 0)
    {
        double const rho = 0.5 * (std::cos(std::numbers::pi / g.nr)
                                  + std::cos(std::numbers::pi / g.nz));
        omega = 2 / (1 + std::sqrt(1 - rho * rho));
    }
    if (!(omega > 0 && omega < 2))
        throw SolverError("relax: over-relaxation factor must lie in (0, 2)", 0);
    report.omega = omega;

    RadialWeights const w = radial_weights(g.nr);
    double const bound = options.tolerance * scale;
    // Contraction rate estimated over a window of sweeps.
    int const window = 50;
    std::deque<double> history;

    for (long sweep = 1; sweep <= options.max_sweeps; ++sweep)
    {
        double max_update = 0;
        for (int colour = 0; colour < 2; ++colour)
        {
            for (int j = 1; j < g.nz - 1; ++j)
            {
                for (int i = (j + colour) % 2; i < g.nr - 1; i += 2)
                {
                    std::size_t const k = g.index(i, j);
                    if (g.owner[k] >= 0)
                        continue;
                    double const delta
                        = omega * (stencil_average(g, w, i, j) - g.values[k]);
                    g.values[k] += delta;
                    max_update = std::max(max_update, std::abs(delta));
                }
            }
        }
        report.sweeps = sweep;
        report.max_update = max_update;

        history.push_back(max_update);
        if (static_cast<int>(history.size()) > window + 1)
            history.pop_front();
        if (max_update >= bound)
            continue;
        if (max_update == 0)
            break;
        if (static_cast<int>(history.size()) <= window)
            continue;
        double const rate = std::pow(max_update / history.front(), 1.0 / window);
        if (!(rate < 1))
            continue;
        double const remaining = max_update * rate / (1 - rate);
        if (remaining >= bound)
            continue;
        report.residual = laplace_residual(g);
        if (report.residual < bound)
            return report;
    }
    report.residual = laplace_residual(g);
    throw SolverError(fmt::format("relax: no convergence after {} sweeps "
                                  "(last update {:.3g}, residual {:.3g})",
                                  report.sweeps, report.max_update, report.residual),
                      report.residual);
}

PotentialGrid solve_basis_potential(PotentialGrid const& grid,
                                    int electrode,
                                    double tolerance,
                                    RelaxReport* report)
{
    if (electrode <= 0 || grid.count_owner(electrode) == 0)
        throw SolverError(fmt::format("no electrode with id {} in grid", electrode), 0);
    PotentialGrid field = grid;
    for (std::size_t k = 0; k < field.values.size(); ++k)
        field.values[k] = field.owner[k] == electrode ? 1.0 : 0.0;
    RelaxOptions opts;
    opts.tolerance = tolerance;
    RelaxReport const r = relax(field, opts);
    if (report)
        *report = r;
    return field;
}

}  // namespace fibretrap::field
