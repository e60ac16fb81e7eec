#include "doctest.h"

#include <cmath>
#include <algorithm>
#include <cstring>
#include <sstream>

#include "fibretrap/fieldsolver.hpp"

using namespace fibretrap::field;

namespace {

// Coaxial capacitor between a 1 V rod of radius r1 and a grounded shell r2;
// the end caps carry the analytic profile so the exact solution is
// ln(r2/r)/ln(r2/r1) everywhere in between.
double coaxial_max_error(double h)
{
    double const r1 = 0.25e-3;
    double const r2 = 1.0e-3;
    PotentialGrid g = make_box_grid(r2, r2 / 4, h);
    auto exact = [&](double r) { return std::log(r2 / r) / std::log(r2 / r1); };
    for (int j = 0; j < g.nz; ++j)
    {
        for (int i = 0; i < g.nr; ++i)
        {
            double const r = g.r(i);
            if (r <= r1 * (1 + 1e-12))
            {
                g.owner[g.index(i, j)] = 1;
                g.at(i, j) = 1;
            }
            else if (g.is_dirichlet(i, j))
            {
                g.at(i, j) = exact(r);
            }
        }
    }
    RelaxOptions opts;
    opts.tolerance = 1e-13;
    relax(g, opts);
    double worst = 0;
    for (int j = 0; j < g.nz; ++j)
    {
        for (int i = 0; i < g.nr; ++i)
        {
            if (!g.is_dirichlet(i, j))
                worst = std::max(worst, std::abs(g.at(i, j) - exact(g.r(i))));
        }
    }
    return worst;
}

// Equal bit patterns, with +0 and -0 identified.
bool bitwise_equal(double a, double b)
{
    if (a == 0 && b == 0)
        return true;
    return std::memcmp(&a, &b, sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("grid resolves the tip gap")
{
    TrapGeometry geo;
    auto g = build_axisymmetric_grid(geo, 10e-6);
    CHECK(nodes_across_gap(g, geo) >= 35);
    CHECK(geo.cavity_length() == doctest::Approx(370e-6));
}

TEST_CASE("coarse grid is rejected")
{
    TrapGeometry geo;
    CHECK_THROWS_WITH_AS(build_axisymmetric_grid(geo, geo.tip_gap / 5),
                         doctest::Contains("grid too coarse"), GeometryError);
}

TEST_CASE("invalid geometry is rejected")
{
    TrapGeometry geo;
    geo.inner_electrode_outer_radius = 50e-6;
    CHECK_THROWS_AS(geo.validate(), GeometryError);
    geo = TrapGeometry{};
    geo.tip_gap = -1;
    CHECK_THROWS_AS(geo.validate(), GeometryError);
}

TEST_CASE("Dirichlet census matches an integer rasterization")
{
    TrapGeometry geo;
    auto g = build_axisymmetric_grid(geo, 5e-6);

    // Independent pass in integer micrometres.
    long electrode = 0;
    long boundary = 0;
    for (long z = -1200; z <= 1200; z += 5)
    {
        for (long r = 0; r <= 1200; r += 5)
        {
            long const az = z < 0 ? -z : z;
            bool const in_inner = az >= 175 && r >= 100 && r <= 150;
            bool const in_outer = az >= 175 && r >= 250 && r <= 400;
            if (in_inner || in_outer)
                ++electrode;
            else if (r == 1200 || az == 1200)
                ++boundary;
        }
    }
    CHECK(g.dirichlet_count() == std::size_t(electrode + boundary));
    CHECK(g.count_owner(domain_boundary) == std::size_t(boundary));
    CHECK(g.count_owner(inner_upper_id) == g.count_owner(inner_lower_id));
}

TEST_CASE("enclosing 1 V boundary gives a uniform interior")
{
    auto g = make_box_grid(200e-6, 200e-6, 10e-6);
    for (std::size_t k = 0; k < g.values.size(); ++k)
    {
        if (g.owner[k] >= 0)
            g.values[k] = 1;
    }
    relax(g);
    for (double v : g.values)
        CHECK(v == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("coaxial capacitor converges at second order")
{
    double const r2 = 1.0e-3;
    double const e1 = coaxial_max_error(r2 / 40);
    double const e2 = coaxial_max_error(r2 / 80);
    double const e3 = coaxial_max_error(r2 / 160);
    CHECK(e1 / e2 >= 3.5);
    CHECK(e2 / e3 >= 3.5);
    double const order = std::log2(e2 / e3);
    CHECK(order >= 1.8);
    CHECK(order <= 2.2);
}

TEST_CASE("solution satisfies the residual bound and keeps Dirichlet nodes")
{
    TrapGeometry geo;
    auto grid = build_axisymmetric_grid(geo, 10e-6);
    RelaxReport report;
    auto field = solve_basis_potential(grid, inner_upper_id, 1e-8, &report);
    CHECK(report.residual <= 1e-8);
    CHECK(laplace_residual(field) <= 1e-8);
    for (std::size_t k = 0; k < field.values.size(); ++k)
    {
        if (field.owner[k] == inner_upper_id)
            CHECK(field.values[k] == 1.0);
        else if (field.owner[k] >= 0)
            CHECK(field.values[k] == 0.0);
    }
}

TEST_CASE("negated boundary gives the exactly negated field")
{
    TrapGeometry geo;
    auto grid = build_axisymmetric_grid(geo, 10e-6);
    auto pos = grid;
    auto neg = grid;
    for (std::size_t k = 0; k < grid.values.size(); ++k)
    {
        pos.values[k] = grid.owner[k] == outer_pair_id ? 1.0 : 0.0;
        neg.values[k] = grid.owner[k] == outer_pair_id ? -1.0 : 0.0;
    }
    relax(pos);
    relax(neg);
    bool all = true;
    for (std::size_t k = 0; k < pos.values.size(); ++k)
        all = all && bitwise_equal(neg.values[k], -pos.values[k]);
    CHECK(all);
}

TEST_CASE("superposition holds within twice the tolerance")
{
    TrapGeometry geo;
    auto grid = build_axisymmetric_grid(geo, 10e-6);
    double const tol = 1e-8;
    auto a = solve_basis_potential(grid, outer_pair_id, tol);
    auto b = solve_basis_potential(grid, inner_upper_id, tol);
    auto both = grid;
    for (std::size_t k = 0; k < grid.values.size(); ++k)
    {
        int const o = grid.owner[k];
        both.values[k] = (o == outer_pair_id || o == inner_upper_id) ? 1.0 : 0.0;
    }
    RelaxOptions opts;
    opts.tolerance = tol;
    relax(both, opts);
    double worst = 0;
    for (std::size_t k = 0; k < grid.values.size(); ++k)
        worst = std::max(worst, std::abs(a.values[k] + b.values[k] - both.values[k]));
    CHECK(worst <= 2 * tol);
}

TEST_CASE("relaxation cap raises with the final residual")
{
    TrapGeometry geo;
    auto grid = build_axisymmetric_grid(geo, 10e-6);
    for (std::size_t k = 0; k < grid.values.size(); ++k)
        grid.values[k] = grid.owner[k] == outer_pair_id ? 1.0 : 0.0;
    RelaxOptions opts;
    opts.max_sweeps = 5;
    try
    {
        relax(grid, opts);
        FAIL("expected SolverError");
    }
    catch (SolverError const& e)
    {
        CHECK(e.residual > 0);
    }
}

TEST_CASE("multipoles of manufactured fields")
{
    auto g = make_box_grid(300e-6, 300e-6, 5e-6);
    double const kappa = 1e6;
    SUBCASE("pure quadrupole")
    {
        for (int j = 0; j < g.nz; ++j)
            for (int i = 0; i < g.nr; ++i)
                g.at(i, j) = 0.5 * kappa * (g.r(i) * g.r(i) - 2 * g.z(j) * g.z(j));
        auto e = extract_multipoles(g, Eigen::Vector3d::Zero(), 100e-6, 4);
        CHECK(e.Q(0, 0) == doctest::Approx(kappa).epsilon(1e-9));
        CHECK(e.Q(1, 1) == doctest::Approx(kappa).epsilon(1e-9));
        CHECK(e.Q(2, 2) == doctest::Approx(-2 * kappa).epsilon(1e-9));
        CHECK(std::abs(e.b.z()) < 1e-9 * kappa * 100e-6);
    }
    SUBCASE("uniform field")
    {
        for (int j = 0; j < g.nz; ++j)
            for (int i = 0; i < g.nr; ++i)
                g.at(i, j) = 100 * g.z(j);
        auto e = extract_multipoles(g, Eigen::Vector3d::Zero(), 100e-6, 2);
        CHECK(e.b.z() == doctest::Approx(100).epsilon(1e-9));
        CHECK(e.b.x() == 0);
        CHECK(e.b.y() == 0);
        CHECK(e.Q.norm() < 1e-6);
    }
    SUBCASE("off-axis centre and Dirichlet nodes are rejected")
    {
        CHECK_THROWS(extract_multipoles(g, Eigen::Vector3d(1e-6, 0, 0), 100e-6, 2));
        CHECK_THROWS(extract_multipoles(g, Eigen::Vector3d::Zero(), 300e-6, 2));
        CHECK_THROWS(extract_multipoles(g, Eigen::Vector3d::Zero(), 100e-6, 3));
    }
}

TEST_CASE("solved stack multipoles obey the Laplace and symmetry constraints")
{
    TrapGeometry geo;
    double const h = 5e-6;
    double const radius = 40e-6;
    auto basis = solve_stack_basis(geo, h, 1e-11, radius, true);
    for (auto const& [name, e] : basis.entries)
    {
        CAPTURE(name);
        CHECK((e.Q - e.Q.transpose()).norm() == 0);
        CHECK(std::abs(e.Q.trace()) / e.Q.norm() < 1e-6);
        CHECK(e.Q(0, 0) == e.Q(1, 1));
        CHECK(e.b.x() == 0);
        CHECK(e.b.y() == 0);

        // Independent check on the raw nodes: central-difference curvatures
        // at the centre must satisfy Laplace numerically and agree with the
        // fitted quadrupole up to the truncation of the expansion.
        auto const& f = basis.fields.at(name);
        int const jc = static_cast<int>(std::lround(-f.z_min / h));
        double const p0 = f.at(0, jc);
        double const qzz = (f.at(0, jc + 1) - 2 * p0 + f.at(0, jc - 1)) / (h * h);
        double const qxx = 2 * (f.at(1, jc) - p0) / (h * h);
        double const norm = std::sqrt(2 * qxx * qxx + qzz * qzz);
        CHECK(std::abs(2 * qxx + qzz) / norm < 1e-6);
        CHECK(e.Q(2, 2) == doctest::Approx(qzz).epsilon(0.02));
    }
    auto const& outer = basis.entries.at("outer_pair");
    auto const& up = basis.entries.at("inner_upper");
    auto const& down = basis.entries.at("inner_lower");
    // The mirror-symmetric pair has no dipole at the centre.
    CHECK(std::abs(outer.b.z()) * radius < 1e-6 * std::abs(outer.Q(2, 2)) * radius * radius);
    // A single inner tip is dominated by its axial dipole.
    CHECK(std::abs(up.b.z()) * radius > std::abs(up.Q(2, 2)) * radius * radius);
    CHECK(up.b.z() == doctest::Approx(-down.b.z()).epsilon(1e-6));
    CHECK(up.Q(2, 2) == doctest::Approx(down.Q(2, 2)).epsilon(1e-6));
    // Potential rises towards the upper tip.
    CHECK(up.b.z() > 0);
}

TEST_CASE("field CSV export")
{
    auto g = make_box_grid(20e-6, 10e-6, 10e-6);
    std::ostringstream os;
    write_field_csv(os, g);
    std::string const text = os.str();
    CHECK(text.rfind("r_m,z_m,value_V\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + g.nr * g.nz);
}
