#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "fibretrap/fieldsolver.hpp"

namespace fibretrap::field {

void TrapGeometry::validate() const
{
    auto positive = [](double v, char const* name) {
        if (!(v > 0) || !std::isfinite(v))
            throw GeometryError(fmt::format("geometry: {} must be positive", name));
    };
    positive(inner_electrode_inner_radius, "inner_electrode_inner_radius");
    positive(inner_electrode_outer_radius, "inner_electrode_outer_radius");
    positive(outer_electrode_inner_radius, "outer_electrode_inner_radius");
    positive(outer_electrode_outer_radius, "outer_electrode_outer_radius");
    positive(tip_gap, "tip_gap");
    positive(fibre_recess, "fibre_recess");
    positive(radial_electrode_distance, "radial_electrode_distance");
    positive(radial_electrode_radius, "radial_electrode_radius");
    positive(domain_radius, "domain_radius");
    positive(domain_half_height, "domain_half_height");
    if (!(outer_tip_setback >= 0))
        throw GeometryError("geometry: outer_tip_setback must be non-negative");
    if (inner_electrode_outer_radius <= inner_electrode_inner_radius)
        throw GeometryError("geometry: inner electrode outer radius must exceed its inner radius");
    if (outer_electrode_outer_radius <= outer_electrode_inner_radius)
        throw GeometryError("geometry: outer electrode outer radius must exceed its inner radius");
    if (outer_electrode_inner_radius <= inner_electrode_outer_radius)
        throw GeometryError("geometry: outer electrode must enclose the inner electrode");
    if (domain_radius <= outer_electrode_outer_radius)
        throw GeometryError("geometry: domain radius must enclose the outer electrode");
    if (domain_half_height <= tip_gap / 2 + outer_tip_setback)
        throw GeometryError("geometry: domain half height must exceed the electrode tips");
}

std::string electrode_name(int id)
{
    switch (id)
    {
    case outer_pair_id: return "outer_pair";
    case inner_upper_id: return "inner_upper";
    case inner_lower_id: return "inner_lower";
    default: break;
    }
    throw GeometryError(fmt::format("unknown stack electrode id {}", id));
}

int electrode_id(std::string const& name)
{
    for (int id : stack_electrodes())
    {
        if (electrode_name(id) == name)
            return id;
    }
    throw GeometryError("unknown stack electrode '" + name + "'");
}

std::vector<int> stack_electrodes()
{
    return {outer_pair_id, inner_upper_id, inner_lower_id};
}

std::size_t PotentialGrid::dirichlet_count() const
{
    return static_cast<std::size_t>(
        std::count_if(owner.begin(), owner.end(), [](int o) { return o >= 0; }));
}

std::size_t PotentialGrid::count_owner(int id) const
{
    return static_cast<std::size_t>(std::count(owner.begin(), owner.end(), id));
}

PotentialGrid make_box_grid(double r_max, double z_half, double spacing)
{
    if (!(spacing > 0) || !(r_max >= 2 * spacing) || !(z_half >= spacing))
        throw GeometryError("box grid: extent must span several nodes");
    PotentialGrid g;
    g.spacing = spacing;
    g.nr = static_cast<int>(std::floor(r_max / spacing + 1e-9)) + 1;
    int const half = static_cast<int>(std::floor(z_half / spacing + 1e-9));
    g.nz = 2 * half + 1;
    g.z_min = -half * spacing;
    g.values.assign(std::size_t(g.nr) * g.nz, 0.0);
    g.owner.assign(g.values.size(), free_node);
    for (int j = 0; j < g.nz; ++j)
    {
        for (int i = 0; i < g.nr; ++i)
        {
            if (i == g.nr - 1 || j == 0 || j == g.nz - 1)
                g.owner[g.index(i, j)] = domain_boundary;
        }
    }
    return g;
}

PotentialGrid build_axisymmetric_grid(TrapGeometry const& geo, double spacing)
{
    geo.validate();
    if (!(spacing > 0))
        throw GeometryError("grid spacing must be positive");
    if (spacing > geo.tip_gap / 20 * (1 + 1e-12))
    {
        throw GeometryError(fmt::format(
            "grid too coarse: spacing {:.3g} m exceeds tip_gap/20 = {:.3g} m",
            spacing, geo.tip_gap / 20));
    }

    PotentialGrid g = make_box_grid(geo.domain_radius, geo.domain_half_height, spacing);
    // A node belongs to an electrode when it lies inside the electrode's
    // cross-section; the half-node slack keeps the rasterization symmetric.
    double const eps = 1e-9 * spacing;
    double const tip = geo.tip_gap / 2;
    double const outer_tip = tip + geo.outer_tip_setback;
    for (int j = 0; j < g.nz; ++j)
    {
        double const z = g.z(j);
        double const az = std::abs(z);
        for (int i = 0; i < g.nr; ++i)
        {
            double const r = g.r(i);
            int id = free_node;
            if (az >= tip - eps && r >= geo.inner_electrode_inner_radius - eps
                && r <= geo.inner_electrode_outer_radius + eps)
                id = z > 0 ? inner_upper_id : inner_lower_id;
            else if (az >= outer_tip - eps && r >= geo.outer_electrode_inner_radius - eps
                     && r <= geo.outer_electrode_outer_radius + eps)
                id = outer_pair_id;
            if (id != free_node)
                g.owner[g.index(i, j)] = id;
        }
    }
    return g;
}

int nodes_across_gap(PotentialGrid const& grid, TrapGeometry const& geometry)
{
    int n = 0;
    for (int j = 0; j < grid.nz; ++j)
    {
        if (std::abs(grid.z(j)) <= geometry.tip_gap / 2 + 1e-9 * grid.spacing)
            ++n;
    }
    return n;
}

void write_field_csv(std::ostream& os, PotentialGrid const& field)
{
    os << "r_m,z_m,value_V\n";
    for (int j = 0; j < field.nz; ++j)
    {
        for (int i = 0; i < field.nr; ++i)
            os << fmt::format("{:.9g},{:.9g},{:.12g}\n", field.r(i), field.z(j),
                              field.at(i, j));
    }
}

}  // namespace fibretrap::field
