#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fibretrap::field {

class GeometryError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

class SolverError : public std::runtime_error
{
  public:
    SolverError(std::string const& what, double final_residual)
        : std::runtime_error(what), residual(final_residual)
    {
    }
    double residual;
};

/*!
 * Cylindrically symmetric electrode stack, all lengths in metres.
 *
 * Two coaxial tubes per side: the inner tube (which houses the fibre) ends
 * at z = +-tip_gap/2, the outer tube ends flush with it unless
 * outer_tip_setback moves it away from the centre. Both run out to the
 * domain boundary. Dimensions other than tip_gap and the radial electrode
 * distance are estimates.
 */
struct TrapGeometry
{
    double inner_electrode_inner_radius = 100e-6;
    double inner_electrode_outer_radius = 150e-6;
    double outer_electrode_inner_radius = 250e-6;
    double outer_electrode_outer_radius = 400e-6;
    double tip_gap = 350e-6;
    double outer_tip_setback = 0;
    double fibre_recess = 10e-6;
    double radial_electrode_distance = 1.0e-3;
    double radial_electrode_radius = 100e-6;
    double domain_radius = 1200e-6;
    double domain_half_height = 1200e-6;

    void validate() const;
    //! Mirror separation of the fibre cavity: tip gap plus both recesses.
    double cavity_length() const { return tip_gap + 2 * fibre_recess; }
};

//! Owner ids stored per node.
enum : int
{
    free_node = -1,
    domain_boundary = 0,
    outer_pair_id = 1,
    inner_upper_id = 2,
    inner_lower_id = 3,
};

std::string electrode_name(int id);
int electrode_id(std::string const& name);
std::vector<int> stack_electrodes();

/*!
 * Node-centred (r, z) grid with uniform spacing.
 *
 * Node (i, j) sits at r = i*h, z = z_min + j*h; i = 0 is the symmetry axis.
 * Nodes whose owner is >= 0 are Dirichlet and never change during
 * relaxation.
 */
struct PotentialGrid
{
    double spacing = 0;
    int nr = 0;
    int nz = 0;
    double z_min = 0;
    std::vector<double> values;
    std::vector<int> owner;

    std::size_t index(int i, int j) const { return std::size_t(j) * nr + i; }
    double r(int i) const { return i * spacing; }
    double z(int j) const { return z_min + j * spacing; }
    double& at(int i, int j) { return values[index(i, j)]; }
    double at(int i, int j) const { return values[index(i, j)]; }
    bool is_dirichlet(int i, int j) const { return owner[index(i, j)] >= 0; }
    std::size_t dirichlet_count() const;
    std::size_t count_owner(int id) const;
};

// Empty cylinder r <= r_max, |z| <= z_half with a 0 V outer boundary.
PotentialGrid make_box_grid(double r_max, double z_half, double spacing);

PotentialGrid build_axisymmetric_grid(TrapGeometry const& geometry, double spacing);

// Number of z rows with |z| <= tip_gap/2.
int nodes_across_gap(PotentialGrid const& grid, TrapGeometry const& geometry);

struct RelaxOptions
{
    double tolerance = 1e-8;
    long max_sweeps = 1'000'000;
    //! Over-relaxation factor; 0 picks the optimum for the grid extent.
    double omega = 0;
};

struct RelaxReport
{
    long sweeps = 0;
    double max_update = 0;
    double residual = 0;
    double omega = 0;
};

/*!
 * Red-black SOR on the free nodes with the current Dirichlet values.
 *
 * Stops once the last sweep's largest update, and the estimated remaining
 * error extrapolated from the observed contraction rate, are both below
 * tolerance times the largest boundary magnitude; the discrete Laplace
 * residual is then checked against the same bound.
 */
RelaxReport relax(PotentialGrid& grid, RelaxOptions const& options = {});

// Largest |stencil average - value| over free nodes.
double laplace_residual(PotentialGrid const& grid);

// Chosen electrode at 1 V, every other Dirichlet node at 0 V.
PotentialGrid solve_basis_potential(PotentialGrid const& grid,
                                    int electrode,
                                    double tolerance = 1e-8,
                                    RelaxReport* report = nullptr);

//! Unit-voltage expansion phi = a0 + b.r + r.Q.r / 2 about a centre.
struct MultipoleEntry
{
    double a0 = 0;
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    Eigen::Matrix3d Q = Eigen::Matrix3d::Zero();
    //! Coefficients of the cubic and quartic harmonics (degree-4 fits only).
    double c3 = 0;
    double c4 = 0;
    double fit_rms = 0;
    int fit_nodes = 0;
};

/*!
 * Least-squares fit of axisymmetric harmonic polynomials to the nodes
 * inside a ball about a point on the axis.
 *
 * Basis: 1, z, z^2 - r^2/2 and, for max_degree 4, z^3 - 3/2 z r^2 and
 * z^4 - 3 z^2 r^2 + 3/8 r^4 (z measured from the centre).
 */
MultipoleEntry extract_multipoles(PotentialGrid const& field,
                                  Eigen::Vector3d const& center,
                                  double fit_radius,
                                  int max_degree = 4);

struct StackBasis
{
    std::map<std::string, MultipoleEntry> entries;
    std::map<std::string, RelaxReport> reports;
    std::map<std::string, PotentialGrid> fields;
};

// Solve and expand every electrode of the stack about the trap centre.
StackBasis solve_stack_basis(TrapGeometry const& geometry,
                             double spacing,
                             double tolerance,
                             double fit_radius,
                             bool keep_fields = false);

// CSV with header r_m,z_m,value_V, one row per node.
void write_field_csv(std::ostream& os, PotentialGrid const& field);

}  // namespace fibretrap::field
