#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "apde/sparse.hpp"
#include "apde/tape.hpp"

namespace apde {

enum class EdgeTag { kNone, kNeumann, kRobin, kDirichlet };

/// Structured rectilinear mesh of axis-aligned bilinear quadrilaterals. Cells
/// outside the computational domain are dropped; nodes are numbered compactly
/// over the cells that remain.
struct RectMesh {
    std::vector<double> grid_x;
    std::vector<double> grid_y;

    struct Cell {
        std::array<std::size_t, 4> nodes;  // counterclockwise from (x0, y0)
        double x0, y0, hx, hy;
        int subdomain;
    };
    std::vector<Cell> cells;

    std::vector<std::array<double, 2>> nodes;

    struct BoundaryEdge {
        std::size_t n0, n1;
        EdgeTag tag;
        double length;
    };
    std::vector<BoundaryEdge> boundary_edges;

    std::vector<bool> node_dirichlet;

    std::size_t n_nodes() const { return nodes.size(); }
    std::vector<std::size_t> interior_nodes() const;
    double area() const;
};

/// Thermal-fin geometry: central post (2.5, 3.5) x (0, 4) plus four side
/// strips ((0, 2.5) u (3.5, 6)) x (i - 0.25, i). The bottom post edge carries
/// the Neumann tag, every other exterior edge is Robin. `nx_per_unit` controls
/// the subdivision of each geometric segment.
RectMesh build_fin_mesh(std::size_t nx_per_unit);

/// Unit square with nx x ny cells; all exterior edges tagged Dirichlet.
RectMesh build_unit_square_mesh(std::size_t nx, std::size_t ny);

/// Reference-cell quadrature, exact for bilinear x bilinear integrands.
struct QuadratureRule {
    struct Point {
        double xi, eta, weight;
    };
    std::vector<Point> points;
    static const QuadratureRule& gauss2x2();
};

/// Diffusion coefficient: either one constant per fin subdomain plus the Robin
/// coefficient (6 entries), or one value per mesh node interpolated bilinearly.
struct CoefficientField {
    enum class Kind { kPerSubdomain, kNodal };
    Kind kind;
    std::vector<double> values;

    static CoefficientField per_subdomain(std::array<double, 6> kappa_and_bi);
    static CoefficientField nodal(std::vector<double> node_values);
};

// Plain assembly over all mesh nodes.
SparseMatrix assemble_mass(const RectMesh& mesh);
SparseMatrix assemble_stiffness(const RectMesh& mesh, int subdomain = -1);
SparseMatrix assemble_robin_mass(const RectMesh& mesh);
std::vector<double> assemble_neumann_load(const RectMesh& mesh, double flux);
std::vector<double> assemble_load(const RectMesh& mesh,
                                  const std::function<double(double, double)>& f);

/// Quadrature vector of (u_h^2, phi) for the nodal field u.
std::vector<double> quadratic_form_vector(const RectMesh& mesh, std::span<const double> u);

/// factor * integral of w_h(x) phi_a phi_b with w the bilinear interpolant of
/// nodal values; N'(u) of the nonlinear heat residual is this with factor 2.
SparseMatrix weighted_mass(const RectMesh& mesh, std::span<const double> w, double factor);

/// A(mu) = sum_i kappa_i K_i + Bi M_R over all mesh nodes, with the Neumann
/// unit-flux load as right-hand side. Parameters must stay positive; the
/// evaluation closure rejects anything else.
struct FinSystem {
    std::shared_ptr<const ParamDependentMatrix> matrix;  // 6 parameters
    std::vector<double> rhs;
};
FinSystem assemble_fin_system(const RectMesh& mesh);

/// Direct solve of the fin problem for a per-subdomain coefficient field.
std::vector<double> solve_fin(const FinSystem& system, const CoefficientField& mu);

/// Variable-coefficient Poisson with homogeneous Dirichlet conditions imposed
/// by row/column elimination. Parameters are kappa at every mesh node (kappa
/// at quadrature points by bilinear interpolation), so the matrix is affine in
/// the parameters; the system itself lives on the interior nodes.
struct KappaPoissonSystem {
    std::shared_ptr<const ParamDependentMatrix> matrix;  // params: all-node kappa
    std::vector<double> rhs;                             // interior rows
    std::vector<std::size_t> interior;                   // interior -> node id
};
KappaPoissonSystem assemble_kappa_poisson(const RectMesh& mesh,
                                          const std::function<double(double, double)>& f);

/// Direct solve for a nodal coefficient field; returns interior values.
std::vector<double> solve_kappa_poisson(const KappaPoissonSystem& system,
                                        const CoefficientField& kappa);

/// One Crank-Nicolson step of u_t - laplace(u) + u^2 = f as a residual system
/// R(u_n; u_prev) = 0 with the previous state as the parameter vector, so the
/// initial condition chains through every step. Boundary rows pin u_n to zero.
class HeatStepAssembler {
public:
    HeatStepAssembler(std::shared_ptr<const RectMesh> mesh, double dt);

    const RectMesh& mesh() const { return *mesh_; }
    double dt() const { return dt_; }
    const SparseMatrix& mass() const { return mass_; }
    const SparseMatrix& stiffness() const { return stiffness_; }

    /// Residual system for the step from t_prev to t_n with nodal forces at
    /// the two time levels.
    std::shared_ptr<const ResidualSystem> step_system(std::vector<double> f_prev,
                                                      std::vector<double> f_n) const;

private:
    std::shared_ptr<const RectMesh> mesh_;
    double dt_;
    SparseMatrix mass_;
    SparseMatrix stiffness_;
    std::vector<bool> dirichlet_;
};

}  // namespace apde
