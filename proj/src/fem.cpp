#include "apde/fem.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace apde {

namespace {

constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

// Bilinear shape functions on [-1,1]^2, nodes counterclockwise from (-1,-1).
void shape(double xi, double eta, std::array<double, 4>& n) {
    n[0] = 0.25 * (1 - xi) * (1 - eta);
    n[1] = 0.25 * (1 + xi) * (1 - eta);
    n[2] = 0.25 * (1 + xi) * (1 + eta);
    n[3] = 0.25 * (1 - xi) * (1 + eta);
}

void shape_grad(double xi, double eta, std::array<double, 4>& dxi, std::array<double, 4>& deta) {
    dxi[0] = -0.25 * (1 - eta);
    dxi[1] = 0.25 * (1 - eta);
    dxi[2] = 0.25 * (1 + eta);
    dxi[3] = -0.25 * (1 + eta);
    deta[0] = -0.25 * (1 - xi);
    deta[1] = -0.25 * (1 + xi);
    deta[2] = 0.25 * (1 + xi);
    deta[3] = 0.25 * (1 - xi);
}

std::vector<double> subdivide(const std::vector<double>& breaks, std::size_t per_unit) {
    std::vector<double> lines{breaks.front()};
    for (std::size_t s = 1; s < breaks.size(); ++s) {
        const double len = breaks[s] - breaks[s - 1];
        const auto pieces = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(len * static_cast<double>(per_unit) - 1e-12)));
        for (std::size_t j = 1; j <= pieces; ++j) {
            lines.push_back(j == pieces
                                ? breaks[s]
                                : breaks[s - 1] + len * static_cast<double>(j) /
                                                      static_cast<double>(pieces));
        }
    }
    return lines;
}

// Assembles a mesh from grid lines and a subdomain classifier (negative =
// cell dropped), then discovers boundary edges and applies `tag_edge`.
RectMesh assemble_mesh(std::vector<double> gx, std::vector<double> gy,
                       const std::function<int(double, double)>& classify,
                       const std::function<EdgeTag(double, double, double, double)>& tag_edge) {
    RectMesh mesh;
    mesh.grid_x = std::move(gx);
    mesh.grid_y = std::move(gy);
    const std::size_t cx = mesh.grid_x.size() - 1;
    const std::size_t cy = mesh.grid_y.size() - 1;

    std::vector<int> cell_sub(cx * cy, -1);
    for (std::size_t j = 0; j < cy; ++j) {
        for (std::size_t i = 0; i < cx; ++i) {
            const double mx = 0.5 * (mesh.grid_x[i] + mesh.grid_x[i + 1]);
            const double my = 0.5 * (mesh.grid_y[j] + mesh.grid_y[j + 1]);
            cell_sub[j * cx + i] = classify(mx, my);
        }
    }

    std::vector<std::size_t> node_id((cx + 1) * (cy + 1), kNoNode);
    auto grid_node = [&](std::size_t i, std::size_t j) -> std::size_t& {
        return node_id[j * (cx + 1) + i];
    };
    auto active = [&](std::ptrdiff_t i, std::ptrdiff_t j) {
        if (i < 0 || j < 0 || i >= static_cast<std::ptrdiff_t>(cx) ||
            j >= static_cast<std::ptrdiff_t>(cy)) {
            return false;
        }
        return cell_sub[static_cast<std::size_t>(j) * cx + static_cast<std::size_t>(i)] >= 0;
    };

    for (std::size_t j = 0; j < cy; ++j) {
        for (std::size_t i = 0; i < cx; ++i) {
            if (cell_sub[j * cx + i] < 0) continue;
            const std::array<std::pair<std::size_t, std::size_t>, 4> corners{
                {{i, j}, {i + 1, j}, {i + 1, j + 1}, {i, j + 1}}};
            RectMesh::Cell cell;
            for (int c = 0; c < 4; ++c) {
                auto [gi, gj] = corners[c];
                std::size_t& id = grid_node(gi, gj);
                if (id == kNoNode) {
                    id = mesh.nodes.size();
                    mesh.nodes.push_back({mesh.grid_x[gi], mesh.grid_y[gj]});
                }
                cell.nodes[c] = id;
            }
            cell.x0 = mesh.grid_x[i];
            cell.y0 = mesh.grid_y[j];
            cell.hx = mesh.grid_x[i + 1] - mesh.grid_x[i];
            cell.hy = mesh.grid_y[j + 1] - mesh.grid_y[j];
            cell.subdomain = cell_sub[j * cx + i];
            mesh.cells.push_back(cell);

            // Exterior edges: side without an active neighbor.
            const auto pi = static_cast<std::ptrdiff_t>(i);
            const auto pj = static_cast<std::ptrdiff_t>(j);
            struct Side {
                std::ptrdiff_t di, dj;
                int a, b;
            };
            const std::array<Side, 4> sides{{{0, -1, 0, 1}, {1, 0, 1, 2}, {0, 1, 3, 2}, {-1, 0, 0, 3}}};
            for (const Side& s : sides) {
                if (active(pi + s.di, pj + s.dj)) continue;
                RectMesh::BoundaryEdge edge;
                edge.n0 = cell.nodes[static_cast<std::size_t>(s.a)];
                edge.n1 = cell.nodes[static_cast<std::size_t>(s.b)];
                const auto& a = mesh.nodes[edge.n0];
                const auto& b = mesh.nodes[edge.n1];
                edge.length = std::hypot(b[0] - a[0], b[1] - a[1]);
                edge.tag = tag_edge(a[0], a[1], b[0], b[1]);
                mesh.boundary_edges.push_back(edge);
            }
        }
    }

    mesh.node_dirichlet.assign(mesh.nodes.size(), false);
    for (const auto& e : mesh.boundary_edges) {
        if (e.tag == EdgeTag::kDirichlet) {
            mesh.node_dirichlet[e.n0] = true;
            mesh.node_dirichlet[e.n1] = true;
        }
    }
    return mesh;
}

void validate_square_field(const RectMesh& mesh, std::span<const double> v, const char* what) {
    if (v.size() != mesh.n_nodes()) {
        throw std::invalid_argument(std::string(what) + ": nodal field length mismatch");
    }
}

}  // namespace

std::vector<std::size_t> RectMesh::interior_nodes() const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!node_dirichlet[i]) ids.push_back(i);
    }
    return ids;
}

double RectMesh::area() const {
    double a = 0.0;
    for (const auto& c : cells) a += c.hx * c.hy;
    return a;
}

RectMesh build_fin_mesh(std::size_t nx_per_unit) {
    if (nx_per_unit < 1) throw std::invalid_argument("build_fin_mesh: nx_per_unit must be >= 1");
    auto gx = subdivide({0.0, 2.5, 3.5, 6.0}, nx_per_unit);
    auto gy = subdivide({0.0, 0.75, 1.0, 1.75, 2.0, 2.75, 3.0, 3.75, 4.0}, nx_per_unit);

    auto classify = [](double x, double y) -> int {
        if (x > 2.5 && x < 3.5) return 0;  // central post
        for (int i = 1; i <= 4; ++i) {
            if (y > i - 0.25 && y < i) return i;  // side strips
        }
        return -1;
    };
    auto tag = [](double x0, double y0, double x1, double y1) {
        const bool bottom_post = y0 == 0.0 && y1 == 0.0 && x0 >= 2.5 - 1e-12 && x1 <= 3.5 + 1e-12 &&
                                 x1 >= 2.5 - 1e-12 && x0 <= 3.5 + 1e-12;
        return bottom_post ? EdgeTag::kNeumann : EdgeTag::kRobin;
    };
    return assemble_mesh(std::move(gx), std::move(gy), classify, tag);
}

RectMesh build_unit_square_mesh(std::size_t nx, std::size_t ny) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("build_unit_square_mesh: need >= 1 cell");
    std::vector<double> gx(nx + 1), gy(ny + 1);
    for (std::size_t i = 0; i <= nx; ++i) gx[i] = static_cast<double>(i) / static_cast<double>(nx);
    for (std::size_t j = 0; j <= ny; ++j) gy[j] = static_cast<double>(j) / static_cast<double>(ny);
    return assemble_mesh(
        std::move(gx), std::move(gy), [](double, double) { return 0; },
        [](double, double, double, double) { return EdgeTag::kDirichlet; });
}

const QuadratureRule& QuadratureRule::gauss2x2() {
    static const QuadratureRule rule = [] {
        const double g = 1.0 / std::sqrt(3.0);
        QuadratureRule r;
        for (double xi : {-g, g}) {
            for (double eta : {-g, g}) r.points.push_back({xi, eta, 1.0});
        }
        return r;
    }();
    return rule;
}

CoefficientField CoefficientField::per_subdomain(std::array<double, 6> kappa_and_bi) {
    CoefficientField f;
    f.kind = Kind::kPerSubdomain;
    f.values.assign(kappa_and_bi.begin(), kappa_and_bi.end());
    return f;
}

CoefficientField CoefficientField::nodal(std::vector<double> node_values) {
    CoefficientField f;
    f.kind = Kind::kNodal;
    f.values = std::move(node_values);
    return f;
}

SparseMatrix assemble_mass(const RectMesh& mesh) {
    const auto& quad = QuadratureRule::gauss2x2();
    std::vector<Triplet> trip;
    std::array<double, 4> n;
    for (const auto& cell : mesh.cells) {
        const double jac = 0.25 * cell.hx * cell.hy;
        for (const auto& q : quad.points) {
            shape(q.xi, q.eta, n);
            const double w = q.weight * jac;
            for (int a = 0; a < 4; ++a) {
                for (int b = 0; b < 4; ++b) {
                    trip.push_back({cell.nodes[a], cell.nodes[b], w * n[a] * n[b]});
                }
            }
        }
    }
    return SparseMatrix::from_triplets(mesh.n_nodes(), std::move(trip));
}

SparseMatrix assemble_stiffness(const RectMesh& mesh, int subdomain) {
    const auto& quad = QuadratureRule::gauss2x2();
    std::vector<Triplet> trip;
    std::array<double, 4> dxi, deta;
    for (const auto& cell : mesh.cells) {
        if (subdomain >= 0 && cell.subdomain != subdomain) continue;
        const double jac = 0.25 * cell.hx * cell.hy;
        const double sx = 2.0 / cell.hx;
        const double sy = 2.0 / cell.hy;
        for (const auto& q : quad.points) {
            shape_grad(q.xi, q.eta, dxi, deta);
            const double w = q.weight * jac;
            for (int a = 0; a < 4; ++a) {
                for (int b = 0; b < 4; ++b) {
                    const double gg =
                        sx * dxi[a] * sx * dxi[b] + sy * deta[a] * sy * deta[b];
                    trip.push_back({cell.nodes[a], cell.nodes[b], w * gg});
                }
            }
        }
    }
    return SparseMatrix::from_triplets(mesh.n_nodes(), std::move(trip));
}

SparseMatrix assemble_robin_mass(const RectMesh& mesh) {
    // 2-point Gauss along each Robin edge; exact for products of the two
    // linear edge shape functions (L/6 [[2,1],[1,2]]).
    std::vector<Triplet> trip;
    const double g = 1.0 / std::sqrt(3.0);
    for (const auto& e : mesh.boundary_edges) {
        if (e.tag != EdgeTag::kRobin) continue;
        const double w = 0.5 * e.length;
        for (double xi : {-g, g}) {
            const double n0 = 0.5 * (1 - xi);
            const double n1 = 0.5 * (1 + xi);
            trip.push_back({e.n0, e.n0, w * n0 * n0});
            trip.push_back({e.n0, e.n1, w * n0 * n1});
            trip.push_back({e.n1, e.n0, w * n1 * n0});
            trip.push_back({e.n1, e.n1, w * n1 * n1});
        }
    }
    return SparseMatrix::from_triplets(mesh.n_nodes(), std::move(trip));
}

std::vector<double> assemble_neumann_load(const RectMesh& mesh, double flux) {
    std::vector<double> load(mesh.n_nodes(), 0.0);
    for (const auto& e : mesh.boundary_edges) {
        if (e.tag != EdgeTag::kNeumann) continue;
        load[e.n0] += 0.5 * flux * e.length;
        load[e.n1] += 0.5 * flux * e.length;
    }
    return load;
}

std::vector<double> assemble_load(const RectMesh& mesh,
                                  const std::function<double(double, double)>& f) {
    const auto& quad = QuadratureRule::gauss2x2();
    std::vector<double> load(mesh.n_nodes(), 0.0);
    std::array<double, 4> n;
    for (const auto& cell : mesh.cells) {
        const double jac = 0.25 * cell.hx * cell.hy;
        for (const auto& q : quad.points) {
            shape(q.xi, q.eta, n);
            const double x = cell.x0 + 0.5 * (q.xi + 1.0) * cell.hx;
            const double y = cell.y0 + 0.5 * (q.eta + 1.0) * cell.hy;
            const double w = q.weight * jac * f(x, y);
            for (int a = 0; a < 4; ++a) load[cell.nodes[a]] += w * n[a];
        }
    }
    return load;
}

std::vector<double> quadratic_form_vector(const RectMesh& mesh, std::span<const double> u) {
    validate_square_field(mesh, u, "quadratic_form_vector");
    const auto& quad = QuadratureRule::gauss2x2();
    std::vector<double> out(mesh.n_nodes(), 0.0);
    std::array<double, 4> n;
    for (const auto& cell : mesh.cells) {
        const double jac = 0.25 * cell.hx * cell.hy;
        for (const auto& q : quad.points) {
            shape(q.xi, q.eta, n);
            double uq = 0.0;
            for (int a = 0; a < 4; ++a) uq += u[cell.nodes[a]] * n[a];
            const double w = q.weight * jac * uq * uq;
            for (int a = 0; a < 4; ++a) out[cell.nodes[a]] += w * n[a];
        }
    }
    return out;
}

SparseMatrix weighted_mass(const RectMesh& mesh, std::span<const double> w, double factor) {
    validate_square_field(mesh, w, "weighted_mass");
    const auto& quad = QuadratureRule::gauss2x2();
    std::vector<Triplet> trip;
    std::array<double, 4> n;
    for (const auto& cell : mesh.cells) {
        const double jac = 0.25 * cell.hx * cell.hy;
        for (const auto& q : quad.points) {
            shape(q.xi, q.eta, n);
            double wq = 0.0;
            for (int a = 0; a < 4; ++a) wq += w[cell.nodes[a]] * n[a];
            const double scale = factor * q.weight * jac * wq;
            for (int a = 0; a < 4; ++a) {
                for (int b = 0; b < 4; ++b) {
                    trip.push_back({cell.nodes[a], cell.nodes[b], scale * n[a] * n[b]});
                }
            }
        }
    }
    return SparseMatrix::from_triplets(mesh.n_nodes(), std::move(trip));
}

FinSystem assemble_fin_system(const RectMesh& mesh) {
    const std::size_t n = mesh.n_nodes();

    std::array<SparseMatrix, 6> blocks;
    for (int i = 0; i < 5; ++i) blocks[static_cast<std::size_t>(i)] = assemble_stiffness(mesh, i);
    blocks[5] = assemble_robin_mass(mesh);

    // Union pattern with per-entry block coefficients.
    std::map<std::pair<std::size_t, std::size_t>, std::vector<std::pair<std::size_t, double>>>
        pattern;
    for (std::size_t blk = 0; blk < 6; ++blk) {
        const SparseMatrix& m = blocks[blk];
        for (std::size_t row = 0; row < n; ++row) {
            for (std::size_t p = m.row_ptr()[row]; p < m.row_ptr()[row + 1]; ++p) {
                pattern[{row, m.col_idx()[p]}].push_back({blk, m.values()[p]});
            }
        }
    }

    std::vector<std::size_t> rows, cols;
    std::vector<std::vector<std::pair<std::size_t, double>>> sens;
    rows.reserve(pattern.size());
    for (auto& [rc, terms] : pattern) {
        rows.push_back(rc.first);
        cols.push_back(rc.second);
        sens.push_back(std::move(terms));
    }

    auto pdm = ParamDependentMatrix::affine(n, 6, std::move(rows), std::move(cols),
                                            std::vector<double>(pattern.size(), 0.0),
                                            std::move(sens));
    // Wrap eval with the coercivity guard.
    auto guarded = std::make_shared<ParamDependentMatrix>(*pdm);
    auto inner_eval = pdm->eval;
    guarded->eval = [inner_eval](std::span<const double> p, std::span<double> values) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!(p[i] > 0.0)) {
                throw std::invalid_argument(
                    "fin system: coefficient " + std::to_string(i) +
                    " must be positive, got " + std::to_string(p[i]));
            }
        }
        inner_eval(p, values);
    };

    FinSystem sys;
    sys.matrix = guarded;
    sys.rhs = assemble_neumann_load(mesh, 1.0);
    return sys;
}

std::vector<double> solve_fin(const FinSystem& system, const CoefficientField& mu) {
    if (mu.kind != CoefficientField::Kind::kPerSubdomain || mu.values.size() != 6) {
        throw std::invalid_argument("solve_fin: need the per-subdomain coefficient variant");
    }
    return lu_factorize(system.matrix->assemble(mu.values)).solve(system.rhs);
}

KappaPoissonSystem assemble_kappa_poisson(const RectMesh& mesh,
                                          const std::function<double(double, double)>& f) {
    const auto interior = mesh.interior_nodes();
    std::vector<std::size_t> to_interior(mesh.n_nodes(), kNoNode);
    for (std::size_t i = 0; i < interior.size(); ++i) to_interior[interior[i]] = i;

    const auto& quad = QuadratureRule::gauss2x2();
    std::array<double, 4> n, dxi, deta;

    // Entry (a, b) = sum over cells and quadrature of kappa(x_q) grad phi_a .
    // grad phi_b; kappa(x_q) interpolates the nodal parameters, so each entry
    // is linear in them with the coefficients collected here.
    std::map<std::pair<std::size_t, std::size_t>, std::vector<std::pair<std::size_t, double>>>
        pattern;
    for (const auto& cell : mesh.cells) {
        const double jac = 0.25 * cell.hx * cell.hy;
        const double sx = 2.0 / cell.hx;
        const double sy = 2.0 / cell.hy;
        for (const auto& q : quad.points) {
            shape(q.xi, q.eta, n);
            shape_grad(q.xi, q.eta, dxi, deta);
            const double w = q.weight * jac;
            for (int a = 0; a < 4; ++a) {
                const std::size_t ia = to_interior[cell.nodes[a]];
                if (ia == kNoNode) continue;
                for (int b = 0; b < 4; ++b) {
                    const std::size_t ib = to_interior[cell.nodes[b]];
                    if (ib == kNoNode) continue;
                    const double gg = sx * dxi[a] * sx * dxi[b] + sy * deta[a] * sy * deta[b];
                    auto& terms = pattern[{ia, ib}];
                    for (int c = 0; c < 4; ++c) {
                        terms.push_back({cell.nodes[c], w * gg * n[c]});
                    }
                }
            }
        }
    }

    std::vector<std::size_t> rows, cols;
    std::vector<std::vector<std::pair<std::size_t, double>>> sens;
    for (auto& [rc, terms] : pattern) {
        // Merge repeated parameter indices to keep eval tight.
        std::sort(terms.begin(), terms.end());
        std::vector<std::pair<std::size_t, double>> merged;
        for (const auto& [pi, coeff] : terms) {
            if (!merged.empty() && merged.back().first == pi) {
                merged.back().second += coeff;
            } else {
                merged.push_back({pi, coeff});
            }
        }
        rows.push_back(rc.first);
        cols.push_back(rc.second);
        sens.push_back(std::move(merged));
    }

    const std::size_t n_entries = sens.size();
    auto pdm = ParamDependentMatrix::affine(interior.size(), mesh.n_nodes(), std::move(rows),
                                            std::move(cols),
                                            std::vector<double>(n_entries, 0.0), std::move(sens));
    auto guarded = std::make_shared<ParamDependentMatrix>(*pdm);
    auto inner_eval = pdm->eval;
    guarded->eval = [inner_eval](std::span<const double> p, std::span<double> values) {
        for (double kappa : p) {
            if (!(kappa > 0.0)) {
                throw std::invalid_argument("kappa poisson: coefficient must be positive");
            }
        }
        inner_eval(p, values);
    };

    KappaPoissonSystem sys;
    sys.matrix = guarded;
    auto full_load = assemble_load(mesh, f);
    sys.rhs.reserve(interior.size());
    for (std::size_t id : interior) sys.rhs.push_back(full_load[id]);
    sys.interior = interior;
    return sys;
}

std::vector<double> solve_kappa_poisson(const KappaPoissonSystem& system,
                                        const CoefficientField& kappa) {
    if (kappa.kind != CoefficientField::Kind::kNodal) {
        throw std::invalid_argument("solve_kappa_poisson: need the nodal coefficient variant");
    }
    return lu_factorize(system.matrix->assemble(kappa.values)).solve(system.rhs);
}

HeatStepAssembler::HeatStepAssembler(std::shared_ptr<const RectMesh> mesh, double dt)
    : mesh_(std::move(mesh)),
      dt_(dt),
      mass_(assemble_mass(*mesh_)),
      stiffness_(assemble_stiffness(*mesh_)),
      dirichlet_(mesh_->node_dirichlet.begin(), mesh_->node_dirichlet.end()) {
    if (dt_ <= 0.0) throw std::invalid_argument("HeatStepAssembler: dt must be positive");
}

std::shared_ptr<const ResidualSystem> HeatStepAssembler::step_system(
    std::vector<double> f_prev, std::vector<double> f_n) const {
    validate_square_field(*mesh_, f_prev, "step_system f_prev");
    validate_square_field(*mesh_, f_n, "step_system f_n");

    const std::size_t n = mesh_->n_nodes();
    const double half_dt = 0.5 * dt_;

    // (k/2) M (f_prev + f_n) is constant for the step.
    std::vector<double> f_sum(n);
    for (std::size_t i = 0; i < n; ++i) f_sum[i] = f_prev[i] + f_n[i];
    std::vector<double> force = mass_.multiply(f_sum);
    for (double& v : force) v *= half_dt;

    auto sys = std::make_shared<ResidualSystem>();
    sys->state_dim = n;
    sys->param_dim = n;

    // Shared state so the residual system stays valid independently of the
    // assembler's lifetime.
    struct Shared {
        std::shared_ptr<const RectMesh> mesh;
        SparseMatrix mass, stiffness;
        std::vector<bool> dirichlet;
        std::vector<double> force;
        double half_dt;
    };
    auto sh = std::make_shared<const Shared>(
        Shared{mesh_, mass_, stiffness_, dirichlet_, std::move(force), half_dt});

    // R(u; u_prev) = M u + (k/2) K u + (k/2) N(u)
    //              - [M u_prev - (k/2) K u_prev - (k/2) N(u_prev) + (k/2) M (f_prev + f_n)]
    sys->residual = [sh](std::span<const double> u, std::span<const double> u_prev) {
        auto mu = sh->mass.multiply(u);
        auto ku = sh->stiffness.multiply(u);
        auto nu = quadratic_form_vector(*sh->mesh, u);
        auto mp = sh->mass.multiply(u_prev);
        auto kp = sh->stiffness.multiply(u_prev);
        auto np = quadratic_form_vector(*sh->mesh, u_prev);
        const double hdt = sh->half_dt;
        std::vector<double> r(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) {
            if (sh->dirichlet[i]) {
                r[i] = u[i];
            } else {
                r[i] = mu[i] + hdt * (ku[i] + nu[i]) -
                       (mp[i] - hdt * (kp[i] + np[i]) + sh->force[i]);
            }
        }
        return r;
    };

    sys->jacobian = [sh](std::span<const double> u, std::span<const double>) {
        SparseMatrix j =
            SparseMatrix::add(SparseMatrix::add(sh->mass, sh->stiffness, sh->half_dt),
                              weighted_mass(*sh->mesh, u, 2.0), sh->half_dt);
        // Pin Dirichlet rows to the identity.
        std::vector<Triplet> trip;
        trip.reserve(j.nnz());
        for (std::size_t row = 0; row < j.n_rows(); ++row) {
            if (sh->dirichlet[row]) {
                trip.push_back({row, row, 1.0});
                continue;
            }
            for (std::size_t p = j.row_ptr()[row]; p < j.row_ptr()[row + 1]; ++p) {
                trip.push_back({row, j.col_idx()[p], j.values()[p]});
            }
        }
        return SparseMatrix::from_triplets(j.n_rows(), std::move(trip));
    };

    // v^T dR/du_prev = -v~^T (M - (k/2) K - (k/2) N'(u_prev)) with v~ the
    // adjoint masked to non-Dirichlet rows; the matrix is symmetric.
    sys->param_vjp = [sh](std::span<const double>, std::span<const double> u_prev,
                          std::span<const double> v) {
        std::vector<double> masked(v.begin(), v.end());
        for (std::size_t i = 0; i < masked.size(); ++i) {
            if (sh->dirichlet[i]) masked[i] = 0.0;
        }
        SparseMatrix c =
            SparseMatrix::add(SparseMatrix::add(sh->mass, sh->stiffness, -sh->half_dt),
                              weighted_mass(*sh->mesh, u_prev, 2.0), -sh->half_dt);
        auto cv = c.multiply(masked);
        for (double& x : cv) x = -x;
        return cv;
    };

    return sys;
}

}  // namespace apde
