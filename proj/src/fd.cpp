#include "apde/fd.hpp"

namespace apde {

SparseMatrix poisson1d_stiffness(const Grid1D& g) {
    const std::size_t n = g.n_interior();
    const double inv_h2 = 1.0 / (g.h() * g.h());
    std::vector<Triplet> t;
    t.reserve(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        t.push_back({i, i, 2.0 * inv_h2});
        if (i > 0) t.push_back({i, i - 1, -inv_h2});
        if (i + 1 < n) t.push_back({i, i + 1, -inv_h2});
    }
    return SparseMatrix::from_triplets(n, std::move(t));
}

std::vector<double> poisson1d_solution(const Grid1D& g, double f_constant) {
    return poisson1d_solution(g, std::vector<double>(g.n_interior(), f_constant));
}

std::vector<double> poisson1d_solution(const Grid1D& g, std::span<const double> f_nodes) {
    if (f_nodes.size() != g.n_interior()) {
        throw std::invalid_argument("poisson1d_solution: force length mismatch");
    }
    return lu_factorize(poisson1d_stiffness(g)).solve(f_nodes);
}

SparseMatrix heat_spacetime_matrix(const Grid1D& g, const TimeGrid& t) {
    const double inv_k = 1.0 / t.k();
    SparseMatrix step = SparseMatrix::add(
        poisson1d_stiffness(g), SparseMatrix::identity(g.n_interior()).scaled(inv_k), 1.0);
    SparseMatrix block = kron(SparseMatrix::identity(t.n_k), step);
    SparseMatrix coupling = kron(shift_matrix(t.n_k), SparseMatrix::identity(g.n_interior()));
    return SparseMatrix::add(block, coupling, -inv_k);
}

std::vector<double> heat_spacetime_rhs(const Grid1D& g, const TimeGrid& t,
                                       std::span<const double> force_spacetime,
                                       std::span<const double> u0) {
    const std::size_t m = g.n_interior();
    const std::size_t dim = t.n_k * m;
    if (force_spacetime.size() != dim) {
        throw std::invalid_argument("heat_spacetime_rhs: force length mismatch");
    }
    if (u0.size() != m) throw std::invalid_argument("heat_spacetime_rhs: u0 length mismatch");
    std::vector<double> rhs(force_spacetime.begin(), force_spacetime.end());
    const double inv_k = 1.0 / t.k();
    for (std::size_t i = 0; i < m; ++i) rhs[i] += inv_k * u0[i];
    return rhs;
}

std::shared_ptr<const LuFactorization> heat_step_factorization(const Grid1D& g,
                                                               const TimeGrid& t) {
    SparseMatrix step = SparseMatrix::add(
        poisson1d_stiffness(g), SparseMatrix::identity(g.n_interior()).scaled(1.0 / t.k()), 1.0);
    return std::make_shared<LuFactorization>(lu_factorize(step));
}

std::vector<VarId> backward_euler_chain(Tape& tape,
                                        std::shared_ptr<const LuFactorization> step_lu,
                                        const TimeGrid& t, std::span<const VarId> step_forces,
                                        VarId u0) {
    if (!step_forces.empty() && step_forces.size() != t.n_k) {
        throw std::invalid_argument("backward_euler_chain: need one force per step");
    }
    const double inv_k = 1.0 / t.k();
    std::vector<VarId> states;
    states.reserve(t.n_k);
    VarId prev = u0;
    for (std::size_t j = 0; j < t.n_k; ++j) {
        VarId rhs = tape.scale(prev, inv_k);
        if (!step_forces.empty()) rhs = tape.add(rhs, step_forces[j]);
        VarId u = tape.linear_solve(step_lu, rhs);
        states.push_back(u);
        prev = u;
    }
    return states;
}

std::vector<VarId> backward_euler_chain(Tape& tape, const Grid1D& g, const TimeGrid& t,
                                        std::span<const VarId> step_forces, VarId u0) {
    return backward_euler_chain(tape, heat_step_factorization(g, t), t, step_forces, u0);
}

}  // namespace apde
