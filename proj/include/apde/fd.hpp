#pragma once

#include <memory>
#include <span>
#include <vector>

#include "apde/sparse.hpp"
#include "apde/tape.hpp"

namespace apde {

/// Uniform mesh on (0, 1) with n_h elements and interior nodes x_i = i*h.
struct Grid1D {
    std::size_t n_h;

    explicit Grid1D(std::size_t elements) : n_h(elements) {
        if (n_h < 2) throw std::invalid_argument("Grid1D: n_h must be >= 2");
    }
    double h() const { return 1.0 / static_cast<double>(n_h); }
    std::size_t n_interior() const { return n_h - 1; }
    double node(std::size_t i) const { return static_cast<double>(i + 1) * h(); }
};

/// Uniform mesh on (0, T] with n_k steps.
struct TimeGrid {
    std::size_t n_k;
    double t_final;

    TimeGrid(std::size_t steps, double final_time) : n_k(steps), t_final(final_time) {
        if (n_k < 1) throw std::invalid_argument("TimeGrid: n_k must be >= 1");
        if (t_final <= 0.0) throw std::invalid_argument("TimeGrid: T must be > 0");
    }
    double k() const { return t_final / static_cast<double>(n_k); }
    double time(std::size_t j) const { return static_cast<double>(j) * k(); }
};

/// (n_h-1) x (n_h-1) tridiagonal stiffness matrix with 2/h^2 on the diagonal
/// and -1/h^2 off the diagonal.
SparseMatrix poisson1d_stiffness(const Grid1D& g);

/// Solves K_h u = f for constant or per-node force. Central differences are
/// exact for quadratics, so for constant f the nodes carry f/2 * x * (1 - x).
std::vector<double> poisson1d_solution(const Grid1D& g, double f_constant);
std::vector<double> poisson1d_solution(const Grid1D& g, std::span<const double> f_nodes);

/// Monolithic space-time heat operator
///   A_kh = I_k (x) (1/k I_h + K_h) - (1/k) S_k (x) I_h
/// of dimension n_k * (n_h - 1).
SparseMatrix heat_spacetime_matrix(const Grid1D& g, const TimeGrid& t);

/// Right-hand side blocks: block j carries the force at time t_j; the first
/// block additionally carries (1/k) * u0 from the initial condition.
std::vector<double> heat_spacetime_rhs(const Grid1D& g, const TimeGrid& t,
                                       std::span<const double> force_spacetime,
                                       std::span<const double> u0);

/// Backward-Euler chain on the tape: returns states U^1..U^{n_k}, each from a
/// linear solve against one shared factorization of (1/k I_h + K_h). Forces
/// may be empty (zero force), one VarId per step, or a single space-time VarId
/// is not accepted here; slice it beforehand.
std::vector<VarId> backward_euler_chain(Tape& tape, const Grid1D& g, const TimeGrid& t,
                                        std::span<const VarId> step_forces, VarId u0);

/// The factorized time-step operator, reusable across optimization iterations.
std::shared_ptr<const LuFactorization> heat_step_factorization(const Grid1D& g,
                                                               const TimeGrid& t);

std::vector<VarId> backward_euler_chain(Tape& tape,
                                        std::shared_ptr<const LuFactorization> step_lu,
                                        const TimeGrid& t, std::span<const VarId> step_forces,
                                        VarId u0);

}  // namespace apde
