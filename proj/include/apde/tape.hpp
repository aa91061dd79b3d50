#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "apde/sparse.hpp"

namespace apde {

/// Handle to a vector-valued variable on a Tape. Scalars are length-1 vectors.
/// Only valid for the tape that produced it.
struct VarId {
    std::uint32_t index = UINT32_MAX;
    bool valid() const { return index != UINT32_MAX; }
};

/// Square sparse matrix with a fixed sparsity pattern whose nonzero values are
/// a differentiable function of a parameter vector. `eval` fills the values
/// for the current parameters; `vjp` maps a weight per nonzero (dJ/dvalue,
/// aligned with the pattern ordering) back to a gradient per parameter.
struct ParamDependentMatrix {
    std::size_t dim = 0;
    std::size_t n_params = 0;
    std::vector<std::size_t> rows;  // pattern, sorted by (row, col)
    std::vector<std::size_t> cols;

    std::function<void(std::span<const double> params, std::span<double> values)> eval;
    std::function<void(std::span<const double> params, std::span<const double> weights,
                       std::span<double> grad_params)>
        vjp;

    /// Entries affine in the parameters: values = base + sensitivity * params,
    /// with `sensitivity` given per nonzero as (param index, coefficient) terms.
    static std::shared_ptr<const ParamDependentMatrix> affine(
        std::size_t dim, std::size_t n_params, std::vector<std::size_t> rows,
        std::vector<std::size_t> cols, std::vector<double> base,
        std::vector<std::vector<std::pair<std::size_t, double>>> sensitivity);

    SparseMatrix assemble(std::span<const double> params) const;
};

/// Nonlinear system R(u; p) = 0 given through callbacks. The Jacobian
/// sparsity is fixed per system; `param_vjp` returns v^T dR/dp.
struct ResidualSystem {
    std::size_t state_dim = 0;
    std::size_t param_dim = 0;

    std::function<std::vector<double>(std::span<const double> u, std::span<const double> p)>
        residual;
    std::function<SparseMatrix(std::span<const double> u, std::span<const double> p)> jacobian;
    std::function<std::vector<double>(std::span<const double> u, std::span<const double> p,
                                      std::span<const double> v)>
        param_vjp;
};

struct NewtonConfig {
    double tol = 1e-10;
    int max_iter = 30;
};

/// Thrown when Newton iterations fail to converge; carries the residual-norm
/// trace for diagnosis.
class NewtonDivergenceError : public std::runtime_error {
public:
    NewtonDivergenceError(std::string what, std::vector<double> trace)
        : std::runtime_error(std::move(what)), residual_trace(std::move(trace)) {}
    std::vector<double> residual_trace;
};

class Tape;

/// Gradients accumulated by Tape::backward. Requires-grad leaves untouched by
/// the loss report zero vectors.
class GradientMap {
public:
    std::span<const double> get(VarId v) const;
    std::vector<double> get_vector(VarId v) const {
        auto s = get(v);
        return std::vector<double>(s.begin(), s.end());
    }

private:
    friend class Tape;
    // Adjoints indexed by node; entries for variables the loss never reached
    // are materialized as zeros on first access.
    mutable std::vector<std::vector<double>> adjoints_;
    std::vector<std::size_t> value_sizes_;
};

/// Reverse-mode tape over real vectors. Nodes are recorded (and evaluated) in
/// topological order by construction; backward traverses in strict reverse.
class Tape {
public:
    VarId variable(std::vector<double> value, bool requires_grad);
    VarId constant(std::vector<double> value) { return variable(std::move(value), false); }
    VarId scalar(double v, bool requires_grad = false) {
        return variable(std::vector<double>{v}, requires_grad);
    }

    std::span<const double> value(VarId v) const;
    double scalar_value(VarId v) const;
    std::size_t size() const { return nodes_.size(); }

    // Elementwise / reduction ops. `mul` broadcasts when one side is scalar.
    VarId add(VarId a, VarId b);
    VarId sub(VarId a, VarId b);
    VarId scale(VarId a, double s);
    VarId mul(VarId a, VarId b);
    VarId square(VarId a);
    VarId dot(VarId a, VarId b);
    VarId norm2(VarId a);  // gradient at the zero vector is zero (subgradient choice)
    VarId sum(VarId a);
    VarId mean(VarId a);
    VarId abs(VarId a);
    VarId concat(std::span<const VarId> parts);
    VarId slice(VarId a, std::size_t offset, std::size_t length);
    VarId sigmoid(VarId a);
    VarId clamp_min(VarId a, double floor);

    /// Batched dense affine map: for each of n_points rows x of `x_flat`
    /// (row-major n_points x n_in), computes W x + b with W row-major
    /// n_out x n_in. Gradients flow to all three inputs.
    VarId affine_batch(VarId w_flat, VarId bias, VarId x_flat, std::size_t n_in,
                       std::size_t n_out, std::size_t n_points);

    /// x = solve(A, b) for constant A. The factorization computed here is
    /// reused for the transpose solve in the backward pass; backward computes
    /// dJ/db = solve(A^T, dJ/dx).
    VarId linear_solve(std::shared_ptr<const LuFactorization> lu, VarId b);
    VarId linear_solve(const SparseMatrix& a, VarId b);

    /// x = solve(A(p), b). Backward additionally forms the pattern-restricted
    /// dJ/dA = -(dJ/db) (x) x and chains it through the pattern sensitivities
    /// into dJ/dp. Entries of the dense outer product falling on structural
    /// zeros of A are not represented; parameters enter only through the
    /// pattern, so the chained gradient is exact.
    VarId linear_solve(std::shared_ptr<const ParamDependentMatrix> a, VarId params, VarId b);

    /// u solving R(u; p) = 0 by Newton iteration from u_init. Backward solves
    /// the adjoint system (dR/du)^T z = dJ/du at the converged state and
    /// accumulates dJ/dp = -z^T dR/dp.
    VarId nonlinear_solve(std::shared_ptr<const ResidualSystem> sys, VarId params,
                          std::vector<double> u_init, NewtonConfig cfg = {});

    /// Seeds dJ/dloss = 1 (loss must be scalar) and accumulates gradients for
    /// every requires-grad leaf by summation over all uses.
    GradientMap backward(VarId loss) const;

private:
    enum class Op : std::uint8_t {
        kLeaf,
        kAdd,
        kSub,
        kScale,
        kMul,
        kSquare,
        kDot,
        kNorm2,
        kSum,
        kMean,
        kAbs,
        kConcat,
        kSlice,
        kSigmoid,
        kClampMin,
        kAffineBatch,
        kLinearSolve,
        kNonlinearSolve,
    };

    struct LinearSolvePayload {
        std::shared_ptr<const LuFactorization> lu;
        std::shared_ptr<const ParamDependentMatrix> matrix;  // null for constant A
    };

    struct NonlinearSolvePayload {
        std::shared_ptr<const ResidualSystem> system;
        std::shared_ptr<const LuFactorization> jacobian_lu;  // at the converged state
    };

    struct Node {
        Op op = Op::kLeaf;
        bool requires_grad = false;
        std::vector<std::uint32_t> inputs;
        std::vector<double> value;
        double scalar_param = 0.0;
        std::array<std::size_t, 3> dims{0, 0, 0};
        std::shared_ptr<const LinearSolvePayload> linear;
        std::shared_ptr<const NonlinearSolvePayload> nonlinear;
    };

    const Node& node(VarId v) const;
    VarId push(Node n);
    std::span<const double> in(const Node& n, std::size_t i) const {
        return nodes_[n.inputs[i]].value;
    }
    bool any_requires_grad(std::initializer_list<VarId> vars) const;

    std::vector<Node> nodes_;
};

/// Compares the tape gradient of a scalar-valued program against central
/// finite differences, returning the maximum relative error
/// |g - g_fd| / max(1, |g|, |g_fd|) over all coordinates.
double gradient_check(const std::function<VarId(Tape&, VarId)>& program,
                      std::span<const double> x0, double eps = 1e-6);

}  // namespace apde
