#include "apde/tape.hpp"

#include <algorithm>
#include <cmath>

namespace apde {

namespace {

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace

std::shared_ptr<const ParamDependentMatrix> ParamDependentMatrix::affine(
    std::size_t dim, std::size_t n_params, std::vector<std::size_t> rows,
    std::vector<std::size_t> cols, std::vector<double> base,
    std::vector<std::vector<std::pair<std::size_t, double>>> sensitivity) {
    if (rows.size() != cols.size() || rows.size() != base.size() ||
        rows.size() != sensitivity.size()) {
        throw std::invalid_argument("ParamDependentMatrix::affine: inconsistent pattern arrays");
    }
    auto m = std::make_shared<ParamDependentMatrix>();
    m->dim = dim;
    m->n_params = n_params;
    m->rows = std::move(rows);
    m->cols = std::move(cols);
    auto base_sp = std::make_shared<std::vector<double>>(std::move(base));
    auto sens_sp =
        std::make_shared<std::vector<std::vector<std::pair<std::size_t, double>>>>(
            std::move(sensitivity));
    m->eval = [base_sp, sens_sp](std::span<const double> p, std::span<double> values) {
        for (std::size_t e = 0; e < values.size(); ++e) {
            double v = (*base_sp)[e];
            for (const auto& [pi, coeff] : (*sens_sp)[e]) v += coeff * p[pi];
            values[e] = v;
        }
    };
    m->vjp = [sens_sp](std::span<const double>, std::span<const double> w,
                       std::span<double> grad) {
        for (std::size_t e = 0; e < w.size(); ++e) {
            const double we = w[e];
            if (we == 0.0) continue;
            for (const auto& [pi, coeff] : (*sens_sp)[e]) grad[pi] += coeff * we;
        }
    };
    return m;
}

SparseMatrix ParamDependentMatrix::assemble(std::span<const double> params) const {
    std::vector<double> values(rows.size());
    eval(params, values);
    std::vector<Triplet> t(rows.size());
    for (std::size_t e = 0; e < rows.size(); ++e) t[e] = {rows[e], cols[e], values[e]};
    return SparseMatrix::from_triplets(dim, dim, std::move(t));
}

std::span<const double> GradientMap::get(VarId v) const {
    if (v.index >= adjoints_.size()) throw std::out_of_range("GradientMap: unknown VarId");
    if (adjoints_[v.index].empty()) adjoints_[v.index].assign(value_sizes_[v.index], 0.0);
    return adjoints_[v.index];
}

const Tape::Node& Tape::node(VarId v) const {
    if (v.index >= nodes_.size()) throw std::out_of_range("Tape: invalid VarId");
    return nodes_[v.index];
}

VarId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return VarId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

bool Tape::any_requires_grad(std::initializer_list<VarId> vars) const {
    for (VarId v : vars) {
        if (node(v).requires_grad) return true;
    }
    return false;
}

VarId Tape::variable(std::vector<double> value, bool requires_grad) {
    Node n;
    n.op = Op::kLeaf;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    return push(std::move(n));
}

std::span<const double> Tape::value(VarId v) const { return node(v).value; }

double Tape::scalar_value(VarId v) const {
    const Node& n = node(v);
    if (n.value.size() != 1) throw std::invalid_argument("scalar_value: variable is not scalar");
    return n.value[0];
}

VarId Tape::add(VarId a, VarId b) {
    const auto& va = node(a).value;
    const auto& vb = node(b).value;
    if (va.size() != vb.size()) throw std::invalid_argument("add: shape mismatch");
    Node n;
    n.op = Op::kAdd;
    n.requires_grad = any_requires_grad({a, b});
    n.inputs = {a.index, b.index};
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] + vb[i];
    return push(std::move(n));
}

VarId Tape::sub(VarId a, VarId b) {
    const auto& va = node(a).value;
    const auto& vb = node(b).value;
    if (va.size() != vb.size()) throw std::invalid_argument("sub: shape mismatch");
    Node n;
    n.op = Op::kSub;
    n.requires_grad = any_requires_grad({a, b});
    n.inputs = {a.index, b.index};
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] - vb[i];
    return push(std::move(n));
}

VarId Tape::scale(VarId a, double s) {
    const auto& va = node(a).value;
    Node n;
    n.op = Op::kScale;
    n.requires_grad = node(a).requires_grad;
    n.inputs = {a.index};
    n.scalar_param = s;
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = s * va[i];
    return push(std::move(n));
}

VarId Tape::mul(VarId a, VarId b) {
    const auto& va = node(a).value;
    const auto& vb = node(b).value;
    if (va.size() != vb.size() && va.size() != 1 && vb.size() != 1) {
        throw std::invalid_argument("mul: shape mismatch");
    }
    Node n;
    n.op = Op::kMul;
    n.requires_grad = any_requires_grad({a, b});
    n.inputs = {a.index, b.index};
    const std::size_t len = std::max(va.size(), vb.size());
    n.value.resize(len);
    for (std::size_t i = 0; i < len; ++i) {
        n.value[i] = va[va.size() == 1 ? 0 : i] * vb[vb.size() == 1 ? 0 : i];
    }
    return push(std::move(n));
}

VarId Tape::square(VarId a) {
    const auto& va = node(a).value;
    Node n;
    n.op = Op::kSquare;
    n.requires_grad = node(a).requires_grad;
    n.inputs = {a.index};
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] * va[i];
    return push(std::move(n));
}

VarId Tape::dot(VarId a, VarId b) {
    const auto& va = node(a).value;
    const auto& vb = node(b).value;
    if (va.size() != vb.size()) throw std::invalid_argument("dot: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) acc += va[i] * vb[i];
    Node n;
    n.op = Op::kDot;
    n.requires_grad = any_requires_grad({a, b});
    n.inputs = {a.index, b.index};
    n.value = {acc};
    return push(std::move(n));
}

VarId Tape::norm2(VarId a) {
    const auto& va = node(a).value;
    double acc = 0.0;
    for (double x : va) acc += x * x;
    Node n;
    n.op = Op::kNorm2;
    n.requires_grad = node(a).requires_grad;
    n.inputs = {a.index};
    n.value = {std::sqrt(acc)};
    return push(std::move(n));
}

VarId Tape::sum(VarId a) {
    const auto& va = node(a).value;
    double acc = 0.0;
    for (double x : va) acc += x;
    Node n;
    n.op = Op::kSum;
    n.requires_grad = node(a).requires_grad;
    n.inputs = {a.index};
    n.value = {acc};
    return push(std::move(n));
}

VarId Tape::mean(VarId a) {
    const auto& va = node(a).value;
    if (va.empty()) throw std::invalid_argument("mean: empty vector");
    double acc = 0.0;
    for (double x : va) acc += x;
    Node n;
    n.op = Op::kMean;
    n.requires_grad = node(a).requires_grad;
    n.inputs = {a.index};
    n.value = {acc / static_cast<double>(va.size())};
    return push(std::move(n));
}

VarId Tape::abs(VarId a) {
    const auto& va = node(a).value;
    Node n;
    n.op = Op::kAbs;
    n.requires_grad = node(a).requires_grad;
    n.inputs = {a.index};
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = std::abs(va[i]);
    return push(std::move(n));
}

VarId Tape::concat(std::span<const VarId> parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    Node n;
    n.op = Op::kConcat;
    for (VarId p : parts) {
        n.requires_grad = n.requires_grad || node(p).requires_grad;
        n.inputs.push_back(p.index);
        const auto& v = node(p).value;
        n.value.insert(n.value.end(), v.begin(), v.end());
    }
    return push(std::move(n));
}

VarId Tape::slice(VarId a, std::size_t offset, std::size_t length) {
    const auto& va = node(a).value;
    if (offset + length > va.size()) throw std::invalid_argument("slice: out of range");
    Node n;
    n.op = Op::kSlice;
    n.requires_grad = node(a).requires_grad;
    n.inputs = {a.index};
    n.dims = {offset, length, 0};
    n.value.assign(va.begin() + offset, va.begin() + offset + length);
    return push(std::move(n));
}

VarId Tape::sigmoid(VarId a) {
    const auto& va = node(a).value;
    Node n;
    n.op = Op::kSigmoid;
    n.requires_grad = node(a).requires_grad;
    n.inputs = {a.index};
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = 1.0 / (1.0 + std::exp(-va[i]));
    return push(std::move(n));
}

VarId Tape::clamp_min(VarId a, double floor) {
    const auto& va = node(a).value;
    Node n;
    n.op = Op::kClampMin;
    n.requires_grad = node(a).requires_grad;
    n.inputs = {a.index};
    n.scalar_param = floor;
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = std::max(va[i], floor);
    return push(std::move(n));
}

VarId Tape::affine_batch(VarId w_flat, VarId bias, VarId x_flat, std::size_t n_in,
                         std::size_t n_out, std::size_t n_points) {
    const auto& w = node(w_flat).value;
    const auto& b = node(bias).value;
    const auto& x = node(x_flat).value;
    if (w.size() != n_in * n_out || b.size() != n_out || x.size() != n_in * n_points) {
        throw std::invalid_argument("affine_batch: shape mismatch");
    }
    Node n;
    n.op = Op::kAffineBatch;
    n.requires_grad = any_requires_grad({w_flat, bias, x_flat});
    n.inputs = {w_flat.index, bias.index, x_flat.index};
    n.dims = {n_in, n_out, n_points};
    n.value.assign(n_points * n_out, 0.0);
    for (std::size_t p = 0; p < n_points; ++p) {
        const double* xp = &x[p * n_in];
        for (std::size_t o = 0; o < n_out; ++o) {
            double acc = b[o];
            const double* wo = &w[o * n_in];
            for (std::size_t i = 0; i < n_in; ++i) acc += wo[i] * xp[i];
            n.value[p * n_out + o] = acc;
        }
    }
    return push(std::move(n));
}

VarId Tape::linear_solve(std::shared_ptr<const LuFactorization> lu, VarId b) {
    const auto& vb = node(b).value;
    if (!lu) throw std::invalid_argument("linear_solve: null factorization");
    if (vb.size() != lu->dim()) throw std::invalid_argument("linear_solve: dimension mismatch");
    Node n;
    n.op = Op::kLinearSolve;
    n.requires_grad = node(b).requires_grad;
    n.inputs = {b.index};
    n.value = lu->solve(vb);
    auto payload = std::make_shared<LinearSolvePayload>();
    payload->lu = std::move(lu);
    n.linear = std::move(payload);
    return push(std::move(n));
}

VarId Tape::linear_solve(const SparseMatrix& a, VarId b) {
    return linear_solve(std::make_shared<LuFactorization>(lu_factorize(a)), b);
}

VarId Tape::linear_solve(std::shared_ptr<const ParamDependentMatrix> a, VarId params, VarId b) {
    if (!a) throw std::invalid_argument("linear_solve: null matrix");
    const auto& vp = node(params).value;
    const auto& vb = node(b).value;
    if (vp.size() != a->n_params) {
        throw std::invalid_argument("linear_solve: parameter dimension mismatch");
    }
    if (vb.size() != a->dim) throw std::invalid_argument("linear_solve: rhs dimension mismatch");

    auto lu = std::make_shared<LuFactorization>(lu_factorize(a->assemble(vp)));
    Node n;
    n.op = Op::kLinearSolve;
    n.requires_grad = any_requires_grad({params, b});
    n.inputs = {b.index, params.index};
    n.value = lu->solve(vb);
    auto payload = std::make_shared<LinearSolvePayload>();
    payload->lu = std::move(lu);
    payload->matrix = std::move(a);
    n.linear = std::move(payload);
    return push(std::move(n));
}

VarId Tape::nonlinear_solve(std::shared_ptr<const ResidualSystem> sys, VarId params,
                            std::vector<double> u_init, NewtonConfig cfg) {
    if (!sys) throw std::invalid_argument("nonlinear_solve: null system");
    const auto& vp = node(params).value;
    if (vp.size() != sys->param_dim) {
        throw std::invalid_argument("nonlinear_solve: parameter dimension mismatch");
    }
    if (u_init.size() != sys->state_dim) {
        throw std::invalid_argument("nonlinear_solve: initial state dimension mismatch");
    }

    std::vector<double> u = std::move(u_init);
    std::vector<double> trace;
    int grow_streak = 0;
    bool converged = false;
    for (int it = 0; it <= cfg.max_iter; ++it) {
        std::vector<double> r = sys->residual(u, vp);
        if (!all_finite(r)) {
            throw NewtonDivergenceError("newton: non-finite residual at iteration " +
                                            std::to_string(it),
                                        std::move(trace));
        }
        double rnorm = 0.0;
        for (double x : r) rnorm += x * x;
        rnorm = std::sqrt(rnorm);
        if (!trace.empty() && rnorm > trace.back()) {
            if (++grow_streak >= 5) {
                trace.push_back(rnorm);
                throw NewtonDivergenceError("newton: residual grew for 5 consecutive iterations",
                                            std::move(trace));
            }
        } else {
            grow_streak = 0;
        }
        trace.push_back(rnorm);
        if (rnorm <= cfg.tol) {
            converged = true;
            break;
        }
        if (it == cfg.max_iter) break;
        LuFactorization jlu = lu_factorize(sys->jacobian(u, vp));
        std::vector<double> step = jlu.solve(r);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] -= step[i];
    }
    if (!converged) {
        throw NewtonDivergenceError(
            "newton: no convergence within " + std::to_string(cfg.max_iter) + " iterations",
            std::move(trace));
    }

    // Factor the Jacobian at the converged state; the backward pass solves the
    // adjoint system (dR/du)^T z = dJ/du with it.
    auto jlu = std::make_shared<LuFactorization>(lu_factorize(sys->jacobian(u, vp)));

    Node n;
    n.op = Op::kNonlinearSolve;
    n.requires_grad = node(params).requires_grad;
    n.inputs = {params.index};
    n.value = std::move(u);
    auto payload = std::make_shared<NonlinearSolvePayload>();
    payload->system = std::move(sys);
    payload->jacobian_lu = std::move(jlu);
    n.nonlinear = std::move(payload);
    return push(std::move(n));
}

GradientMap Tape::backward(VarId loss) const {
    const Node& ln = node(loss);
    if (ln.value.size() != 1) throw std::invalid_argument("backward: loss must be scalar");

    GradientMap out;
    out.adjoints_.resize(nodes_.size());
    out.value_sizes_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) out.value_sizes_[i] = nodes_[i].value.size();

    auto& adj = out.adjoints_;
    auto accum = [&](std::uint32_t idx) -> std::vector<double>& {
        if (adj[idx].empty()) adj[idx].assign(nodes_[idx].value.size(), 0.0);
        return adj[idx];
    };

    adj[loss.index] = {1.0};

    for (std::uint32_t idx = loss.index + 1; idx-- > 0;) {
        const Node& n = nodes_[idx];
        if (n.op == Op::kLeaf || !n.requires_grad || adj[idx].empty()) continue;
        const std::vector<double>& g = adj[idx];

        auto wants = [&](std::size_t i) { return nodes_[n.inputs[i]].requires_grad; };

        switch (n.op) {
            case Op::kAdd: {
                for (int s = 0; s < 2; ++s) {
                    if (!wants(s)) continue;
                    auto& ga = accum(n.inputs[s]);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                }
                break;
            }
            case Op::kSub: {
                if (wants(0)) {
                    auto& ga = accum(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                }
                if (wants(1)) {
                    auto& gb = accum(n.inputs[1]);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                }
                break;
            }
            case Op::kScale: {
                if (wants(0)) {
                    auto& ga = accum(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar_param * g[i];
                }
                break;
            }
            case Op::kMul: {
                const auto va = in(n, 0);
                const auto vb = in(n, 1);
                if (wants(0)) {
                    auto& ga = accum(n.inputs[0]);
                    if (va.size() == 1) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            acc += g[i] * vb[vb.size() == 1 ? 0 : i];
                        }
                        ga[0] += acc;
                    } else {
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            ga[i] += g[i] * vb[vb.size() == 1 ? 0 : i];
                        }
                    }
                }
                if (wants(1)) {
                    auto& gb = accum(n.inputs[1]);
                    if (vb.size() == 1) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            acc += g[i] * va[va.size() == 1 ? 0 : i];
                        }
                        gb[0] += acc;
                    } else {
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            gb[i] += g[i] * va[va.size() == 1 ? 0 : i];
                        }
                    }
                }
                break;
            }
            case Op::kSquare: {
                if (wants(0)) {
                    const auto va = in(n, 0);
                    auto& ga = accum(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * va[i] * g[i];
                }
                break;
            }
            case Op::kDot: {
                const auto va = in(n, 0);
                const auto vb = in(n, 1);
                const double g0 = g[0];
                if (wants(0)) {
                    auto& ga = accum(n.inputs[0]);
                    for (std::size_t i = 0; i < va.size(); ++i) ga[i] += g0 * vb[i];
                }
                if (wants(1)) {
                    auto& gb = accum(n.inputs[1]);
                    for (std::size_t i = 0; i < vb.size(); ++i) gb[i] += g0 * va[i];
                }
                break;
            }
            case Op::kNorm2: {
                if (wants(0)) {
                    const auto va = in(n, 0);
                    const double nv = n.value[0];
                    if (nv > 0.0) {
                        auto& ga = accum(n.inputs[0]);
                        const double f = g[0] / nv;
                        for (std::size_t i = 0; i < va.size(); ++i) ga[i] += f * va[i];
                    } else {
                        accum(n.inputs[0]);  // zero subgradient
                    }
                }
                break;
            }
            case Op::kSum: {
                if (wants(0)) {
                    auto& ga = accum(n.inputs[0]);
                    for (double& x : ga) x += g[0];
                }
                break;
            }
            case Op::kMean: {
                if (wants(0)) {
                    auto& ga = accum(n.inputs[0]);
                    const double f = g[0] / static_cast<double>(ga.size());
                    for (double& x : ga) x += f;
                }
                break;
            }
            case Op::kAbs: {
                if (wants(0)) {
                    const auto va = in(n, 0);
                    auto& ga = accum(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        ga[i] += (va[i] > 0.0 ? 1.0 : (va[i] < 0.0 ? -1.0 : 0.0)) * g[i];
                    }
                }
                break;
            }
            case Op::kConcat: {
                std::size_t off = 0;
                for (std::size_t s = 0; s < n.inputs.size(); ++s) {
                    const std::size_t len = nodes_[n.inputs[s]].value.size();
                    if (wants(s)) {
                        auto& ga = accum(n.inputs[s]);
                        for (std::size_t i = 0; i < len; ++i) ga[i] += g[off + i];
                    }
                    off += len;
                }
                break;
            }
            case Op::kSlice: {
                if (wants(0)) {
                    auto& ga = accum(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[n.dims[0] + i] += g[i];
                }
                break;
            }
            case Op::kSigmoid: {
                if (wants(0)) {
                    auto& ga = accum(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        const double s = n.value[i];
                        ga[i] += s * (1.0 - s) * g[i];
                    }
                }
                break;
            }
            case Op::kClampMin: {
                if (wants(0)) {
                    const auto va = in(n, 0);
                    auto& ga = accum(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        if (va[i] >= n.scalar_param) ga[i] += g[i];
                    }
                }
                break;
            }
            case Op::kAffineBatch: {
                const std::size_t n_in = n.dims[0], n_out = n.dims[1], n_pts = n.dims[2];
                const auto w = in(n, 0);
                const auto x = in(n, 2);
                if (wants(0)) {
                    auto& gw = accum(n.inputs[0]);
                    for (std::size_t p = 0; p < n_pts; ++p) {
                        const double* xp = &x[p * n_in];
                        const double* gp = &g[p * n_out];
                        for (std::size_t o = 0; o < n_out; ++o) {
                            const double go = gp[o];
                            if (go == 0.0) continue;
                            double* gwo = &gw[o * n_in];
                            for (std::size_t i = 0; i < n_in; ++i) gwo[i] += go * xp[i];
                        }
                    }
                }
                if (wants(1)) {
                    auto& gb = accum(n.inputs[1]);
                    for (std::size_t p = 0; p < n_pts; ++p) {
                        for (std::size_t o = 0; o < n_out; ++o) gb[o] += g[p * n_out + o];
                    }
                }
                if (wants(2)) {
                    auto& gx = accum(n.inputs[2]);
                    for (std::size_t p = 0; p < n_pts; ++p) {
                        const double* gp = &g[p * n_out];
                        double* gxp = &gx[p * n_in];
                        for (std::size_t o = 0; o < n_out; ++o) {
                            const double go = gp[o];
                            if (go == 0.0) continue;
                            const double* wo = &w[o * n_in];
                            for (std::size_t i = 0; i < n_in; ++i) gxp[i] += go * wo[i];
                        }
                    }
                }
                break;
            }
            case Op::kLinearSolve: {
                // dJ/db = solve(A^T, dJ/dx); dJ/dA = -(dJ/db) (x) x on the pattern.
                std::vector<double> gb = n.linear->lu->solve_transpose(g);
                if (wants(0)) {
                    auto& acc = accum(n.inputs[0]);
                    for (std::size_t i = 0; i < gb.size(); ++i) acc[i] += gb[i];
                }
                if (n.linear->matrix && wants(1)) {
                    const ParamDependentMatrix& m = *n.linear->matrix;
                    std::vector<double> w(m.rows.size());
                    for (std::size_t e = 0; e < w.size(); ++e) {
                        w[e] = -gb[m.rows[e]] * n.value[m.cols[e]];
                    }
                    auto& gp = accum(n.inputs[1]);
                    m.vjp(in(n, 1), w, gp);
                }
                break;
            }
            case Op::kNonlinearSolve: {
                // Adjoint: (dR/du)^T z = dJ/du, then dJ/dp = -z^T dR/dp.
                if (wants(0)) {
                    std::vector<double> z = n.nonlinear->jacobian_lu->solve_transpose(g);
                    std::vector<double> gp =
                        n.nonlinear->system->param_vjp(n.value, in(n, 0), z);
                    auto& acc = accum(n.inputs[0]);
                    for (std::size_t i = 0; i < gp.size(); ++i) acc[i] -= gp[i];
                }
                break;
            }
            case Op::kLeaf:
                break;
        }
    }

    // Requires-grad leaves untouched by the loss report zeros.
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].op == Op::kLeaf && nodes_[i].requires_grad && adj[i].empty()) {
            adj[i].assign(nodes_[i].value.size(), 0.0);
        }
    }
    return out;
}

double gradient_check(const std::function<VarId(Tape&, VarId)>& program,
                      std::span<const double> x0, double eps) {
    std::vector<double> x(x0.begin(), x0.end());

    Tape tape;
    VarId leaf = tape.variable(x, true);
    VarId loss = program(tape, leaf);
    GradientMap grads = tape.backward(loss);
    auto g = grads.get_vector(leaf);

    auto eval = [&](const std::vector<double>& point) {
        Tape t;
        VarId l = t.variable(point, false);
        return t.scalar_value(program(t, l));
    };

    double max_err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + eps;
        const double fp = eval(x);
        x[i] = saved - eps;
        const double fm = eval(x);
        x[i] = saved;
        const double fd = (fp - fm) / (2.0 * eps);
        const double err =
            std::abs(g[i] - fd) / std::max({1.0, std::abs(g[i]), std::abs(fd)});
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace apde
