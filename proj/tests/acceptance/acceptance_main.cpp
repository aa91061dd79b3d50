// Acceptance suite: runs every criterion end to end and prints one PASS/FAIL
// line per criterion. Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "apde/experiments.hpp"
#include "apde/fd.hpp"
#include "apde/mlp.hpp"
#include "apde/sparse.hpp"
#include "apde/tape.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace apde;

namespace {

struct Criterion {
    std::string name;
    std::function<bool(std::string&)> run;
};

std::vector<Criterion>& registry() {
    static std::vector<Criterion> r;
    return r;
}

fs::path scratch_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / "apde_acceptance" / tag;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Config dir_config(const fs::path& root,
                  std::initializer_list<std::pair<const char*, const char*>> extra = {}) {
    Config cfg;
    cfg.set("obs_dir", (root / "obs").string());
    cfg.set("out_dir", (root / "out").string());
    for (const auto& [k, v] : extra) cfg.set(k, v);
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

char msgbuf[512];

#define DETAIL(...)                                         \
    do {                                                    \
        std::snprintf(msgbuf, sizeof(msgbuf), __VA_ARGS__); \
        detail = msgbuf;                                    \
    } while (0)

// ---------------------------------------------------------------------------
// Criterion 1: Example 1 reproduction
// ---------------------------------------------------------------------------

bool c1_example1(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    auto root = scratch_dir("c1");
    auto cfg = dir_config(root);  // paper settings are the defaults
    generate_observations("ex1", cfg);
    auto result = run_example("ex1", cfg);
    const double elapsed = seconds_since(t0);

    const double final_loss = result.record.loss_history.back();
    const double f_err = std::abs(result.scalars.at("f_final") + 1.0);
    DETAIL("loss %.3e after %zu steps (budget 110), |f+1| = %.3e, %.2f s", final_loss,
           result.record.iterations, f_err, elapsed);
    return !result.record.failed && final_loss <= 1e-6 && result.record.iterations <= 110 &&
           f_err <= 1e-5 && elapsed < 1.0;
}

// ---------------------------------------------------------------------------
// Criterion 2: space-time vs time-stepping equivalence (states and gradients)
// ---------------------------------------------------------------------------

bool c2_equivalence(std::string& detail) {
    Grid1D g(20);
    TimeGrid t(10, 1.0);
    const std::size_t m = g.n_interior();
    std::mt19937_64 rng(1234);

    std::vector<double> u0(m), force(t.n_k * m), ref(t.n_k * m);
    for (double& x : u0) x = oracle::uniform(rng, -1.0, 1.0);
    for (double& x : force) x = oracle::uniform(rng, -1.0, 1.0);
    for (double& x : ref) x = oracle::uniform(rng, -1.0, 1.0);

    // Sequential time stepping.
    Tape t1;
    VarId u0v1 = t1.variable(u0, true);
    VarId fv1 = t1.variable(force, true);
    std::vector<VarId> step_forces;
    for (std::size_t j = 0; j < t.n_k; ++j) step_forces.push_back(t1.slice(fv1, j * m, m));
    auto states = backward_euler_chain(t1, g, t, step_forces, u0v1);
    VarId stack1 = t1.concat(states);
    VarId loss1 = t1.norm2(t1.sub(stack1, t1.constant(ref)));
    auto grads1 = t1.backward(loss1);

    // Monolithic space-time system.
    Tape t2;
    VarId u0v2 = t2.variable(u0, true);
    VarId fv2 = t2.variable(force, true);
    VarId u0s = t2.scale(u0v2, 1.0 / t.k());
    std::vector<VarId> first{u0s, t2.constant(std::vector<double>((t.n_k - 1) * m, 0.0))};
    VarId rhs = t2.add(fv2, t2.concat(first));
    VarId stack2 = t2.linear_solve(heat_spacetime_matrix(g, t), rhs);
    VarId loss2 = t2.norm2(t2.sub(stack2, t2.constant(ref)));
    auto grads2 = t2.backward(loss2);

    double state_diff = 0.0;
    auto s1 = t1.value(stack1);
    auto s2 = t2.value(stack2);
    for (std::size_t i = 0; i < s1.size(); ++i) {
        state_diff = std::max(state_diff, std::abs(s1[i] - s2[i]));
    }
    const double grad_diff =
        oracle::l2_diff(grads1.get_vector(u0v1), grads2.get_vector(u0v2));

    DETAIL("max state diff %.3e (tol 1e-10), u0-gradient diff %.3e (tol 1e-9)", state_diff,
           grad_diff);
    return state_diff <= 1e-10 && grad_diff <= 1e-9;
}

// ---------------------------------------------------------------------------
// Criterion 3: Example 4 recovery against the IRLS pseudo-solve bias floor
// ---------------------------------------------------------------------------

// Direct (tape-free) minimizer of
//   J(u0) = 1/(n_k+1) sum_j ||H^j (u0 - u0_true)|| + alpha ||u0||
// by iteratively reweighted least squares on dense matrices.
double irls_bias_floor(const Grid1D& g, const TimeGrid& t, const std::vector<double>& u0_true,
                       double alpha) {
    const std::size_t m = g.n_interior();
    const double inv_k = 1.0 / t.k();

    // Dense step matrix H = (1/k) (1/k I + K)^{-1} via the dense oracle.
    auto kh = poisson1d_stiffness(g).to_dense();
    oracle::Dense a = kh;
    for (std::size_t i = 0; i < m; ++i) a[i][i] += inv_k;
    oracle::Dense h = oracle::zeros(m, m);
    for (std::size_t c = 0; c < m; ++c) {
        std::vector<double> e(m, 0.0);
        e[c] = inv_k;
        auto col = oracle::dense_solve(a, e);
        for (std::size_t r = 0; r < m; ++r) h[r][c] = col[r];
    }

    // Powers V_j = H^j and their Gram matrices P_j = V_j^T V_j, j = 0..n_k.
    std::vector<oracle::Dense> powers{oracle::zeros(m, m)};
    for (std::size_t i = 0; i < m; ++i) powers[0][i][i] = 1.0;
    for (std::size_t j = 1; j <= t.n_k; ++j) {
        powers.push_back(oracle::dense_matmul(h, powers.back()));
    }
    std::vector<oracle::Dense> gram;
    for (const auto& v : powers) gram.push_back(oracle::dense_matmul(oracle::dense_transpose(v), v));

    const double track_w = 1.0 / static_cast<double>(t.n_k + 1);
    std::vector<double> u0(m);
    for (std::size_t i = 0; i < m; ++i) u0[i] = 0.5 * u0_true[i];

    for (int iter = 0; iter < 100; ++iter) {
        std::vector<double> e(m);
        for (std::size_t i = 0; i < m; ++i) e[i] = u0[i] - u0_true[i];

        oracle::Dense lhs = oracle::zeros(m, m);
        std::vector<double> rhs(m, 0.0);
        for (std::size_t j = 0; j <= t.n_k; ++j) {
            const double r = std::max(oracle::l2_norm(oracle::dense_matvec(powers[j], e)), 1e-12);
            const double w = track_w / r;
            for (std::size_t x = 0; x < m; ++x) {
                for (std::size_t y = 0; y < m; ++y) lhs[x][y] += w * gram[j][x][y];
            }
            auto pu = oracle::dense_matvec(gram[j], u0_true);
            for (std::size_t x = 0; x < m; ++x) rhs[x] += w * pu[x];
        }
        const double w0 = alpha / std::max(oracle::l2_norm(u0), 1e-12);
        for (std::size_t x = 0; x < m; ++x) lhs[x][x] += w0;

        auto next = oracle::dense_solve(lhs, rhs);
        double delta = 0.0;
        for (std::size_t i = 0; i < m; ++i) delta = std::max(delta, std::abs(next[i] - u0[i]));
        u0 = std::move(next);
        if (delta < 1e-12) break;
    }

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        num += (u0[i] - u0_true[i]) * (u0[i] - u0_true[i]);
        den += u0_true[i] * u0_true[i];
    }
    return std::sqrt(num / den);
}

bool c3_ex4_recovery(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    auto root = scratch_dir("c3");
    auto cfg = dir_config(root);  // n_h=150, n_k=50, alpha=0.1, 500 rprop steps
    generate_observations("ex4", cfg);
    auto result = run_example("ex4", cfg);

    Grid1D g(150);
    TimeGrid t(50, 1.0);
    std::vector<double> u0_true(g.n_interior());
    for (std::size_t i = 0; i < u0_true.size(); ++i) {
        u0_true[i] = std::sin(std::numbers::pi * g.node(i));
    }
    const double floor = irls_bias_floor(g, t, u0_true, 0.1);
    const double rel_err = result.scalars.at("u0_rel_l2_error");
    const double final_loss = result.record.loss_history.back();
    const double elapsed = seconds_since(t0);

    DETAIL("loss %.3e (tol 1e-2), rel err %.4f vs bias floor %.4f (+0.10), %.1f s", final_loss,
           rel_err, floor, elapsed);
    return !result.record.failed && final_loss < 1e-2 && rel_err <= floor + 0.10 &&
           elapsed < 120.0;
}

// ---------------------------------------------------------------------------
// Criterion 4: thermal fin parameter recovery
// ---------------------------------------------------------------------------

bool c4_thermal_fin(std::string& detail) {
    auto root = scratch_dir("c4");
    auto cfg = dir_config(root);  // defaults: clamp, rprop lr 0.01, 100 steps
    generate_observations("ex5", cfg);
    auto result = run_example("ex5", cfg);

    const std::array<double, 5> kappa_true{0.1, 8.37317, 6.57228, 0.466517, 1.88354};
    const auto& p = result.record.final_params;
    const bool pinned = p[0] == 0.1 && p[5] == 0.01;
    double worst_rel = 0.0;
    for (std::size_t i = 1; i <= 4; ++i) {
        worst_rel = std::max(worst_rel, std::abs(p[i] - kappa_true[i]) / kappa_true[i]);
    }
    DETAIL("kappa0 %.6g, Bi %.6g (bounds 0.1/0.01), worst interior kappa error %.2f%% (tol 5%%)",
           p[0], p[5], 100.0 * worst_rel);
    return !result.record.failed && pinned && worst_rel <= 0.05;
}

// ---------------------------------------------------------------------------
// Criterion 5: nonlinear heat initial-condition recovery
// ---------------------------------------------------------------------------

bool c5_nonlinear_heat(std::string& detail) {
    auto root = scratch_dir("c5");
    auto cfg = dir_config(root);  // defaults: 10x10, 100 CN steps, 100 iterations
    generate_observations("ex6", cfg);
    auto result = run_example("ex6", cfg);

    const double final_loss = result.record.loss_history.back();
    const double max_err = result.scalars.at("u0_max_error_interior");
    DETAIL("loss %.4f (tol 0.08), interior u0 max error %.4f (tol 0.1)", final_loss, max_err);
    return !result.record.failed && final_loss <= 0.08 && max_err <= 0.1;
}

// ---------------------------------------------------------------------------
// Criterion 6: gradient-check suite across all in-scope examples
// ---------------------------------------------------------------------------

bool c6_gradient_checks(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Entry {
        const char* id;
        double tol;
    };
    const std::array<Entry, 7> entries{{{"ex1", 1e-6},
                                        {"ex2", 1e-6},
                                        {"ex3", 1e-6},
                                        {"ex4", 1e-6},
                                        {"ex5", 1e-6},
                                        {"ex6", 1e-5},
                                        {"ex9-physics", 1e-5}}};
    std::string report;
    bool ok = true;
    for (const auto& e : entries) {
        const double err = gradcheck_example(e.id, 7);
        if (err > e.tol) ok = false;
        report += std::string(e.id) + "=" + std::to_string(err) + " ";
    }
    const double elapsed = seconds_since(t0);
    DETAIL("%s(%.1f s, budget 30)", report.c_str(), elapsed);
    return ok && elapsed < 30.0;
}

// ---------------------------------------------------------------------------
// Criterion 7: linear-solve adjoint identity on 100 random sparse systems
// ---------------------------------------------------------------------------

bool c7_adjoint_identity(std::string& detail) {
    std::mt19937_64 rng(99);
    double worst_identity = 0.0;
    double worst_fd = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 49;
        std::vector<std::size_t> rows, cols;
        std::vector<double> vals;
        std::vector<double> row_abs(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i != j && oracle::uniform01(rng) < 0.15) {
                    rows.push_back(i);
                    cols.push_back(j);
                    vals.push_back(oracle::uniform(rng, -1.0, 1.0));
                    row_abs[i] += std::abs(vals.back());
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            rows.push_back(i);
            cols.push_back(i);
            vals.push_back(row_abs[i] + 1.0 + oracle::uniform01(rng));
        }

        // The matrix entries are themselves the parameters.
        const std::size_t nnz = vals.size();
        std::vector<std::vector<std::pair<std::size_t, double>>> sens(nnz);
        for (std::size_t e = 0; e < nnz; ++e) sens[e] = {{e, 1.0}};
        auto pdm = ParamDependentMatrix::affine(n, nnz, rows, cols,
                                                std::vector<double>(nnz, 0.0), sens);

        std::vector<double> b(n), w(n);
        for (double& x : b) x = oracle::uniform(rng, -1.0, 1.0);
        for (double& x : w) x = oracle::uniform(rng, -1.0, 1.0);

        Tape tape;
        VarId bv = tape.variable(b, true);
        VarId entries = tape.variable(vals, true);
        VarId x = tape.linear_solve(pdm, entries, bv);
        VarId loss = tape.dot(tape.constant(w), x);
        auto grads = tape.backward(loss);

        // A^T (dJ/db) must equal dJ/dx = w.
        auto matrix = pdm->assemble(vals);
        auto atgb = matrix.multiply_transpose(grads.get(bv));
        worst_identity = std::max(
            worst_identity, oracle::l2_diff(atgb, w) / std::max(1.0, oracle::l2_norm(w)));

        // Pattern-restricted dJ/dA against central differences.
        auto program = [&pdm, &b, &w](Tape& t, VarId p) {
            VarId xx = t.linear_solve(pdm, p, t.constant(b));
            return t.dot(t.constant(w), xx);
        };
        worst_fd = std::max(worst_fd, gradient_check(program, vals, 1e-6));
    }
    DETAIL("identity residual %.3e (tol 1e-10), dJ/dA fd error %.3e (tol 1e-6)", worst_identity,
           worst_fd);
    return worst_identity <= 1e-10 && worst_fd <= 1e-6;
}

// ---------------------------------------------------------------------------
// Criterion 8: Kronecker space-time assembly vs independent block assembly
// ---------------------------------------------------------------------------

bool c8_spacetime_oracle(std::string& detail) {
    for (std::size_t n_h : {2u, 3u, 4u}) {
        for (std::size_t n_k : {1u, 2u, 3u}) {
            Grid1D g(n_h);
            TimeGrid t(n_k, 1.0);
            const std::size_t m = g.n_interior();
            auto got = heat_spacetime_matrix(g, t).to_dense();

            auto kh = poisson1d_stiffness(g).to_dense();
            const double inv_k = 1.0 / t.k();
            for (std::size_t j = 0; j < n_k; ++j) {
                for (std::size_t r = 0; r < m; ++r) {
                    for (std::size_t c = 0; c < m; ++c) {
                        double expect = kh[r][c] + (r == c ? inv_k : 0.0);
                        if (got[j * m + r][j * m + c] != expect) {
                            DETAIL("diagonal block mismatch at n_h=%zu n_k=%zu", n_h, n_k);
                            return false;
                        }
                        expect = (j > 0 && r == c) ? -inv_k : 0.0;
                        if (j > 0 && got[j * m + r][(j - 1) * m + c] != expect) {
                            DETAIL("coupling block mismatch at n_h=%zu n_k=%zu", n_h, n_k);
                            return false;
                        }
                    }
                }
            }
        }
    }
    DETAIL("entry-exact for (n_h, n_k) in {2,3,4} x {1,2,3}");
    return true;
}

// ---------------------------------------------------------------------------
// Criterion 9: MLP parameter count and mixed-vs-physics comparison
// ---------------------------------------------------------------------------

bool c9_surrogate(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    if (Mlp::parameter_count(std::vector<std::size_t>{2, 20, 1}) != 81) {
        DETAIL("[2,20,1] parameter count is not 81");
        return false;
    }

    auto root = scratch_dir("c9");
    auto base = dir_config(root);
    generate_observations("ex9-physics", base);

    int mixed_wins = 0;
    std::string per_seed;
    for (int seed = 0; seed < 5; ++seed) {
        auto cfg_p = dir_config(root, {{"seed", std::to_string(seed).c_str()}});
        cfg_p.set("seed", std::to_string(seed));
        cfg_p.set("out_dir", (root / ("out_p" + std::to_string(seed))).string());
        auto physics = run_example("ex9-physics", cfg_p);

        auto cfg_m = dir_config(root);
        cfg_m.set("seed", std::to_string(seed));
        cfg_m.set("out_dir", (root / ("out_m" + std::to_string(seed))).string());
        auto mixed = run_example("ex9-mixed", cfg_m);

        const double pe = physics.scalars.at("kappa_max_error");
        const double me = mixed.scalars.at("kappa_max_error");
        if (me <= pe) ++mixed_wins;
        per_seed += "s" + std::to_string(seed) + ":" + (me <= pe ? "m" : "p") + " ";
    }
    const double elapsed = seconds_since(t0);
    DETAIL("81 params; mixed <= physics on %d/5 seeds (need 4) [%s] %.0f s (budget 300)",
           mixed_wins, per_seed.c_str(), elapsed);
    return mixed_wins >= 4 && elapsed < 300.0;
}

// ---------------------------------------------------------------------------
// Criterion 10: determinism of repeated runs
// ---------------------------------------------------------------------------

bool c10_determinism(std::string& detail) {
    auto root = scratch_dir("c10");
    struct Case {
        const char* id;
    };
    for (const char* id : {"ex1", "ex5", "ex6"}) {
        auto cfg = dir_config(root / id);
        generate_observations(id, cfg);

        auto cfg_a = dir_config(root / id);
        cfg_a.set("out_dir", (root / id / "out_a").string());
        auto cfg_b = dir_config(root / id);
        cfg_b.set("out_dir", (root / id / "out_b").string());
        run_example(id, cfg_a);
        run_example(id, cfg_b);
        if (slurp(root / id / "out_a" / "loss_history.csv") !=
            slurp(root / id / "out_b" / "loss_history.csv")) {
            DETAIL("%s loss histories differ between identical runs", id);
            return false;
        }
    }
    DETAIL("ex1, ex5, ex6 loss histories bit-identical across reruns");
    return true;
}

}  // namespace

int main() {
    registry().push_back({"C1 example 1 reproduction", c1_example1});
    registry().push_back({"C2 space-time / time-stepping equivalence", c2_equivalence});
    registry().push_back({"C3 example 4 recovery vs bias floor", c3_ex4_recovery});
    registry().push_back({"C4 thermal fin recovery", c4_thermal_fin});
    registry().push_back({"C5 nonlinear heat recovery", c5_nonlinear_heat});
    registry().push_back({"C6 gradient-check suite", c6_gradient_checks});
    registry().push_back({"C7 linear-solve adjoint identity", c7_adjoint_identity});
    registry().push_back({"C8 space-time assembly oracle", c8_spacetime_oracle});
    registry().push_back({"C9 surrogate training modes", c9_surrogate});
    registry().push_back({"C10 determinism", c10_determinism});

    int failures = 0;
    for (auto& c : registry()) {
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] %s — %s\n", ok ? "PASS" : "FAIL", c.name.c_str(), detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(registry().size()) - failures,
                registry().size());
    return failures;
}
