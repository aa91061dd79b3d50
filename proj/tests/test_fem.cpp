#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "apde/fem.hpp"
#include "support/oracles.hpp"

using apde::CoefficientField;
using apde::EdgeTag;
using apde::RectMesh;
using apde::Tape;
using apde::VarId;

namespace {
constexpr double kPi = std::numbers::pi;

double fin_area_oracle() {
    // Post (2.5,3.5)x(0,4) plus four strips ((0,2.5) u (3.5,6)) x (i-0.25, i),
    // each 0.25 tall and 2.5 + 2.5 wide.
    return 1.0 * 4.0 + 4.0 * (2.5 + 2.5) * 0.25;
}

void check_symmetric(const apde::SparseMatrix& m, double tol = 1e-13) {
    auto d = m.to_dense();
    for (std::size_t i = 0; i < m.n_rows(); ++i) {
        for (std::size_t j = 0; j < m.n_cols(); ++j) {
            CHECK(std::abs(d[i][j] - d[j][i]) <= tol);
        }
    }
}

}  // namespace

TEST_SUITE("fem") {

TEST_CASE("fin mesh: subdomains are unambiguous and geometry checks out") {
    for (std::size_t n : {1u, 2u, 4u}) {
        auto mesh = apde::build_fin_mesh(n);
        for (const auto& cell : mesh.cells) {
            CHECK(cell.subdomain >= 0);
            CHECK(cell.subdomain <= 4);
            const double cx = cell.x0 + 0.5 * cell.hx;
            const double cy = cell.y0 + 0.5 * cell.hy;
            if (cell.subdomain == 0) {
                CHECK(cx > 2.5);
                CHECK(cx < 3.5);
            } else {
                CHECK((cx < 2.5 || cx > 3.5));
                CHECK(cy > cell.subdomain - 0.25);
                CHECK(cy < cell.subdomain);
            }
        }
        CHECK(mesh.area() == doctest::Approx(fin_area_oracle()).epsilon(1e-12));

        double neumann_len = 0.0;
        for (const auto& e : mesh.boundary_edges) {
            CHECK(e.tag != EdgeTag::kNone);
            if (e.tag == EdgeTag::kNeumann) neumann_len += e.length;
        }
        CHECK(neumann_len == doctest::Approx(1.0));
    }
}

TEST_CASE("unit square mesh marks the whole boundary Dirichlet") {
    auto mesh = apde::build_unit_square_mesh(4, 4);
    CHECK(mesh.n_nodes() == 25);
    CHECK(mesh.interior_nodes().size() == 9);
    std::size_t boundary = 0;
    for (bool d : mesh.node_dirichlet) boundary += d ? 1 : 0;
    CHECK(boundary == 16);
    CHECK(mesh.area() == doctest::Approx(1.0));
}

TEST_CASE("mass and stiffness matrices are symmetric") {
    auto mesh = apde::build_unit_square_mesh(5, 3);
    check_symmetric(apde::assemble_mass(mesh));
    check_symmetric(apde::assemble_stiffness(mesh));

    auto fin = apde::build_fin_mesh(2);
    check_symmetric(apde::assemble_robin_mass(fin));
    for (int s = 0; s < 5; ++s) check_symmetric(apde::assemble_stiffness(fin, s));
}

TEST_CASE("mass matrix integrates constants to the mesh area") {
    auto mesh = apde::build_unit_square_mesh(6, 6);
    auto m = apde::assemble_mass(mesh);
    std::vector<double> ones(mesh.n_nodes(), 1.0);
    auto m1 = m.multiply(ones);
    double total = 0.0;
    for (double v : m1) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fin system: affine structure in the parameters") {
    auto mesh = apde::build_fin_mesh(1);
    auto system = apde::assemble_fin_system(mesh);

    std::vector<double> mu1{0.7, 1.2, 2.0, 0.4, 1.1, 0.3};
    std::vector<double> mu2{1.5, 0.6, 0.9, 2.2, 0.8, 0.05};
    std::vector<double> sum(6);
    for (int i = 0; i < 6; ++i) sum[static_cast<std::size_t>(i)] = mu1[static_cast<std::size_t>(i)] + mu2[static_cast<std::size_t>(i)];

    auto a1 = system.matrix->assemble(mu1).to_dense();
    auto a2 = system.matrix->assemble(mu2).to_dense();
    auto a12 = system.matrix->assemble(sum).to_dense();
    for (std::size_t i = 0; i < a1.size(); ++i) {
        for (std::size_t j = 0; j < a1.size(); ++j) {
            CHECK(a12[i][j] == doctest::Approx(a1[i][j] + a2[i][j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("fin system rejects nonpositive coefficients") {
    auto mesh = apde::build_fin_mesh(1);
    auto system = apde::assemble_fin_system(mesh);
    std::vector<double> bad{1.0, 1.0, -0.5, 1.0, 1.0, 0.1};
    std::vector<double> values(system.matrix->rows.size());
    CHECK_THROWS_AS(system.matrix->eval(bad, values), std::invalid_argument);
}

TEST_CASE("fin rhs lives on the Neumann edge and sums to its length") {
    auto mesh = apde::build_fin_mesh(2);
    auto system = apde::assemble_fin_system(mesh);
    double total = 0.0;
    for (std::size_t i = 0; i < system.rhs.size(); ++i) {
        if (system.rhs[i] != 0.0) {
            CHECK(mesh.nodes[i][1] == doctest::Approx(0.0));
            CHECK(mesh.nodes[i][0] >= 2.5 - 1e-12);
            CHECK(mesh.nodes[i][0] <= 3.5 + 1e-12);
        }
        total += system.rhs[i];
    }
    CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("fin solution with the true parameters is finite and warm near the inlet") {
    auto mesh = apde::build_fin_mesh(2);
    auto system = apde::assemble_fin_system(mesh);
    auto u = apde::solve_fin(
        system, CoefficientField::per_subdomain({0.1, 8.37317, 6.57228, 0.466517, 1.88354, 0.01}));
    double max_at_inlet = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        CHECK(std::isfinite(u[i]));
        if (mesh.nodes[i][1] == 0.0) max_at_inlet = std::max(max_at_inlet, u[i]);
    }
    CHECK(max_at_inlet > 0.0);
}

TEST_CASE("fin gradient chain matches finite differences on a coarse mesh") {
    auto mesh = apde::build_fin_mesh(1);
    auto system = apde::assemble_fin_system(mesh);
    auto program = [&system](Tape& t, VarId mu) {
        VarId u = t.linear_solve(system.matrix, mu, t.constant(system.rhs));
        return t.norm2(u);
    };
    std::vector<double> mu0{0.5, 2.0, 1.5, 0.8, 1.2, 0.2};
    CHECK(apde::gradient_check(program, mu0, 1e-6) <= 1e-6);
}

TEST_CASE("kappa poisson: zero force gives the zero solution") {
    auto mesh = apde::build_unit_square_mesh(8, 8);
    auto system = apde::assemble_kappa_poisson(mesh, [](double, double) { return 0.0; });
    auto u = apde::solve_kappa_poisson(
        system, CoefficientField::nodal(std::vector<double>(mesh.n_nodes(), 1.0)));
    for (double v : u) CHECK(std::abs(v) <= 1e-12);
}

TEST_CASE("kappa poisson converges at second order for the unit coefficient") {
    auto solve_err = [](std::size_t n) {
        auto mesh = apde::build_unit_square_mesh(n, n);
        auto system = apde::assemble_kappa_poisson(mesh, [](double x, double y) {
            return 2.0 * kPi * kPi * std::sin(kPi * x) * std::sin(kPi * y);
        });
        auto u = apde::solve_kappa_poisson(
            system, CoefficientField::nodal(std::vector<double>(mesh.n_nodes(), 1.0)));
        double err = 0.0;
        for (std::size_t i = 0; i < system.interior.size(); ++i) {
            const auto& xy = mesh.nodes[system.interior[i]];
            err = std::max(err, std::abs(u[i] - std::sin(kPi * xy[0]) * std::sin(kPi * xy[1])));
        }
        return err;
    };
    const double e20 = solve_err(20);
    const double e40 = solve_err(40);
    CHECK(e20 / e40 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("kappa poisson reproduces the manufactured variable-coefficient pair") {
    auto kappa_true = [](double x, double y) { return 1.0 + 2.0 * x + 3.0 * y * y; };
    auto force = [](double x, double y) {
        return -6.0 * kPi * y * std::sin(kPi * x) * std::cos(kPi * y) +
               2.0 * kPi * kPi * (2.0 * x + 3.0 * y * y + 1.0) * std::sin(kPi * x) *
                   std::sin(kPi * y) -
               2.0 * kPi * std::sin(kPi * y) * std::cos(kPi * x);
    };
    auto solve_err = [&](std::size_t n) {
        auto mesh = apde::build_unit_square_mesh(n, n);
        auto system = apde::assemble_kappa_poisson(mesh, force);
        std::vector<double> kappa(mesh.n_nodes());
        for (std::size_t i = 0; i < kappa.size(); ++i) {
            kappa[i] = kappa_true(mesh.nodes[i][0], mesh.nodes[i][1]);
        }
        auto u = apde::solve_kappa_poisson(system, CoefficientField::nodal(kappa));
        double err = 0.0;
        for (std::size_t i = 0; i < system.interior.size(); ++i) {
            const auto& xy = mesh.nodes[system.interior[i]];
            err = std::max(err, std::abs(u[i] - std::sin(kPi * xy[0]) * std::sin(kPi * xy[1])));
        }
        return err;
    };
    const double e20 = solve_err(20);
    const double e40 = solve_err(40);
    CHECK(e40 <= 0.01);
    CHECK(e20 / e40 == doctest::Approx(4.0).epsilon(0.2));
}

TEST_CASE("kappa poisson gradient chain matches finite differences") {
    auto mesh = apde::build_unit_square_mesh(4, 4);
    auto system = apde::assemble_kappa_poisson(
        mesh, [](double x, double y) { return std::sin(kPi * x) * y; });
    auto program = [&system](Tape& t, VarId kappa) {
        VarId u = t.linear_solve(system.matrix, kappa, t.constant(system.rhs));
        return t.norm2(u);
    };
    std::mt19937_64 rng(3);
    std::vector<double> kappa0(mesh.n_nodes());
    for (double& k : kappa0) k = oracle::uniform(rng, 0.5, 3.0);
    CHECK(apde::gradient_check(program, kappa0, 1e-6) <= 1e-6);
}

TEST_CASE("nonlinear heat step: rest state stays at rest") {
    auto mesh = std::make_shared<const RectMesh>(apde::build_unit_square_mesh(3, 3));
    apde::HeatStepAssembler assembler(mesh, 0.1);
    auto sys = assembler.step_system(std::vector<double>(mesh->n_nodes(), 0.0),
                                     std::vector<double>(mesh->n_nodes(), 0.0));
    std::vector<double> zero(mesh->n_nodes(), 0.0);
    auto r = sys->residual(zero, zero);
    for (double v : r) CHECK(v == 0.0);

    Tape t;
    VarId u_prev = t.constant(zero);
    VarId u = t.nonlinear_solve(sys, u_prev, zero);
    for (double v : t.value(u)) CHECK(v == 0.0);
}

TEST_CASE("nonlinear heat jacobian is consistent with the residual") {
    auto mesh = std::make_shared<const RectMesh>(apde::build_unit_square_mesh(3, 3));
    apde::HeatStepAssembler assembler(mesh, 0.05);
    std::mt19937_64 rng(7);
    std::vector<double> f_prev(mesh->n_nodes()), f_n(mesh->n_nodes());
    for (double& v : f_prev) v = oracle::uniform(rng, -1.0, 1.0);
    for (double& v : f_n) v = oracle::uniform(rng, -1.0, 1.0);
    auto sys = assembler.step_system(f_prev, f_n);

    std::vector<double> u(mesh->n_nodes()), p(mesh->n_nodes());
    for (double& v : u) v = oracle::uniform(rng, -1.0, 1.0);
    for (double& v : p) v = oracle::uniform(rng, -1.0, 1.0);

    auto jac = sys->jacobian(u, p).to_dense();
    const double eps = 1e-6;
    for (std::size_t j = 0; j < u.size(); ++j) {
        auto up = u;
        auto um = u;
        up[j] += eps;
        um[j] -= eps;
        auto rp = sys->residual(up, p);
        auto rm = sys->residual(um, p);
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double fd = (rp[i] - rm[i]) / (2.0 * eps);
            CHECK(std::abs(jac[i][j] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("one Crank-Nicolson step gradient w.r.t. the previous state") {
    auto mesh = std::make_shared<const RectMesh>(apde::build_unit_square_mesh(3, 3));
    apde::HeatStepAssembler assembler(mesh, 0.05);
    std::vector<double> zero(mesh->n_nodes(), 0.0);
    auto sys = assembler.step_system(zero, zero);

    auto program = [&sys, &zero](Tape& t, VarId u_prev) {
        VarId u = t.nonlinear_solve(sys, u_prev, zero, {.tol = 1e-13, .max_iter = 30});
        return t.norm2(u);
    };
    std::mt19937_64 rng(21);
    std::vector<double> u_prev(mesh->n_nodes());
    for (double& v : u_prev) v = oracle::uniform(rng, -0.5, 0.5);
    CHECK(apde::gradient_check(program, u_prev, 1e-5) <= 1e-5);
}

TEST_CASE("Crank-Nicolson chain reproduces the manufactured nonlinear heat solution") {
    // u_true = exp(t - t^2) sin(pi x) sin(pi y); at (1/2, 1/2, T=1) it equals 1.
    const std::size_t n = 10, steps = 100;
    const double t_final = 1.0;
    auto mesh = std::make_shared<const RectMesh>(apde::build_unit_square_mesh(n, n));
    const double dt = t_final / static_cast<double>(steps);
    apde::HeatStepAssembler assembler(mesh, dt);

    auto force = [](double x, double y, double t) {
        const double ss = std::sin(kPi * x) * std::sin(kPi * y);
        const double et2 = std::exp(t * t);
        return (-2.0 * t * et2 + std::exp(t) * ss + et2 + 2.0 * kPi * kPi * et2) *
               std::exp(-2.0 * t * t + t) * ss;
    };

    std::vector<double> u(mesh->n_nodes());
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = mesh->node_dirichlet[i]
                   ? 0.0
                   : std::sin(kPi * mesh->nodes[i][0]) * std::sin(kPi * mesh->nodes[i][1]);
    }

    Tape tape;
    VarId state = tape.constant(u);
    for (std::size_t s = 1; s <= steps; ++s) {
        std::vector<double> f_prev(mesh->n_nodes()), f_n(mesh->n_nodes());
        for (std::size_t i = 0; i < mesh->n_nodes(); ++i) {
            f_prev[i] = force(mesh->nodes[i][0], mesh->nodes[i][1], dt * static_cast<double>(s - 1));
            f_n[i] = force(mesh->nodes[i][0], mesh->nodes[i][1], dt * static_cast<double>(s));
        }
        auto sys = assembler.step_system(f_prev, f_n);
        auto warm = tape.value(state);
        state = tape.nonlinear_solve(sys, state, {warm.begin(), warm.end()});
    }

    std::size_t center = SIZE_MAX;
    for (std::size_t i = 0; i < mesh->n_nodes(); ++i) {
        if (mesh->nodes[i][0] == 0.5 && mesh->nodes[i][1] == 0.5) center = i;
    }
    REQUIRE(center != SIZE_MAX);
    CHECK(tape.value(state)[center] == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("dirichlet rows keep boundary values pinned to zero") {
    auto mesh = std::make_shared<const RectMesh>(apde::build_unit_square_mesh(4, 4));
    apde::HeatStepAssembler assembler(mesh, 0.1);
    std::vector<double> ones(mesh->n_nodes(), 1.0);
    auto sys = assembler.step_system(ones, ones);
    Tape t;
    std::vector<double> u_prev(mesh->n_nodes(), 0.3);  // nonzero boundary in the parameter
    VarId prev = t.constant(u_prev);
    VarId u = t.nonlinear_solve(sys, prev, std::vector<double>(mesh->n_nodes(), 0.0));
    for (std::size_t i = 0; i < mesh->n_nodes(); ++i) {
        if (mesh->node_dirichlet[i]) CHECK(t.value(u)[i] == 0.0);
    }
}

}  // TEST_SUITE
