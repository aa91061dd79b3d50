#include "apde/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "apde/fd.hpp"
#include "apde/fem.hpp"
#include "apde/mlp.hpp"

namespace apde {

namespace {

constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Small IO helpers
// ---------------------------------------------------------------------------

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

// CSV of rows with a fixed column count; first line is the header.
void write_csv(const std::filesystem::path& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
    std::string text = header + "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) text += ",";
            text += fmt(row[i]);
        }
        text += "\n";
    }
    write_text(path, text);
}

std::vector<std::vector<double>> read_csv(const std::filesystem::path& path,
                                          std::size_t columns) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("observation file missing: " + path.string() +
                          " (run `adjoint-pde observe` first)");
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {  // header
            first = false;
            continue;
        }
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != columns) {
            throw ConfigError("malformed observation row in " + path.string());
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_loss_history(const std::filesystem::path& path, const RunRecord& record) {
    std::string text = "iter,loss\n";
    for (std::size_t i = 0; i < record.loss_history.size(); ++i) {
        text += std::to_string(i) + "," + fmt(record.loss_history[i]) + "\n";
    }
    write_text(path, text);
}

void write_run_outputs(const std::filesystem::path& out_dir, const std::string& example_id,
                       const RunRecord& record,
                       const std::map<std::string, double>& scalars) {
    std::filesystem::create_directories(out_dir);
    write_loss_history(out_dir / "loss_history.csv", record);

    nlohmann::json params;
    params["params"] = record.final_params;
    write_text(out_dir / "params_final.json", params.dump(2) + "\n");

    nlohmann::json summary;
    summary["example"] = example_id;
    summary["final_loss"] = record.loss_history.empty() ? 0.0 : record.loss_history.back();
    summary["iterations"] = record.iterations;
    summary["stop_reason"] = record.stop_reason;
    summary["failed"] = record.failed;
    summary["wall_seconds"] = record.wall_seconds;
    for (const auto& [k, v] : scalars) summary[k] = v;
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
}

double gaussian(std::mt19937_64& rng) {
    const double u1 = 1.0 - static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

void add_noise(std::vector<double>& values, double sigma, std::uint64_t seed) {
    if (sigma == 0.0) return;
    std::mt19937_64 rng(seed);
    for (double& v : values) v += sigma * gaussian(rng);
}

// ---------------------------------------------------------------------------
// Problem data shared between observe, run and gradcheck
// ---------------------------------------------------------------------------

double ex2_force(double x) { return kPi * kPi * std::sin(kPi * x); }
double ex3_force(double x, double t) { return kPi * kPi * std::sin(kPi * x) * std::exp(-t); }
double heat_u0(double x) { return std::sin(kPi * x); }

// Nonlinear heat forcing from the manufactured solution
// u = exp(t - t^2) sin(pi x) sin(pi y).
double ex6_force(double x, double y, double t) {
    const double ss = std::sin(kPi * x) * std::sin(kPi * y);
    const double et2 = std::exp(t * t);
    return (-2.0 * t * et2 + std::exp(t) * ss + et2 + 2.0 * kPi * kPi * et2) *
           std::exp(-2.0 * t * t + t) * ss;
}

double ex6_u0(double x, double y) { return std::sin(kPi * x) * std::sin(kPi * y); }

double ex9_kappa_true(double x, double y) { return 1.0 + 2.0 * x + 3.0 * y * y; }

double ex9_force(double x, double y) {
    return -6.0 * kPi * y * std::sin(kPi * x) * std::cos(kPi * y) +
           2.0 * kPi * kPi * (2.0 * x + 3.0 * y * y + 1.0) * std::sin(kPi * x) *
               std::sin(kPi * y) -
           2.0 * kPi * std::sin(kPi * y) * std::cos(kPi * x);
}

const std::array<double, 6> kFinMuTrue{0.1, 8.37317, 6.57228, 0.466517, 1.88354, 0.01};
const std::array<double, 6> kFinMuRef{1.0, 1.0, 1.0, 1.0, 1.0, 0.1};
const std::array<double, 6> kFinLower{0.1, 0.1, 0.1, 0.1, 0.1, 0.01};
const std::array<double, 6> kFinUpper{10.0, 10.0, 10.0, 10.0, 10.0, 1.0};

std::string base_id(const std::string& example_id) {
    return example_id.rfind("ex9", 0) == 0 ? "ex9" : example_id;
}

std::unique_ptr<Optimizer> make_optimizer(const Config& cfg) {
    const std::string name = cfg.get_string("optimizer");
    const double lr = cfg.get_positive("lr");
    if (name == "rprop") return std::make_unique<Rprop>(lr);
    if (name == "adam") return std::make_unique<Adam>(lr);
    throw ConfigError("unknown optimizer '" + name + "' (use rprop or adam)");
}

std::vector<std::size_t> parse_layers(const std::string& text) {
    std::vector<std::size_t> layers;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) layers.push_back(std::stoul(cell));
    if (layers.size() < 2 || layers.front() != 2 || layers.back() != 1) {
        throw ConfigError("layers must map 2 inputs to 1 output, got '" + text + "'");
    }
    return layers;
}

// Nodal samples of a function on a 1D grid / a mesh.
std::vector<double> sample_1d(const Grid1D& g, const std::function<double(double)>& f) {
    std::vector<double> v(g.n_interior());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(g.node(i));
    return v;
}

std::vector<double> sample_nodes(const RectMesh& mesh,
                                 const std::function<double(double, double)>& f) {
    std::vector<double> v(mesh.n_nodes());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(mesh.nodes[i][0], mesh.nodes[i][1]);
    return v;
}

// Coordinate-stamped field writers/readers with discretization validation.
void write_field_1d(const std::filesystem::path& path, const Grid1D& g,
                    std::span<const double> values) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < values.size(); ++i) {
        rows.push_back({g.node(i), values[i]});
    }
    write_csv(path, "x,value", rows);
}

std::vector<double> read_field_1d(const std::filesystem::path& path, const Grid1D& g) {
    auto rows = read_csv(path, 2);
    if (rows.size() != g.n_interior()) {
        throw ConfigError(path.string() + ": grid size mismatch; regenerate observations");
    }
    std::vector<double> values(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (std::abs(rows[i][0] - g.node(i)) > 1e-9) {
            throw ConfigError(path.string() + ": node coordinates mismatch; regenerate");
        }
        values[i] = rows[i][1];
    }
    return values;
}

void write_field_spacetime(const std::filesystem::path& path, const Grid1D& g,
                           const TimeGrid& t, std::span<const double> values) {
    std::vector<std::vector<double>> rows;
    for (std::size_t j = 0; j < t.n_k; ++j) {
        for (std::size_t i = 0; i < g.n_interior(); ++i) {
            rows.push_back({t.time(j + 1), g.node(i), values[j * g.n_interior() + i]});
        }
    }
    write_csv(path, "t,x,value", rows);
}

std::vector<double> read_field_spacetime(const std::filesystem::path& path, const Grid1D& g,
                                         const TimeGrid& t) {
    auto rows = read_csv(path, 3);
    if (rows.size() != t.n_k * g.n_interior()) {
        throw ConfigError(path.string() + ": space-time size mismatch; regenerate observations");
    }
    std::vector<double> values(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t j = r / g.n_interior();
        const std::size_t i = r % g.n_interior();
        if (std::abs(rows[r][0] - t.time(j + 1)) > 1e-9 ||
            std::abs(rows[r][1] - g.node(i)) > 1e-9) {
            throw ConfigError(path.string() + ": coordinates mismatch; regenerate");
        }
        values[r] = rows[r][2];
    }
    return values;
}

void write_field_2d(const std::filesystem::path& path, const RectMesh& mesh,
                    std::span<const double> values) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < values.size(); ++i) {
        rows.push_back({mesh.nodes[i][0], mesh.nodes[i][1], values[i]});
    }
    write_csv(path, "x,y,value", rows);
}

// `coords` carries the expected point per row (all mesh nodes, or an interior
// subset); a mismatch means the observations came from another discretization.
std::vector<double> read_field_2d(const std::filesystem::path& path,
                                  std::span<const std::array<double, 2>> coords) {
    auto rows = read_csv(path, 3);
    if (rows.size() != coords.size()) {
        throw ConfigError(path.string() + ": mesh size mismatch; regenerate observations");
    }
    std::vector<double> values(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (std::abs(rows[i][0] - coords[i][0]) > 1e-9 ||
            std::abs(rows[i][1] - coords[i][1]) > 1e-9) {
            throw ConfigError(path.string() + ": node coordinates mismatch; regenerate");
        }
        values[i] = rows[i][2];
    }
    return values;
}

std::vector<std::array<double, 2>> interior_coords(const RectMesh& mesh,
                                                   std::span<const std::size_t> interior) {
    std::vector<std::array<double, 2>> coords;
    coords.reserve(interior.size());
    for (std::size_t id : interior) coords.push_back(mesh.nodes[id]);
    return coords;
}

// ---------------------------------------------------------------------------
// Forward problem builders (shared by run_example and gradcheck_example)
// ---------------------------------------------------------------------------

ForwardProblem make_ex1_problem(std::shared_ptr<const LuFactorization> lu,
                                std::vector<double> u_true) {
    return [lu, u_true = std::move(u_true)](Tape& tape, VarId f) {
        VarId ones = tape.constant(std::vector<double>(lu->dim(), 1.0));
        VarId x = tape.linear_solve(lu, tape.mul(f, ones));
        VarId loss = tape.norm2(tape.sub(x, tape.constant(u_true)));
        return LossNodes{loss, loss};
    };
}

ForwardProblem make_rhs_recovery_problem(std::shared_ptr<const LuFactorization> lu,
                                         std::vector<double> u_true, double alpha) {
    // Shared by ex2 (Poisson force) and ex3 (space-time right-hand side).
    return [lu, u_true = std::move(u_true), alpha](Tape& tape, VarId rhs) {
        VarId x = tape.linear_solve(lu, rhs);
        std::vector<VarId> states{x};
        std::vector<std::vector<double>> truth{u_true};
        LossSpec spec{.average = false, .alpha = alpha, .reg = RegKind::kNorm, .reference = {}};
        return tracking_loss(tape, states, truth, spec, rhs);
    };
}

ForwardProblem make_ex4_problem(std::shared_ptr<const LuFactorization> step_lu, TimeGrid t,
                                std::vector<double> u0_true, std::vector<double> u_true_blocks,
                                double alpha) {
    return [step_lu, t, u0_true = std::move(u0_true),
            u_true_blocks = std::move(u_true_blocks), alpha](Tape& tape, VarId u0) {
        const std::size_t m = step_lu->dim();
        auto states = backward_euler_chain(tape, step_lu, t, {}, u0);
        std::vector<VarId> tracked{u0};
        std::vector<std::vector<double>> truth{u0_true};
        for (std::size_t j = 0; j < t.n_k; ++j) {
            tracked.push_back(states[j]);
            truth.emplace_back(u_true_blocks.begin() + static_cast<std::ptrdiff_t>(j * m),
                               u_true_blocks.begin() + static_cast<std::ptrdiff_t>((j + 1) * m));
        }
        LossSpec spec{.average = true, .alpha = alpha, .reg = RegKind::kNorm, .reference = {}};
        return tracking_loss(tape, tracked, truth, spec, u0);
    };
}

ForwardProblem make_ex5_problem(FinSystem system, std::vector<double> u_true, double alpha) {
    return [system = std::move(system), u_true = std::move(u_true), alpha](Tape& tape, VarId mu) {
        VarId u = tape.linear_solve(system.matrix, mu, tape.constant(system.rhs));
        std::vector<VarId> states{u};
        std::vector<std::vector<double>> truth{u_true};
        LossSpec spec{.average = false,
                      .alpha = alpha,
                      .reg = RegKind::kRelativeToRef,
                      .reference = {kFinMuRef.begin(), kFinMuRef.end()}};
        return tracking_loss(tape, states, truth, spec, mu);
    };
}

struct Ex6Chain {
    std::vector<std::shared_ptr<const ResidualSystem>> steps;
    NewtonConfig newton{.tol = 1e-12, .max_iter = 30};
};

Ex6Chain build_ex6_chain(const std::shared_ptr<const RectMesh>& mesh, std::size_t n_steps,
                         double t_final) {
    Ex6Chain chain;
    const double dt = t_final / static_cast<double>(n_steps);
    HeatStepAssembler assembler(mesh, dt);
    for (std::size_t s = 1; s <= n_steps; ++s) {
        const double t_prev = dt * static_cast<double>(s - 1);
        const double t_n = dt * static_cast<double>(s);
        auto f_prev = sample_nodes(*mesh, [&](double x, double y) { return ex6_force(x, y, t_prev); });
        auto f_n = sample_nodes(*mesh, [&](double x, double y) { return ex6_force(x, y, t_n); });
        chain.steps.push_back(assembler.step_system(std::move(f_prev), std::move(f_n)));
    }
    return chain;
}

ForwardProblem make_ex6_problem(Ex6Chain chain, std::vector<double> u0_true,
                                std::vector<double> uT_true, double alpha) {
    return [chain = std::move(chain), u0_true = std::move(u0_true),
            uT_true = std::move(uT_true), alpha](Tape& tape, VarId u0) {
        VarId prev = u0;
        for (const auto& sys : chain.steps) {
            auto warm_start = tape.value(prev);
            prev = tape.nonlinear_solve(sys, prev,
                                        std::vector<double>(warm_start.begin(), warm_start.end()),
                                        chain.newton);
        }
        std::vector<VarId> tracked{u0, prev};
        std::vector<std::vector<double>> truth{u0_true, uT_true};
        LossSpec spec{.average = false, .alpha = alpha, .reg = RegKind::kNorm, .reference = {}};
        return tracking_loss(tape, tracked, truth, spec, u0);
    };
}

// ---------------------------------------------------------------------------
// Configuration schemas
// ---------------------------------------------------------------------------

std::map<std::string, std::string> common_defaults(const std::string& id) {
    return {
        {"out_dir", "out/" + id},
        {"obs_dir", "obs/" + base_id(id)},
        {"noise_sigma", "0"},
        {"seed", "0"},
        {"snapshot_stride", "0"},
        {"tol", "1e-6"},
    };
}

}  // namespace

const std::vector<std::string>& known_examples() {
    static const std::vector<std::string> ids{"ex1", "ex2", "ex3",        "ex4",
                                              "ex5", "ex6", "ex9-data",   "ex9-physics",
                                              "ex9-mixed"};
    return ids;
}

std::map<std::string, std::string> default_config(const std::string& id) {
    auto cfg = common_defaults(id);
    auto put = [&cfg](std::initializer_list<std::pair<const char*, const char*>> kv) {
        for (const auto& [k, v] : kv) cfg[k] = v;
    };
    if (id == "ex1") {
        put({{"n_h", "50"}, {"f_true", "-1"}, {"f_guess", "2"}, {"optimizer", "rprop"},
             {"lr", "0.1"}, {"max_iter", "110"}});
    } else if (id == "ex2") {
        put({{"n_h", "50"}, {"alpha", "0.099"}, {"optimizer", "rprop"}, {"lr", "0.1"},
             {"max_iter", "1000"}});
    } else if (id == "ex3") {
        put({{"n_h", "150"}, {"n_k", "50"}, {"t_final", "1"}, {"alpha", "0.01"},
             {"optimizer", "rprop"}, {"lr", "0.1"}, {"max_iter", "1000"}});
    } else if (id == "ex4") {
        put({{"n_h", "150"}, {"n_k", "50"}, {"t_final", "1"}, {"alpha", "0.1"},
             {"optimizer", "rprop"}, {"lr", "0.1"}, {"max_iter", "500"}});
    } else if (id == "ex5") {
        put({{"nx_per_unit", "4"}, {"alpha", "0.1"}, {"optimizer", "rprop"}, {"lr", "0.01"},
             {"max_iter", "100"}});
    } else if (id == "ex6") {
        put({{"n_elem", "10"}, {"n_steps", "100"}, {"t_final", "1"}, {"alpha", "0.1"},
             {"optimizer", "rprop"}, {"lr", "0.1"}, {"max_iter", "100"}});
    } else if (id == "ex9-data" || id == "ex9-physics" || id == "ex9-mixed") {
        put({{"n_elem", "40"}, {"n_coarse", "4"}, {"layers", "2,20,1"}, {"iters", "250"},
             {"optimizer", "adam"}, {"lr", "0.01"}, {"kappa_min", "1e-3"}});
    } else {
        throw ConfigError("unknown example id '" + id + "'");
    }
    return cfg;
}

void generate_observations(const std::string& example_id, const Config& overrides) {
    const Config cfg = overrides.resolved_against(default_config(example_id));
    const std::filesystem::path obs(cfg.get_string("obs_dir"));
    std::filesystem::create_directories(obs);
    const double sigma = cfg.get_double("noise_sigma");
    const auto seed = static_cast<std::uint64_t>(cfg.get_size("seed"));

    if (example_id == "ex1") {
        Grid1D g(cfg.get_size("n_h"));
        auto u = poisson1d_solution(g, cfg.get_double("f_true"));
        add_noise(u, sigma, seed);
        write_field_1d(obs / "u_true.csv", g, u);
    } else if (example_id == "ex2") {
        Grid1D g(cfg.get_size("n_h"));
        auto u = poisson1d_solution(g, sample_1d(g, ex2_force));
        add_noise(u, sigma, seed);
        write_field_1d(obs / "u_true.csv", g, u);
    } else if (example_id == "ex3") {
        Grid1D g(cfg.get_size("n_h"));
        TimeGrid t(cfg.get_size("n_k"), cfg.get_positive("t_final"));
        const std::size_t m = g.n_interior();
        std::vector<double> force(t.n_k * m);
        for (std::size_t j = 0; j < t.n_k; ++j) {
            for (std::size_t i = 0; i < m; ++i) {
                force[j * m + i] = ex3_force(g.node(i), t.time(j + 1));
            }
        }
        auto rhs = heat_spacetime_rhs(g, t, force, sample_1d(g, heat_u0));
        auto u = lu_factorize(heat_spacetime_matrix(g, t)).solve(rhs);
        add_noise(u, sigma, seed);
        write_field_spacetime(obs / "u_true.csv", g, t, u);
    } else if (example_id == "ex4") {
        Grid1D g(cfg.get_size("n_h"));
        TimeGrid t(cfg.get_size("n_k"), cfg.get_positive("t_final"));
        auto u0 = sample_1d(g, heat_u0);
        auto lu = heat_step_factorization(g, t);
        std::vector<double> stacked;
        std::vector<double> prev = u0;
        for (std::size_t j = 0; j < t.n_k; ++j) {
            std::vector<double> rhs(prev.size());
            for (std::size_t i = 0; i < prev.size(); ++i) rhs[i] = prev[i] / t.k();
            prev = lu->solve(rhs);
            stacked.insert(stacked.end(), prev.begin(), prev.end());
        }
        add_noise(stacked, sigma, seed);
        write_field_1d(obs / "u0_true.csv", g, u0);
        write_field_spacetime(obs / "u_true.csv", g, t, stacked);
    } else if (example_id == "ex5") {
        auto mesh = build_fin_mesh(cfg.get_size("nx_per_unit"));
        auto system = assemble_fin_system(mesh);
        auto u = solve_fin(system, CoefficientField::per_subdomain(kFinMuTrue));
        add_noise(u, sigma, seed);
        write_field_2d(obs / "u_true.csv", mesh, u);
    } else if (example_id == "ex6") {
        auto mesh = std::make_shared<const RectMesh>(
            build_unit_square_mesh(cfg.get_size("n_elem"), cfg.get_size("n_elem")));
        const std::size_t n_steps = cfg.get_size("n_steps");
        auto chain = build_ex6_chain(mesh, n_steps, cfg.get_positive("t_final"));
        auto u0 = sample_nodes(*mesh, ex6_u0);
        for (std::size_t i = 0; i < u0.size(); ++i) {
            if (mesh->node_dirichlet[i]) u0[i] = 0.0;
        }

        Tape tape;
        VarId prev = tape.constant(u0);
        for (const auto& sys : chain.steps) {
            auto warm = tape.value(prev);
            prev = tape.nonlinear_solve(sys, prev, {warm.begin(), warm.end()}, chain.newton);
        }
        auto last = tape.value(prev);
        std::vector<double> u_final(last.begin(), last.end());
        add_noise(u_final, sigma, seed);
        write_field_2d(obs / "u0_true.csv", *mesh, u0);
        write_field_2d(obs / "uT_true.csv", *mesh, u_final);
    } else if (base_id(example_id) == "ex9") {
        const std::size_t n = cfg.get_size("n_elem");
        auto mesh = build_unit_square_mesh(n, n);
        auto kappa = sample_nodes(mesh, ex9_kappa_true);
        write_field_2d(obs / "kappa_fine.csv", mesh, kappa);

        auto coarse = build_unit_square_mesh(cfg.get_size("n_coarse"), cfg.get_size("n_coarse"));
        write_field_2d(obs / "kappa_coarse.csv", coarse, sample_nodes(coarse, ex9_kappa_true));

        auto system = assemble_kappa_poisson(mesh, ex9_force);
        auto u = solve_kappa_poisson(system, CoefficientField::nodal(kappa));
        add_noise(u, sigma, seed);
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < system.interior.size(); ++i) {
            const auto& xy = mesh.nodes[system.interior[i]];
            rows.push_back({xy[0], xy[1], u[i]});
        }
        write_csv(obs / "u_true.csv", "x,y,value", rows);
    } else {
        throw ConfigError("unknown example id '" + example_id + "'");
    }
}

ExperimentResult run_example(const std::string& example_id, const Config& overrides) {
    const Config cfg = overrides.resolved_against(default_config(example_id));
    const std::filesystem::path obs(cfg.get_string("obs_dir"));
    const std::filesystem::path out(cfg.get_string("out_dir"));
    std::filesystem::create_directories(out);

    auto optimizer = make_optimizer(cfg);
    const StopRule stop{cfg.get_double("tol"), cfg.get_size("max_iter")};
    const auto stride = cfg.get_size("snapshot_stride");

    ExperimentResult result;
    result.out_dir = out;

    if (example_id == "ex1") {
        Grid1D g(cfg.get_size("n_h"));
        auto u_true = read_field_1d(obs / "u_true.csv", g);
        auto lu = std::make_shared<LuFactorization>(lu_factorize(poisson1d_stiffness(g)));
        auto problem = make_ex1_problem(lu, u_true);

        auto params = BoundedParams::unbounded({cfg.get_double("f_guess")});
        result.record = run_optimization(problem, params, *optimizer, stop, stride);
        result.scalars["f_final"] = params.value[0];
        result.scalars["f_error"] = std::abs(params.value[0] - cfg.get_double("f_true"));

        auto u_final = lu->solve(std::vector<double>(g.n_interior(), params.value[0]));
        write_field_1d(out / "solution_final.csv", g, u_final);
    } else if (example_id == "ex2") {
        Grid1D g(cfg.get_size("n_h"));
        auto u_true = read_field_1d(obs / "u_true.csv", g);
        auto lu = std::make_shared<LuFactorization>(lu_factorize(poisson1d_stiffness(g)));
        auto problem = make_rhs_recovery_problem(lu, u_true, cfg.get_double("alpha"));

        auto params = BoundedParams::unbounded(std::vector<double>(g.n_interior(), 0.0));
        result.record = run_optimization(problem, params, *optimizer, stop, stride);
        write_field_1d(out / "force_final.csv", g, params.value);
        write_field_1d(out / "solution_final.csv", g, lu->solve(params.value));
    } else if (example_id == "ex3") {
        Grid1D g(cfg.get_size("n_h"));
        TimeGrid t(cfg.get_size("n_k"), cfg.get_positive("t_final"));
        auto u_true = read_field_spacetime(obs / "u_true.csv", g, t);
        auto lu = std::make_shared<LuFactorization>(lu_factorize(heat_spacetime_matrix(g, t)));
        auto problem = make_rhs_recovery_problem(lu, u_true, cfg.get_double("alpha"));

        auto params =
            BoundedParams::unbounded(std::vector<double>(t.n_k * g.n_interior(), 0.0));
        result.record = run_optimization(problem, params, *optimizer, stop, stride);
        write_field_spacetime(out / "force_final.csv", g, t, params.value);
        write_field_spacetime(out / "solution_final.csv", g, t, lu->solve(params.value));
    } else if (example_id == "ex4") {
        Grid1D g(cfg.get_size("n_h"));
        TimeGrid t(cfg.get_size("n_k"), cfg.get_positive("t_final"));
        auto u0_true = read_field_1d(obs / "u0_true.csv", g);
        auto u_true = read_field_spacetime(obs / "u_true.csv", g, t);
        auto step_lu = heat_step_factorization(g, t);
        auto problem = make_ex4_problem(step_lu, t, u0_true, u_true, cfg.get_double("alpha"));

        auto params = BoundedParams::unbounded(std::vector<double>(g.n_interior(), 0.0));
        result.record = run_optimization(problem, params, *optimizer, stop, stride);
        write_field_1d(out / "u0_final.csv", g, params.value);

        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < params.value.size(); ++i) {
            num += (params.value[i] - u0_true[i]) * (params.value[i] - u0_true[i]);
            den += u0_true[i] * u0_true[i];
        }
        result.scalars["u0_rel_l2_error"] = std::sqrt(num) / std::sqrt(den);
        result.fields["u0_final"] = params.value;
        result.fields["u0_true"] = u0_true;
    } else if (example_id == "ex5") {
        auto mesh = build_fin_mesh(cfg.get_size("nx_per_unit"));
        auto u_true = read_field_2d(obs / "u_true.csv", mesh.nodes);
        auto system = assemble_fin_system(mesh);
        auto problem = make_ex5_problem(system, u_true, cfg.get_double("alpha"));

        auto params = BoundedParams::boxed(std::vector<double>(6, 0.5),
                                           {kFinLower.begin(), kFinLower.end()},
                                           {kFinUpper.begin(), kFinUpper.end()});
        result.record = run_optimization(problem, params, *optimizer, stop, stride);
        for (int i = 0; i < 5; ++i) {
            result.scalars["kappa" + std::to_string(i)] = params.value[static_cast<std::size_t>(i)];
        }
        result.scalars["bi"] = params.value[5];
        auto u_final = solve_fin(system, CoefficientField::per_subdomain(
                                             {params.value[0], params.value[1], params.value[2],
                                              params.value[3], params.value[4], params.value[5]}));
        write_field_2d(out / "solution_final.csv", mesh, u_final);
    } else if (example_id == "ex6") {
        auto mesh = std::make_shared<const RectMesh>(
            build_unit_square_mesh(cfg.get_size("n_elem"), cfg.get_size("n_elem")));
        auto u0_true = read_field_2d(obs / "u0_true.csv", mesh->nodes);
        auto uT_true = read_field_2d(obs / "uT_true.csv", mesh->nodes);
        auto chain = build_ex6_chain(mesh, cfg.get_size("n_steps"), cfg.get_positive("t_final"));
        auto problem =
            make_ex6_problem(std::move(chain), u0_true, uT_true, cfg.get_double("alpha"));

        auto params = BoundedParams::unbounded(std::vector<double>(mesh->n_nodes(), 0.0));
        result.record = run_optimization(problem, params, *optimizer, stop, stride);
        write_field_2d(out / "u0_final.csv", *mesh, params.value);

        double max_err = 0.0;
        for (std::size_t i = 0; i < params.value.size(); ++i) {
            if (mesh->node_dirichlet[i]) continue;
            max_err = std::max(max_err, std::abs(params.value[i] -
                                                 ex6_u0(mesh->nodes[i][0], mesh->nodes[i][1])));
        }
        result.scalars["u0_max_error_interior"] = max_err;
        result.fields["u0_final"] = params.value;
    } else if (base_id(example_id) == "ex9") {
        const std::size_t n = cfg.get_size("n_elem");
        auto mesh = build_unit_square_mesh(n, n);
        auto layers = parse_layers(cfg.get_string("layers"));
        const auto seed = static_cast<std::uint64_t>(cfg.get_size("seed"));
        const auto iters = cfg.get_size("iters");
        const double kappa_min = cfg.get_positive("kappa_min");

        Mlp mlp = Mlp::create(layers, seed);
        result.scalars["n_params"] = static_cast<double>(mlp.parameter_count());

        if (example_id == "ex9-data") {
            auto kappa_true = read_field_2d(obs / "kappa_fine.csv", mesh.nodes);
            result.record =
                train_data_driven(mlp, mesh.nodes, kappa_true, *optimizer, iters);
        } else {
            auto system = assemble_kappa_poisson(mesh, ex9_force);
            auto u_true =
                read_field_2d(obs / "u_true.csv", interior_coords(mesh, system.interior));
            if (example_id == "ex9-physics") {
                result.record = train_physics_informed(mlp, mesh, system, u_true, *optimizer,
                                                       iters, kappa_min);
            } else {
                auto coarse =
                    build_unit_square_mesh(cfg.get_size("n_coarse"), cfg.get_size("n_coarse"));
                auto kappa_coarse = read_field_2d(obs / "kappa_coarse.csv", coarse.nodes);
                auto stage1 = make_optimizer(cfg);
                auto [pre, tune] = train_mixed(mlp, coarse.nodes, kappa_coarse, mesh, system,
                                               u_true, *stage1, *optimizer, iters, kappa_min);
                result.record = tune;
                result.scalars["pretrain_final_loss"] =
                    pre.loss_history.empty() ? 0.0 : pre.loss_history.back();
                write_loss_history(out / "loss_history_pretrain.csv", pre);
            }
            // Final forward field for plotting.
            std::vector<double> kappa_final = mlp.eval_values(mesh.nodes);
            for (double& k : kappa_final) k = std::max(k, kappa_min);
            auto u_final =
                solve_kappa_poisson(system, CoefficientField::nodal(kappa_final));
            std::vector<double> u_nodal(mesh.n_nodes(), 0.0);
            for (std::size_t i = 0; i < system.interior.size(); ++i) {
                u_nodal[system.interior[i]] = u_final[i];
            }
            write_field_2d(out / "solution_final.csv", mesh, u_nodal);
        }

        auto kappa_final = mlp.eval_values(mesh.nodes);
        double max_err = 0.0;
        for (std::size_t i = 0; i < mesh.n_nodes(); ++i) {
            max_err = std::max(max_err, std::abs(kappa_final[i] - ex9_kappa_true(mesh.nodes[i][0],
                                                                                  mesh.nodes[i][1])));
        }
        result.scalars["kappa_max_error"] = max_err;
        result.fields["kappa_final"] = kappa_final;
        write_field_2d(out / "kappa_final.csv", mesh, kappa_final);
        mlp.save_json(out / "mlp_final.json");
    } else {
        throw ConfigError("unknown example id '" + example_id + "'");
    }

    write_run_outputs(out, example_id, result.record, result.scalars);
    if (!result.fields.count("params_final")) {
        result.fields["params_final"] = result.record.final_params;
    }
    return result;
}

double gradcheck_example(const std::string& example_id, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    auto uniform = [&rng](double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    };

    auto check = [](const ForwardProblem& problem, std::span<const double> x0, double eps) {
        auto program = [&problem](Tape& tape, VarId x) { return problem(tape, x).objective; };
        return gradient_check(program, x0, eps);
    };

    if (example_id == "ex1") {
        Grid1D g(8);
        auto lu = std::make_shared<LuFactorization>(lu_factorize(poisson1d_stiffness(g)));
        auto problem = make_ex1_problem(lu, poisson1d_solution(g, -1.0));
        std::vector<double> f0{uniform(-2.0, 2.0)};
        return check(problem, f0, 1e-6);
    }
    if (example_id == "ex2") {
        Grid1D g(8);
        auto lu = std::make_shared<LuFactorization>(lu_factorize(poisson1d_stiffness(g)));
        auto problem =
            make_rhs_recovery_problem(lu, poisson1d_solution(g, sample_1d(g, ex2_force)), 0.099);
        std::vector<double> f0(g.n_interior());
        for (double& x : f0) x = uniform(-1.0, 1.0);
        return check(problem, f0, 1e-6);
    }
    if (example_id == "ex3") {
        Grid1D g(6);
        TimeGrid t(4, 1.0);
        auto lu = std::make_shared<LuFactorization>(lu_factorize(heat_spacetime_matrix(g, t)));
        std::vector<double> u_ref(t.n_k * g.n_interior());
        for (double& x : u_ref) x = uniform(-1.0, 1.0);
        auto problem = make_rhs_recovery_problem(lu, u_ref, 0.01);
        std::vector<double> b0(t.n_k * g.n_interior());
        for (double& x : b0) x = uniform(-1.0, 1.0);
        return check(problem, b0, 1e-6);
    }
    if (example_id == "ex4") {
        Grid1D g(6);
        TimeGrid t(4, 1.0);
        auto lu = heat_step_factorization(g, t);
        std::vector<double> u0_true = sample_1d(g, heat_u0);
        std::vector<double> blocks(t.n_k * g.n_interior());
        for (double& x : blocks) x = uniform(-1.0, 1.0);
        auto problem = make_ex4_problem(lu, t, u0_true, blocks, 0.1);
        std::vector<double> u0(g.n_interior());
        for (double& x : u0) x = uniform(-1.0, 1.0);
        return check(problem, u0, 1e-6);
    }
    if (example_id == "ex5") {
        auto mesh = build_fin_mesh(1);
        auto system = assemble_fin_system(mesh);
        auto u_true = solve_fin(system, CoefficientField::per_subdomain(kFinMuTrue));
        auto problem = make_ex5_problem(std::move(system), u_true, 0.1);
        std::vector<double> mu(6);
        for (std::size_t i = 0; i < 5; ++i) mu[i] = uniform(0.3, 5.0);
        mu[5] = uniform(0.05, 0.8);
        return check(problem, mu, 1e-6);
    }
    if (example_id == "ex6") {
        auto mesh = std::make_shared<const RectMesh>(build_unit_square_mesh(3, 3));
        auto chain = build_ex6_chain(mesh, 3, 0.3);
        auto u0_true = sample_nodes(*mesh, ex6_u0);
        for (std::size_t i = 0; i < u0_true.size(); ++i) {
            if (mesh->node_dirichlet[i]) u0_true[i] = 0.0;
        }
        std::vector<double> uT_ref(mesh->n_nodes());
        for (double& x : uT_ref) x = uniform(-0.5, 0.5);
        auto problem = make_ex6_problem(std::move(chain), u0_true, uT_ref, 0.1);
        std::vector<double> u0(mesh->n_nodes());
        for (double& x : u0) x = uniform(-0.5, 0.5);
        return check(problem, u0, 1e-6);
    }
    if (base_id(example_id) == "ex9") {
        auto mesh = build_unit_square_mesh(4, 4);
        auto system = assemble_kappa_poisson(mesh, ex9_force);
        auto u_true =
            solve_kappa_poisson(system, CoefficientField::nodal(sample_nodes(mesh, ex9_kappa_true)));
        Mlp mlp = Mlp::create({2, 20, 1}, seed);
        auto nodes = mesh.nodes;
        ForwardProblem problem = [&mlp, &system, nodes, u_true](Tape& tape, VarId leaf) {
            VarId kappa = tape.clamp_min(mlp.eval(tape, leaf, nodes), 1e-3);
            VarId u = tape.linear_solve(system.matrix, kappa, tape.constant(system.rhs));
            VarId loss = tape.norm2(tape.sub(u, tape.constant(u_true)));
            return LossNodes{loss, loss};
        };
        return check(problem, mlp.params, 1e-6);
    }
    throw ConfigError("unknown example id '" + example_id + "'");
}

}  // namespace apde
