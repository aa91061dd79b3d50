#include "apde/mlp.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "apde/fem.hpp"

namespace apde {

namespace {

// Raw generator bits; the stream must not depend on libstdc++ internals.
double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void check_layers(const std::vector<std::size_t>& layers) {
    if (layers.size() < 2) throw std::invalid_argument("mlp: need at least input and output layer");
    for (std::size_t n : layers) {
        if (n == 0) throw std::invalid_argument("mlp: zero-width layer");
    }
}

}  // namespace

std::size_t Mlp::parameter_count(std::span<const std::size_t> layers) {
    std::size_t count = 0;
    for (std::size_t i = 1; i < layers.size(); ++i) {
        count += layers[i - 1] * layers[i] + layers[i];
    }
    return count;
}

Mlp Mlp::create(std::vector<std::size_t> layers, std::uint64_t seed) {
    check_layers(layers);
    Mlp m;
    m.layers = std::move(layers);
    m.params.assign(m.parameter_count(), 0.0);
    std::mt19937_64 rng(seed);
    std::size_t offset = 0;
    for (std::size_t l = 1; l < m.layers.size(); ++l) {
        const std::size_t fan_in = m.layers[l - 1];
        const std::size_t n_w = fan_in * m.layers[l];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < n_w; ++i) {
            m.params[offset + i] = bound * (2.0 * uniform01(rng) - 1.0);
        }
        offset += n_w + m.layers[l];  // biases stay zero
    }
    return m;
}

VarId Mlp::eval(Tape& tape, VarId params_leaf,
                std::span<const std::array<double, 2>> points) const {
    if (tape.value(params_leaf).size() != params.size()) {
        throw std::invalid_argument("mlp eval: parameter leaf has wrong length");
    }
    const std::size_t n_pts = points.size();
    std::vector<double> coords(2 * n_pts);
    for (std::size_t p = 0; p < n_pts; ++p) {
        coords[2 * p] = points[p][0];
        coords[2 * p + 1] = points[p][1];
    }
    VarId activations = tape.constant(std::move(coords));

    std::size_t offset = 0;
    for (std::size_t l = 1; l < layers.size(); ++l) {
        const std::size_t n_in = layers[l - 1];
        const std::size_t n_out = layers[l];
        VarId w = tape.slice(params_leaf, offset, n_in * n_out);
        offset += n_in * n_out;
        VarId b = tape.slice(params_leaf, offset, n_out);
        offset += n_out;
        activations = tape.affine_batch(w, b, activations, n_in, n_out, n_pts);
        if (l + 1 < layers.size()) activations = tape.sigmoid(activations);
    }
    return activations;  // n_out = 1: one value per point
}

std::vector<double> Mlp::eval_values(std::span<const std::array<double, 2>> points) const {
    Tape tape;
    VarId leaf = tape.constant(params);
    VarId out = eval(tape, leaf, points);
    auto v = tape.value(out);
    return {v.begin(), v.end()};
}

void Mlp::save_json(const std::filesystem::path& path) const {
    nlohmann::json j;
    j["layers"] = layers;
    j["params"] = params;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("mlp: cannot write " + path.string());
    out << j.dump(2) << "\n";
}

Mlp Mlp::load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("mlp: cannot read " + path.string());
    nlohmann::json j;
    in >> j;
    Mlp m;
    m.layers = j.at("layers").get<std::vector<std::size_t>>();
    m.params = j.at("params").get<std::vector<double>>();
    check_layers(m.layers);
    if (m.params.size() != m.parameter_count()) {
        throw std::runtime_error("mlp: checkpoint parameter count mismatch");
    }
    return m;
}

RunRecord train_data_driven(Mlp& mlp, std::span<const std::array<double, 2>> points,
                            std::span<const double> targets, Optimizer& optimizer,
                            std::size_t iterations) {
    if (points.size() != targets.size()) {
        throw std::invalid_argument("train_data_driven: points/targets length mismatch");
    }
    std::vector<double> target_vec(targets.begin(), targets.end());
    std::vector<std::array<double, 2>> pts(points.begin(), points.end());
    auto problem = [&mlp, pts = std::move(pts), target_vec](Tape& tape, VarId leaf) {
        VarId pred = mlp.eval(tape, leaf, pts);
        VarId loss = tape.norm2(tape.sub(pred, tape.constant(target_vec)));
        return LossNodes{loss, loss};
    };
    auto params = BoundedParams::unbounded(mlp.params);
    RunRecord record = run_optimization(problem, params, optimizer, {.tol = 0.0, .max_iter = iterations});
    mlp.params = params.value;
    return record;
}

RunRecord train_physics_informed(Mlp& mlp, const RectMesh& mesh,
                                 const KappaPoissonSystem& system,
                                 std::span<const double> u_true_interior, Optimizer& optimizer,
                                 std::size_t iterations, double kappa_min) {
    if (u_true_interior.size() != system.interior.size()) {
        throw std::invalid_argument("train_physics_informed: observation length mismatch");
    }
    std::vector<double> u_true(u_true_interior.begin(), u_true_interior.end());
    std::vector<std::array<double, 2>> nodes(mesh.nodes.begin(), mesh.nodes.end());

    auto problem = [&mlp, &system, nodes = std::move(nodes), u_true,
                    kappa_min](Tape& tape, VarId leaf) {
        VarId kappa = tape.clamp_min(mlp.eval(tape, leaf, nodes), kappa_min);
        VarId rhs = tape.constant(system.rhs);
        VarId u = tape.linear_solve(system.matrix, kappa, rhs);
        VarId loss = tape.norm2(tape.sub(u, tape.constant(u_true)));
        return LossNodes{loss, loss};
    };
    auto params = BoundedParams::unbounded(mlp.params);
    RunRecord record = run_optimization(problem, params, optimizer, {.tol = 0.0, .max_iter = iterations});
    mlp.params = params.value;
    return record;
}

std::pair<RunRecord, RunRecord> train_mixed(Mlp& mlp,
                                            std::span<const std::array<double, 2>> coarse_points,
                                            std::span<const double> coarse_targets,
                                            const RectMesh& fine_mesh,
                                            const KappaPoissonSystem& fine_system,
                                            std::span<const double> u_true_interior,
                                            Optimizer& stage1, Optimizer& stage2,
                                            std::size_t iterations_each, double kappa_min) {
    RunRecord pre = train_data_driven(mlp, coarse_points, coarse_targets, stage1, iterations_each);
    RunRecord tune = train_physics_informed(mlp, fine_mesh, fine_system, u_true_interior, stage2,
                                            iterations_each, kappa_min);
    return {std::move(pre), std::move(tune)};
}

}  // namespace apde
