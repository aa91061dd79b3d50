#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "apde/optimize.hpp"
#include "apde/tape.hpp"

namespace apde {

/// Fully connected feedforward network R^2 -> R with sigmoid hidden layers and
/// identity output, the coefficient surrogate. Parameters live in one flat
/// vector laid out [W1 (row-major), b1, W2, b2, ...] so they can be handed to
/// the optimizer as a single leaf.
struct Mlp {
    std::vector<std::size_t> layers;  // [2, n1, ..., 1]
    std::vector<double> params;

    /// Weights uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero,
    /// fully reproducible from the seed.
    static Mlp create(std::vector<std::size_t> layers, std::uint64_t seed);

    static std::size_t parameter_count(std::span<const std::size_t> layers);
    std::size_t parameter_count() const { return parameter_count(layers); }

    /// Batched forward pass through the tape: params_leaf must hold this
    /// network's flat layout; returns one output per point.
    VarId eval(Tape& tape, VarId params_leaf,
               std::span<const std::array<double, 2>> points) const;

    /// Forward pass without gradient bookkeeping.
    std::vector<double> eval_values(std::span<const std::array<double, 2>> points) const;

    void save_json(const std::filesystem::path& path) const;
    static Mlp load_json(const std::filesystem::path& path);
};

/// Regression of the surrogate onto samples of the true coefficient:
/// minimizes || mlp(points) - targets ||_2. Updates the network in place.
RunRecord train_data_driven(Mlp& mlp, std::span<const std::array<double, 2>> points,
                            std::span<const double> targets, Optimizer& optimizer,
                            std::size_t iterations);

struct KappaPoissonSystem;
struct RectMesh;

/// Optimal-control training: each iteration evaluates kappa at the mesh
/// nodes, floors it at kappa_min, assembles and solves the Poisson system and
/// minimizes || u_true - u(kappa) ||_2 through the solve.
RunRecord train_physics_informed(Mlp& mlp, const RectMesh& mesh,
                                 const KappaPoissonSystem& system,
                                 std::span<const double> u_true_interior, Optimizer& optimizer,
                                 std::size_t iterations, double kappa_min = 1e-3);

/// Regression pre-training on the coarse points followed by physics-informed
/// fine-tuning on the fine mesh.
std::pair<RunRecord, RunRecord> train_mixed(Mlp& mlp,
                                            std::span<const std::array<double, 2>> coarse_points,
                                            std::span<const double> coarse_targets,
                                            const RectMesh& fine_mesh,
                                            const KappaPoissonSystem& fine_system,
                                            std::span<const double> u_true_interior,
                                            Optimizer& stage1, Optimizer& stage2,
                                            std::size_t iterations_each,
                                            double kappa_min = 1e-3);

}  // namespace apde
