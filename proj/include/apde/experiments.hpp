#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "apde/config.hpp"
#include "apde/optimize.hpp"

namespace apde {

/// Thrown when a forward solve inside an experiment fails (singular system,
/// Newton divergence); the CLI maps it to exit code 3.
class SolverFailure : public std::runtime_error {
public:
    explicit SolverFailure(const std::string& what) : std::runtime_error(what) {}
};

struct ExperimentResult {
    RunRecord record;
    std::map<std::string, double> scalars;
    std::map<std::string, std::vector<double>> fields;
    std::filesystem::path out_dir;
};

/// Recognized experiment ids: ex1 .. ex6, ex9-data, ex9-physics, ex9-mixed.
const std::vector<std::string>& known_examples();

/// Schema (defaults) for one experiment; overrides must stay inside it.
std::map<std::string, std::string> default_config(const std::string& example_id);

/// Forward-solves with the true parameters and persists the observation files
/// under obs_dir. Deterministic; optional seeded Gaussian noise of standard
/// deviation `noise_sigma` supports robustness studies (0 = exact data).
void generate_observations(const std::string& example_id, const Config& overrides);

/// Runs one recovery experiment against previously persisted observations and
/// writes loss_history.csv, params_final.json, summary.json and the field
/// CSVs into a fresh run directory.
ExperimentResult run_example(const std::string& example_id, const Config& overrides);

/// Tape gradient vs central finite differences for this example's loss at a
/// seeded random feasible point on a coarse mesh; returns the max relative
/// error.
double gradcheck_example(const std::string& example_id, std::uint64_t seed = 0);

}  // namespace apde
