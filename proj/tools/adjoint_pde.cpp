// Command-line front end for the optimal-control experiments:
//   adjoint-pde observe <example-id> [--config FILE] [--set key=value]...
//   adjoint-pde run     <example-id> [--config FILE] [--set key=value]... [--out DIR]
//   adjoint-pde gradcheck <example-id> [--seed N]
// Exits 0 on success, 2 on configuration errors, 3 on solver failures.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "apde/experiments.hpp"

namespace {

apde::Config collect_config(const std::string& config_file,
                            const std::vector<std::string>& overrides,
                            const std::string& out_dir) {
    apde::Config cfg;
    if (!config_file.empty()) cfg = apde::Config::from_file(config_file);
    for (const std::string& kv : overrides) cfg.apply_override(kv);
    if (!out_dir.empty()) cfg.set("out_dir", out_dir);
    return cfg;
}

std::string joined_ids() {
    std::string s;
    for (const auto& id : apde::known_examples()) {
        if (!s.empty()) s += ", ";
        s += id;
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Differentiable-PDE optimal control experiments"};
    app.require_subcommand(1);

    std::string example_id, config_file, out_dir;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* cmd, bool with_out) {
        cmd->add_option("example", example_id, "experiment id (" + joined_ids() + ")")
            ->required();
        cmd->add_option("--config", config_file, "key = value configuration file");
        cmd->add_option("--set", overrides, "override, e.g. --set n_h=80")->take_all();
        if (with_out) cmd->add_option("--out", out_dir, "output directory for this run");
    };

    CLI::App* observe = app.add_subcommand("observe", "generate and persist true observations");
    add_common(observe, false);
    CLI::App* run = app.add_subcommand("run", "run a recovery experiment");
    add_common(run, true);
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "tape gradient vs finite differences on a coarse mesh");
    gradcheck->add_option("example", example_id, "experiment id")->required();
    gradcheck->add_option("--seed", seed, "seed for the random feasible point");

    CLI11_PARSE(app, argc, argv);

    try {
        if (observe->parsed()) {
            apde::generate_observations(example_id, collect_config(config_file, overrides, ""));
            std::printf("observations for %s written\n", example_id.c_str());
            return 0;
        }
        if (run->parsed()) {
            auto result =
                apde::run_example(example_id, collect_config(config_file, overrides, out_dir));
            const double final_loss =
                result.record.loss_history.empty() ? 0.0 : result.record.loss_history.back();
            std::printf("%s: %zu iterations, final loss %.6g, stop: %s\n", example_id.c_str(),
                        result.record.iterations, final_loss, result.record.stop_reason.c_str());
            std::printf("outputs in %s\n", result.out_dir.string().c_str());
            if (result.record.failed) {
                std::fprintf(stderr, "solver failure: %s\n", result.record.stop_reason.c_str());
                return 3;
            }
            return 0;
        }
        if (gradcheck->parsed()) {
            const double err = apde::gradcheck_example(example_id, seed);
            std::printf("%s gradient check: max relative error %.3e\n", example_id.c_str(), err);
            return 0;
        }
    } catch (const apde::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return 3;
    }
    return 0;
}
