#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "apde/tape.hpp"

namespace apde {

/// Flat parameter vector with optional per-entry box bounds.
struct BoundedParams {
    std::vector<double> value;
    std::vector<double> lower;  // empty means unbounded
    std::vector<double> upper;

    static BoundedParams unbounded(std::vector<double> v) { return {std::move(v), {}, {}}; }
    static BoundedParams boxed(std::vector<double> v, std::vector<double> lo,
                               std::vector<double> hi);

    std::size_t size() const { return value.size(); }

    /// Elementwise clamp onto [lower, upper]; idempotent.
    void project();
};

class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(BoundedParams& params, std::span<const double> grad) = 0;
};

/// Resilient backpropagation without weight-backtracking: per-parameter step
/// sizes grow by eta_plus on sign agreement and shrink by eta_minus on a sign
/// flip, in which case the flipped coordinate skips this update and its stored
/// gradient is zeroed for the next comparison.
class Rprop : public Optimizer {
public:
    explicit Rprop(double learning_rate) : lr_(learning_rate) {}

    void step(BoundedParams& params, std::span<const double> grad) override;

    std::span<const double> step_sizes() const { return step_size_; }

    double eta_minus = 0.5;
    double eta_plus = 1.2;
    double step_min = 1e-6;
    double step_max = 50.0;

private:
    double lr_;
    std::vector<double> step_size_;
    std::vector<double> prev_grad_;
};

/// Adam with bias correction.
class Adam : public Optimizer {
public:
    explicit Adam(double learning_rate) : lr_(learning_rate) {}

    void step(BoundedParams& params, std::span<const double> grad) override;

    std::size_t timestep() const { return t_; }

    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

private:
    double lr_;
    std::size_t t_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

/// Loss pair built per forward pass: `objective` is what backward runs on,
/// `monitor` is the tracking value that is recorded and tested against the
/// stop tolerance (the regularization term participates in gradients but not
/// in the printed trace).
struct LossNodes {
    VarId objective;
    VarId monitor;
};

enum class RegKind { kNone, kNorm, kRelativeToRef };

/// Tracking term over a set of states plus optional Tikhonov regularization.
struct LossSpec {
    bool average = false;  // multiply the tracking sum by 1/#states
    double alpha = 0.0;
    RegKind reg = RegKind::kNone;
    std::vector<double> reference;  // for kRelativeToRef: || (q - ref) / ref ||
};

LossNodes tracking_loss(Tape& tape, std::span<const VarId> guess_states,
                        std::span<const std::vector<double>> true_states, const LossSpec& spec,
                        VarId reg_target);

struct StopRule {
    double tol = 1e-6;
    std::size_t max_iter = 100;
};

struct RunRecord {
    std::vector<double> loss_history;  // length = iterations + 1 on success
    std::vector<double> final_params;
    std::string stop_reason;  // "tol_reached", "max_iter", or "forward_failure: ..."
    bool failed = false;
    std::size_t iterations = 0;
    double wall_seconds = 0.0;
    std::vector<std::pair<std::size_t, std::vector<double>>> snapshots;
};

using ForwardProblem = std::function<LossNodes(Tape&, VarId params)>;

/// Generic optimization loop: forward on a fresh tape, record the monitor
/// loss, backward on the objective, optimizer step, projection. Stops when
/// the monitor drops to `stop.tol` or after `stop.max_iter` iterations.
RunRecord run_optimization(const ForwardProblem& problem, BoundedParams& params,
                           Optimizer& optimizer, StopRule stop,
                           std::size_t snapshot_stride = 0);

}  // namespace apde
