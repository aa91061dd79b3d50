#include "apde/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace apde {

BoundedParams BoundedParams::boxed(std::vector<double> v, std::vector<double> lo,
                                   std::vector<double> hi) {
    if (lo.size() != v.size() || hi.size() != v.size()) {
        throw std::invalid_argument("BoundedParams: bound length mismatch");
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(lo[i] <= hi[i]) || !std::isfinite(lo[i]) || !std::isfinite(hi[i])) {
            throw std::invalid_argument("BoundedParams: invalid bounds at index " +
                                        std::to_string(i));
        }
    }
    return {std::move(v), std::move(lo), std::move(hi)};
}

void BoundedParams::project() {
    if (lower.empty()) return;
    for (std::size_t i = 0; i < value.size(); ++i) {
        value[i] = std::clamp(value[i], lower[i], upper[i]);
    }
}

void Rprop::step(BoundedParams& params, std::span<const double> grad) {
    if (grad.size() != params.size()) throw std::invalid_argument("rprop: gradient size mismatch");
    for (double g : grad) {
        if (!std::isfinite(g)) throw std::invalid_argument("rprop: non-finite gradient");
    }
    if (step_size_.empty()) {
        step_size_.assign(params.size(), lr_);
        prev_grad_.assign(params.size(), 0.0);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        double g = grad[i];
        const double agreement = g * prev_grad_[i];
        if (agreement > 0.0) {
            step_size_[i] = std::min(step_size_[i] * eta_plus, step_max);
        } else if (agreement < 0.0) {
            step_size_[i] = std::max(step_size_[i] * eta_minus, step_min);
            g = 0.0;  // skip this update and the next sign comparison
        }
        if (g > 0.0) {
            params.value[i] -= step_size_[i];
        } else if (g < 0.0) {
            params.value[i] += step_size_[i];
        }
        prev_grad_[i] = g;
    }
}

void Adam::step(BoundedParams& params, std::span<const double> grad) {
    if (grad.size() != params.size()) throw std::invalid_argument("adam: gradient size mismatch");
    for (double g : grad) {
        if (!std::isfinite(g)) throw std::invalid_argument("adam: non-finite gradient");
    }
    if (m_.empty()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1 * m_[i] + (1.0 - beta1) * grad[i];
        v_[i] = beta2 * v_[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double m_hat = m_[i] / bc1;
        const double v_hat = v_[i] / bc2;
        params.value[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps);
    }
}

LossNodes tracking_loss(Tape& tape, std::span<const VarId> guess_states,
                        std::span<const std::vector<double>> true_states, const LossSpec& spec,
                        VarId reg_target) {
    if (guess_states.size() != true_states.size() || guess_states.empty()) {
        throw std::invalid_argument("tracking_loss: state count mismatch");
    }
    VarId tracking;
    for (std::size_t i = 0; i < guess_states.size(); ++i) {
        VarId term = tape.norm2(tape.sub(guess_states[i], tape.constant(true_states[i])));
        tracking = i == 0 ? term : tape.add(tracking, term);
    }
    if (spec.average) {
        tracking = tape.scale(tracking, 1.0 / static_cast<double>(guess_states.size()));
    }

    VarId objective = tracking;
    if (spec.reg != RegKind::kNone && spec.alpha != 0.0) {
        VarId reg_vec = reg_target;
        if (spec.reg == RegKind::kRelativeToRef) {
            if (spec.reference.size() != tape.value(reg_target).size()) {
                throw std::invalid_argument("tracking_loss: reference length mismatch");
            }
            std::vector<double> inv_ref(spec.reference.size());
            for (std::size_t i = 0; i < inv_ref.size(); ++i) {
                if (spec.reference[i] == 0.0) {
                    throw std::invalid_argument("tracking_loss: zero reference entry");
                }
                inv_ref[i] = 1.0 / spec.reference[i];
            }
            reg_vec = tape.mul(tape.sub(reg_target, tape.constant(spec.reference)),
                               tape.constant(inv_ref));
        }
        objective = tape.add(tracking, tape.scale(tape.norm2(reg_vec), spec.alpha));
    }
    return {objective, tracking};
}

RunRecord run_optimization(const ForwardProblem& problem, BoundedParams& params,
                           Optimizer& optimizer, StopRule stop, std::size_t snapshot_stride) {
    RunRecord record;
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    try {
        while (true) {
            Tape tape;
            VarId leaf = tape.variable(params.value, true);
            LossNodes loss = problem(tape, leaf);
            const double monitor = tape.scalar_value(loss.monitor);
            record.loss_history.push_back(monitor);
            if (snapshot_stride > 0 && record.iterations % snapshot_stride == 0) {
                record.snapshots.emplace_back(record.iterations, params.value);
            }

            if (monitor <= stop.tol) {
                record.stop_reason = "tol_reached";
                break;
            }
            if (record.iterations >= stop.max_iter) {
                record.stop_reason = "max_iter";
                break;
            }

            GradientMap grads = tape.backward(loss.objective);
            optimizer.step(params, grads.get(leaf));
            params.project();
            ++record.iterations;
        }
    } catch (const std::exception& e) {
        record.failed = true;
        record.stop_reason = std::string("forward_failure: ") + e.what();
    }

    record.final_params = params.value;
    record.wall_seconds = elapsed();
    return record;
}

}  // namespace apde
