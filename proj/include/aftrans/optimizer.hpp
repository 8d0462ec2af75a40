#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "aftrans/tensor.hpp"

namespace aftrans {

/// Linear warmup from zero, then cosine annealing to zero at total_steps.
inline double lr_at(std::size_t step, double base_lr, std::size_t warmup_steps,
                    std::size_t total_steps) {
    if (warmup_steps > 0 && step < warmup_steps)
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    // Cosine reaches exactly zero on the last scheduled step.
    const double span = static_cast<double>(total_steps - warmup_steps) - 1.0;
    if (span <= 0) return base_lr;
    const double t = static_cast<double>(step - warmup_steps) / span;
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

/// SGD with momentum over a fixed parameter list. Velocity buffers are keyed
/// by position, so the parameter order must not change between steps.
template <typename T>
struct SgdOptimizer {
    std::size_t step_index = 0;
    double base_lr = 0.01;
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 1;
    double momentum = 0.9;
    std::vector<std::vector<T>> velocity;

    SgdOptimizer() = default;
    SgdOptimizer(double lr, std::size_t warmup, std::size_t total, double mom)
        : base_lr(lr), warmup_steps(warmup), total_steps(total), momentum(mom) {
        if (base_lr <= 0) throw ValueError("sgd: base_lr must be positive");
        if (total_steps == 0) throw ValueError("sgd: total_steps must be positive");
        if (momentum < 0 || momentum >= 1) throw ValueError("sgd: momentum must be in [0,1)");
    }

    double current_lr() const {
        return lr_at(step_index, base_lr, warmup_steps, total_steps);
    }

    /// One update over all parameters; consumes the gradients in place.
    double step(std::vector<Tensor<T>*>& params) {
        if (step_index >= total_steps)
            throw ValueError("sgd: step_index must stay below total_steps");
        if (velocity.empty()) {
            velocity.reserve(params.size());
            for (auto* p : params)
                velocity.emplace_back(p->numel(), T(0));
        }
        if (velocity.size() != params.size())
            throw ValueError("sgd: parameter count changed between steps");
        const double lr = current_lr();
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            Tensor<T>& p = *params[pi];
            if (!p.grad) continue;
            if (velocity[pi].size() != p.numel())
                throw ShapeError("sgd: velocity shape does not match parameter");
            auto& v = velocity[pi];
            for (std::size_t i = 0; i < p.numel(); ++i) {
                v[i] = static_cast<T>(momentum) * v[i] + (*p.grad)[i];
                (*p.data)[i] -= static_cast<T>(lr) * v[i];
            }
        }
        ++step_index;
        return lr;
    }
};

}  // namespace aftrans
