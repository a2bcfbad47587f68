#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace cerberus {

struct AdamConfig {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// One bias-corrected Adam update; `step` counts from 1.
inline void adam_update(const AdamConfig& cfg, std::span<double> param,
                        std::span<const double> grad, std::span<double> mom1,
                        std::span<double> mom2, long step) {
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        mom1[i] = cfg.beta1 * mom1[i] + (1.0 - cfg.beta1) * grad[i];
        mom2[i] = cfg.beta2 * mom2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        param[i] -= cfg.learning_rate * (mom1[i] / c1) / (std::sqrt(mom2[i] / c2) + cfg.epsilon);
    }
}

}  // namespace cerberus
