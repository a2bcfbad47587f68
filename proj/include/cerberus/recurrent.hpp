#pragma once

// One LSTM layer, a stack of ReLU dense layers with inverted dropout, and a linear head.
// The network emits a prediction after every input step, so a sequence x_0..x_{L-1}
// yields predictions for steps 1..L.

#include "cerberus/common.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace cerberus {

struct RecurrentShape {
    int input = 1;
    int hidden = 256;
    std::vector<int> dense{512, 256};
    int output = 1;
};

class RecurrentNet {
public:
    RecurrentNet() = default;
    /// Xavier-uniform weights, zero biases except the forget gate (1).
    RecurrentNet(RecurrentShape shape, std::uint64_t seed);

    const RecurrentShape& shape() const { return shape_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    /// xs[s] is the batch (B x input) at step s; returns B x output per step. No dropout.
    std::vector<Matrix> forward(const std::vector<Matrix>& xs) const;

    /// Mean squared error over every step, row and output coordinate. With `grad`
    /// non-null, writes dLoss/dparams. Dropout masks are drawn from `rng` when p > 0.
    double loss(const std::vector<Matrix>& xs, const std::vector<Matrix>& ys, double dropout,
                std::mt19937_64* rng, std::vector<double>* grad) const;

private:
    struct Layout {
        std::size_t wx, wh, b;
        std::vector<std::size_t> dw, db;
        std::size_t wo, bo;
        std::size_t total;
    };
    static Layout layout(const RecurrentShape& s);

    RecurrentShape shape_;
    Layout at_{};
    std::vector<double> params_;
};

}  // namespace cerberus
