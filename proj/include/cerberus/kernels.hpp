#pragma once

// Weighted reconstruction kernels for one source matrix at one timestep.
//
// Loss over the included rows i and all columns j:
//     sum_ij w_ij (Ahat_ij - a_ij)^2,   Ahat_ij = r_i . c_j + rb_i + cb_j
// where unlisted cells have target 0 and weight c0 (the zero weight), and listed cells
// carry their own target and weight. Observed entries are listed with weight 1, held-out
// cells with weight 0.
//
// `weighted_recon` is the production kernel: OpenMP over rows then columns, cost
// O(listed * k + (m + n) * k^2). `weighted_recon_reference` evaluates every cell densely
// and serially, O(m * n * k); it exists for tests and the benchmark.

#include "cerberus/common.hpp"
#include "cerberus/sparse.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cerberus {

struct HeldCell {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    double value = 0.0;  // true target, used by evaluation
    bool observed = false;
};

struct TargetCell {
    std::uint32_t col = 0;
    double value = 0.0;
    double weight = 1.0;
};

class TargetMatrix {
public:
    TargetMatrix() = default;
    /// Rows flagged inactive are dropped entirely when `mask_inactive` is set. Held cells
    /// get weight 0.
    TargetMatrix(const SparseMatrix& source, double zero_weight, bool mask_inactive,
                 std::span<const HeldCell> held = {});

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double zero_weight() const { return zero_weight_; }
    bool row_included(std::size_t i) const { return included_[i] != 0; }
    std::span<const TargetCell> row_cells(std::size_t i) const {
        return {cells_.data() + row_start_[i], row_start_[i + 1] - row_start_[i]};
    }
    std::size_t listed() const { return cells_.size(); }

    // Column view: positions into the row-major cell array, grouped by column.
    struct ColRef {
        std::uint32_t row;
        std::uint32_t cell;
    };
    std::span<const ColRef> col_cells(std::size_t j) const {
        return {col_refs_.data() + col_start_[j], col_start_[j + 1] - col_start_[j]};
    }
    std::size_t row_offset(std::size_t i) const { return row_start_[i]; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    double zero_weight_ = 0.0;
    std::vector<std::uint8_t> included_;
    std::vector<std::size_t> row_start_;
    std::vector<TargetCell> cells_;
    std::vector<std::size_t> col_start_;
    std::vector<ColRef> col_refs_;
};

namespace kernels {

struct Factors {
    const Matrix& rows;             // m x k
    const Matrix& cols;             // n x k
    const Vector* row_bias = nullptr;
    const Vector* col_bias = nullptr;
};

/// Gradients are accumulated (+=). Any pointer may be null.
struct Grads {
    Matrix* rows = nullptr;
    Matrix* cols = nullptr;
    Vector* row_bias = nullptr;
    Vector* col_bias = nullptr;
};

double weighted_recon(const TargetMatrix& target, const Factors& f, const Grads& g);
double weighted_recon_reference(const TargetMatrix& target, const Factors& f, const Grads& g);

}  // namespace kernels
}  // namespace cerberus
