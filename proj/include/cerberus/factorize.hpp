#pragma once

#include "cerberus/kernels.hpp"
#include "cerberus/matrices.hpp"
#include "cerberus/model.hpp"

#include <functional>
#include <span>
#include <vector>

namespace cerberus {

struct LossBreakdown {
    double recon_A = 0.0;
    double recon_C = 0.0;
    double l2 = 0.0;
    double smooth = 0.0;
    double total = 0.0;
};

/// Cells withheld from training for reconstruction evaluation, per timestep.
struct HoldoutMask {
    std::vector<std::vector<HeldCell>> A;
    std::vector<std::vector<HeldCell>> C;

    bool empty() const;
};

/// Per active row and timestep, withholds round(fraction * nnz) observed cells and the
/// same number of zero cells, both sampled uniformly.
HoldoutMask make_holdout(const MatrixBundle& bundle, double fraction, std::uint64_t seed);

/// The joint objective bound to one bundle:
///   sum_t w||A_t - Ahat_t||^2 + w||C_t - Chat_t||^2
///   + lambda1 sum_t (|U_t|^2 + |V_t|^2 + |W_t|^2)
///   + lambda2 sum_{t<T} (|U_{t+1}-U_t|^2 + |V_{t+1}-V_t|^2 + |W_{t+1}-W_t|^2)
/// with zero cells weighted by c0 and, under masking, inactive rows removed. Static
/// factors enter the l2 sum once per timestep and have no smoothing term. Biases are not
/// regularised.
class Objective {
public:
    Objective(const MatrixBundle& bundle, const ModelConfig& cfg,
              const HoldoutMask* holdout = nullptr);

    /// When `grad` is non-null it must have the model's shape; it is overwritten.
    LossBreakdown evaluate(const EmbeddingSet& model, EmbeddingSet* grad = nullptr) const;

    ModelDims dims() const { return dims_; }

private:
    ModelConfig cfg_;
    Variant variant_;
    ModelDims dims_;
    std::vector<TargetMatrix> A_;
    std::vector<TargetMatrix> C_;
};

LossBreakdown loss(const EmbeddingSet& model, const MatrixBundle& bundle, const ModelConfig& cfg);

struct TrainResult {
    EmbeddingSet model;
    // trace[e] is the loss before update e; the last element is the loss after training
    std::vector<LossBreakdown> trace;
    int epochs_run = 0;
};

using EpochCallback = std::function<void(int epoch, const LossBreakdown&)>;

/// Full-batch Adam on the exact gradient of Objective. Throws Error naming the epoch if
/// the loss stops being finite.
TrainResult train(const MatrixBundle& bundle, const ModelConfig& cfg,
                  const HoldoutMask* holdout = nullptr, const EpochCallback& on_epoch = {});

struct GradientCheckReport {
    double max_rel_error = 0.0;
    double max_rel_error_bias = 0.0;
    int probes = 0;
    int bias_probes = 0;
};

/// Central finite differences (h = 1e-5) at `n_probes` coordinates spread round-robin
/// over the parameter blocks. Relative error is |ga - gn| / max(f, |ga| + |gn|) with
/// f = 1e-6 * max(1, |loss|).
GradientCheckReport gradient_check(const EmbeddingSet& model, const MatrixBundle& bundle,
                                   const ModelConfig& cfg, int n_probes, std::uint64_t seed,
                                   const HoldoutMask* holdout = nullptr);

enum class Source { A, C };

/// U_t V_t^T (or U_t W_t^T) plus biases; 0-based t.
Matrix reconstruct(const EmbeddingSet& model, int t, Source which);

struct ReconMetrics {
    double nz_mae = 0.0;
    double zero_mae = 0.0;
    double wmae = 0.0;
    std::size_t n_nz = 0;
    std::size_t n_zero = 0;
};

/// wmae = (sum|e_nz| + c0 sum|e_zero|) / (N_nz + c0 N_zero).
ReconMetrics reconstruction_metrics(std::span<const double> nz_abs_errors,
                                    std::span<const double> zero_abs_errors, double c0);

ReconMetrics eval_reconstruction(const EmbeddingSet& model, const HoldoutMask& holdout,
                                 Source which, double c0);

}  // namespace cerberus
