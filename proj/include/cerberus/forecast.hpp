#pragma once

#include "cerberus/corpus.hpp"
#include "cerberus/model.hpp"
#include "cerberus/recurrent.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cerberus {

struct SplitConfig {
    double train = 0.75;
    double test = 0.15;
    double validation = 0.10;
};

struct ForecasterConfig {
    std::string kind = "linear_ar";  // or "recurrent"
    int hidden = 256;
    std::vector<int> dense{512, 256};
    std::vector<double> learning_rates{0.001, 0.01, 0.1};
    std::vector<double> dropouts{0.1, 0.2, 0.5};
    int epochs = 50;
    int batch_size = 32;
    std::uint64_t seed = 0;
    SplitConfig split;

    void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const ForecasterConfig& c);
void from_json(const nlohmann::json& j, ForecasterConfig& c);

/// One T x k embedding sequence per user. Every user contributes T - 1 samples: the
/// history u_0..u_{t-1} with target u_t for t = 1..T-1.
struct UserSequences {
    std::vector<std::string> users;
    std::vector<Matrix> seqs;

    std::size_t samples() const;
};

struct SequenceSplits {
    UserSequences train, test, validation;
};

/// Users (not samples) are shuffled with `seed` and cut into floor(train * n),
/// floor(test * n) and the remainder for validation.
SequenceSplits make_sequences(const EmbeddingSet& model, const NameIndex& roster,
                              const SplitConfig& split, std::uint64_t seed);

struct GridResult {
    double learning_rate = 0.0;
    double dropout = 0.0;
    double val_mse = 0.0;
    bool diverged = false;
};

class Forecaster {
public:
    std::string kind;

    // linear_ar: u_t ~ A u_{t-1} + b
    Matrix A;
    Vector b;

    // recurrent: operates on standardised embeddings (u - mean) / scale
    RecurrentNet net;
    Vector mean, scale;
    double learning_rate = 0.0;
    double dropout = 0.0;
    std::vector<GridResult> grid;

    int dim() const;

    /// Row s of the result predicts seq row s + 1 from rows 0..s (so L rows for an
    /// L-row input, the last being the forecast beyond the sequence). Sequences in one
    /// call must share a length.
    std::vector<Matrix> predict_steps(const std::vector<Matrix>& seqs) const;
    Vector predict_next(const Matrix& history) const;
};

/// Grid search over (learning rate, dropout) for the recurrent kind, keeping the epoch
/// with the best validation MSE; diverged configurations are skipped.
Forecaster train_forecaster(const UserSequences& train, const UserSequences& validation,
                            const ForecasterConfig& cfg);

/// Ordinary least squares fit of the order-1 linear model (minimum-norm solution).
Forecaster fit_linear_ar(const UserSequences& train);

struct PredictionEval {
    double cosine_mean = 0.0;
    double mse = 0.0;  // per coordinate
    std::size_t samples = 0;
    std::size_t skipped = 0;  // zero-norm prediction or target
};

PredictionEval eval_embedding_prediction(const Forecaster& f, const UserSequences& test);

void save_forecaster(const std::filesystem::path& dir, const Forecaster& f,
                     const ForecasterConfig& cfg);
Forecaster load_forecaster(const std::filesystem::path& dir);

double cosine(const Vector& a, const Vector& b);  // 0 when either norm is 0

struct CommunityCentroids {
    std::vector<std::string> names;
    Matrix X;  // one row per community
};

/// Mean of U_t[i] over every (user i, t) pair in which user i posted in the community.
/// With `required` given, each listed community must have at least one such pair.
CommunityCentroids community_centroids(const EmbeddingSet& model, const NameIndex& roster,
                                       const std::vector<Bucket>& buckets,
                                       const std::vector<std::string>& required = {});

struct AffinityPrediction {
    std::string user;
    Vector s;
    Vector y_hat;
    Vector y_true;
    bool degenerate = false;  // every similarity was <= 0
};

/// s_c = cos(u_hat, centroid_c); y_hat = s / max(s); y_true = f / max(f) (zeros if f = 0).
AffinityPrediction predict_affinity(const Vector& u_hat, const CommunityCentroids& centroids,
                                    const Vector& f);

/// Harrell's concordance over pairs with distinct y_true; tied predictions count 1/2.
/// O(n log n). Returns nullopt when no pair is comparable.
std::optional<double> try_concordance(std::span<const double> y_hat,
                                      std::span<const double> y_true);
double concordance(std::span<const double> y_hat, std::span<const double> y_true);

struct ConcordanceSummary {
    double within_sample = 0.0;                      // mean per-user CI
    std::size_t users = 0;                           // users with a comparable pair
    std::vector<std::optional<double>> per_class;    // per community, across users
    double per_class_mean = 0.0;                     // unweighted over defined classes
};

ConcordanceSummary concordance_summary(const std::vector<AffinityPrediction>& preds,
                                       std::size_t n_classes);

}  // namespace cerberus
