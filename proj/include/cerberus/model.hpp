#pragma once

#include "cerberus/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cerberus {

enum class VariantKind { cerberus, noadj, statcont, matfact, sharedmf, adjonly };

/// Which factors a model variant has, which of them move over time, and which source
/// matrices enter its loss.
struct Variant {
    VariantKind kind = VariantKind::cerberus;
    std::string name;
    bool uses_adjacency = true;
    bool uses_content = true;
    bool dynamic_user = true;
    bool dynamic_context = true;  // meaningless when !uses_adjacency
    bool dynamic_word = true;     // meaningless when !uses_content
    bool time_aggregated = false; // trained on a pooled (T = 1) bundle
};

/// Throws ConfigError listing the valid names when `name` is unknown.
Variant make_variant(std::string_view name);
const std::vector<std::string>& variant_names();

struct ModelConfig {
    std::string variant = "cerberus";
    int k = 100;
    double lambda1 = 0.1;
    double lambda2 = 1.0;
    double c0 = 0.01;
    double learning_rate = 0.01;
    int epochs = 300;
    std::uint64_t seed = 0;
    bool use_biases = true;
    bool mask_missing = true;
    bool relax_nonneg = true;
    // stop once the relative loss improvement stays below tol for `patience` epochs
    double early_stop_tol = 1e-6;
    int early_stop_patience = 10;

    void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct ModelDims {
    int T = 1;
    std::size_t m = 0;  // users
    std::size_t n = 0;  // context users
    std::size_t d = 0;  // vocabulary
};

/// Per-timestep latent factors. Static factors hold a single matrix that serves every t;
/// absent factors hold none. Bias vectors are per timestep and present iff biases are on
/// and the matching source matrix is used.
struct EmbeddingSet {
    Variant variant;
    ModelDims dims;
    int k = 0;
    std::vector<Matrix> U;  // T x (m x k), or 1 for time-aggregated variants
    std::vector<Matrix> V;  // n x k
    std::vector<Matrix> W;  // d x k
    std::vector<Vector> bias_user_A;
    std::vector<Vector> bias_ctx;
    std::vector<Vector> bias_user_C;
    std::vector<Vector> bias_word;

    int T() const { return dims.T; }
    bool has_biases() const { return !bias_user_A.empty() || !bias_user_C.empty(); }
    const Matrix& users_at(int t) const { return U.size() == 1 ? U[0] : U[t]; }
    const Matrix& context_at(int t) const;
    const Matrix& words_at(int t) const;

    void set_zero();
    bool all_finite() const;
};

/// Named view of one parameter block; used by the optimiser and the gradient checker.
struct ParamBlock {
    std::string name;
    std::span<double> values;
    bool is_bias = false;
};

/// Blocks in a fixed order: U, V, W, then the bias vectors.
std::vector<ParamBlock> param_blocks(EmbeddingSet& m);

/// N(0, (0.1/sqrt(k))^2) factors, zero biases; deterministic given the seed.
EmbeddingSet init_model(const ModelConfig& cfg, const ModelDims& dims, std::uint64_t seed);

/// Model directory: manifest.json plus one CERB file per factor per timestep.
void save_model(const std::filesystem::path& dir, const EmbeddingSet& m, const ModelConfig& cfg,
                const nlohmann::json& extra = nlohmann::json::object());
EmbeddingSet load_model(const std::filesystem::path& dir, ModelConfig* cfg = nullptr);

}  // namespace cerberus
