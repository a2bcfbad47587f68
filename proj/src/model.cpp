#include "cerberus/model.hpp"

#include "cerberus/binio.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace cerberus {
namespace {

std::string block_name(const char* base, std::size_t t) {
    return std::string(base) + "[" + std::to_string(t) + "]";
}

std::string file_name(const char* base, std::size_t t) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03zu.cerb", base, t);
    return buf;
}

Matrix as_column(const Vector& v) {
    Matrix m(v.size(), 1);
    for (Eigen::Index i = 0; i < v.size(); ++i) m(i, 0) = v[i];
    return m;
}

}  // namespace

const std::vector<std::string>& variant_names() {
    static const std::vector<std::string> names{"cerberus", "noadj",    "statcont",
                                                "matfact",  "sharedmf", "adjonly"};
    return names;
}

Variant make_variant(std::string_view name) {
    Variant v;
    v.name = std::string(name);
    if (name == "cerberus") {
        v.kind = VariantKind::cerberus;
    } else if (name == "noadj") {
        v.kind = VariantKind::noadj;
        v.uses_adjacency = false;
        v.dynamic_context = false;
    } else if (name == "statcont") {
        v.kind = VariantKind::statcont;
        v.dynamic_context = false;
        v.dynamic_word = false;
    } else if (name == "matfact") {
        v.kind = VariantKind::matfact;
        v.uses_adjacency = false;
        v.dynamic_user = v.dynamic_context = v.dynamic_word = false;
        v.time_aggregated = true;
    } else if (name == "sharedmf") {
        v.kind = VariantKind::sharedmf;
        v.dynamic_user = v.dynamic_context = v.dynamic_word = false;
        v.time_aggregated = true;
    } else if (name == "adjonly") {
        v.kind = VariantKind::adjonly;
        v.uses_content = false;
        v.dynamic_word = false;
    } else {
        std::string valid;
        for (const auto& n : variant_names()) valid += (valid.empty() ? "" : ", ") + n;
        throw ConfigError("unknown variant '" + std::string(name) + "'; valid variants: " + valid);
    }
    return v;
}

void ModelConfig::validate() const {
    make_variant(variant);
    if (k < 1) throw ConfigError("model.k must be >= 1");
    if (lambda1 < 0 || lambda2 < 0) throw ConfigError("model.lambda1/lambda2 must be >= 0");
    if (!(c0 >= 0 && c0 <= 1)) throw ConfigError("model.c0 must lie in [0, 1]");
    if (!(learning_rate > 0)) throw ConfigError("model.learning_rate must be > 0");
    if (epochs < 1) throw ConfigError("model.epochs must be >= 1");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"variant", c.variant},
                       {"k", c.k},
                       {"lambda1", c.lambda1},
                       {"lambda2", c.lambda2},
                       {"c0", c.c0},
                       {"learning_rate", c.learning_rate},
                       {"epochs", c.epochs},
                       {"seed", c.seed},
                       {"use_biases", c.use_biases},
                       {"mask_missing", c.mask_missing},
                       {"relax_nonneg", c.relax_nonneg},
                       {"early_stop_tol", c.early_stop_tol},
                       {"early_stop_patience", c.early_stop_patience}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.variant = j.value("variant", d.variant);
    c.k = j.value("k", d.k);
    c.lambda1 = j.value("lambda1", d.lambda1);
    c.lambda2 = j.value("lambda2", d.lambda2);
    c.c0 = j.value("c0", d.c0);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.epochs = j.value("epochs", d.epochs);
    c.seed = j.value("seed", d.seed);
    c.use_biases = j.value("use_biases", d.use_biases);
    c.mask_missing = j.value("mask_missing", d.mask_missing);
    c.relax_nonneg = j.value("relax_nonneg", d.relax_nonneg);
    c.early_stop_tol = j.value("early_stop_tol", d.early_stop_tol);
    c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
}

const Matrix& EmbeddingSet::context_at(int t) const {
    if (V.empty()) throw Error("variant " + variant.name + " has no context factors");
    return V.size() == 1 ? V[0] : V[static_cast<std::size_t>(t)];
}

const Matrix& EmbeddingSet::words_at(int t) const {
    if (W.empty()) throw Error("variant " + variant.name + " has no word factors");
    return W.size() == 1 ? W[0] : W[static_cast<std::size_t>(t)];
}

void EmbeddingSet::set_zero() {
    for (auto& b : param_blocks(*this)) std::fill(b.values.begin(), b.values.end(), 0.0);
}

bool EmbeddingSet::all_finite() const {
    auto ok = [](const auto& list) {
        for (const auto& x : list) {
            if (!x.allFinite()) return false;
        }
        return true;
    };
    return ok(U) && ok(V) && ok(W) && ok(bias_user_A) && ok(bias_ctx) && ok(bias_user_C) &&
           ok(bias_word);
}

std::vector<ParamBlock> param_blocks(EmbeddingSet& m) {
    std::vector<ParamBlock> out;
    auto add = [&out](const char* base, auto& list, bool bias) {
        for (std::size_t t = 0; t < list.size(); ++t) {
            out.push_back({block_name(base, t),
                           std::span<double>(list[t].data(), static_cast<std::size_t>(list[t].size())),
                           bias});
        }
    };
    add("U", m.U, false);
    add("V", m.V, false);
    add("W", m.W, false);
    add("b_user_A", m.bias_user_A, true);
    add("b_ctx", m.bias_ctx, true);
    add("b_user_C", m.bias_user_C, true);
    add("b_word", m.bias_word, true);
    return out;
}

EmbeddingSet init_model(const ModelConfig& cfg, const ModelDims& dims, std::uint64_t seed) {
    cfg.validate();
    if (dims.T < 1 || dims.m == 0) throw Error("init_model: empty dimensions");
    EmbeddingSet m;
    m.variant = make_variant(cfg.variant);
    m.dims = dims;
    m.k = cfg.k;
    if (m.variant.time_aggregated && dims.T != 1) {
        throw Error("variant " + m.variant.name + " requires a time-aggregated bundle (T = 1)");
    }
    const auto T = static_cast<std::size_t>(dims.T);
    const auto k = static_cast<Eigen::Index>(cfg.k);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.1 / std::sqrt(static_cast<double>(cfg.k)));
    auto draw = [&](std::size_t rows) {
        Matrix x(static_cast<Eigen::Index>(rows), k);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
        if (!cfg.relax_nonneg) x = x.cwiseAbs();
        return x;
    };

    const std::size_t nU = m.variant.dynamic_user ? T : 1;
    for (std::size_t t = 0; t < nU; ++t) m.U.push_back(draw(dims.m));
    if (m.variant.uses_adjacency) {
        if (dims.n == 0) throw Error("init_model: no context users");
        const std::size_t nV = m.variant.dynamic_context ? T : 1;
        for (std::size_t t = 0; t < nV; ++t) m.V.push_back(draw(dims.n));
    }
    if (m.variant.uses_content) {
        if (dims.d == 0) throw Error("init_model: empty vocabulary");
        const std::size_t nW = m.variant.dynamic_word ? T : 1;
        for (std::size_t t = 0; t < nW; ++t) m.W.push_back(draw(dims.d));
    }
    if (cfg.use_biases) {
        for (std::size_t t = 0; t < T; ++t) {
            if (m.variant.uses_adjacency) {
                m.bias_user_A.push_back(Vector::Zero(static_cast<Eigen::Index>(dims.m)));
                m.bias_ctx.push_back(Vector::Zero(static_cast<Eigen::Index>(dims.n)));
            }
            if (m.variant.uses_content) {
                m.bias_user_C.push_back(Vector::Zero(static_cast<Eigen::Index>(dims.m)));
                m.bias_word.push_back(Vector::Zero(static_cast<Eigen::Index>(dims.d)));
            }
        }
    }
    return m;
}

void save_model(const std::filesystem::path& dir, const EmbeddingSet& m, const ModelConfig& cfg,
                const nlohmann::json& extra) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json man;
    man["variant"] = m.variant.name;
    man["k"] = m.k;
    man["T"] = m.dims.T;
    man["m"] = m.dims.m;
    man["n"] = m.dims.n;
    man["d_vocab"] = m.dims.d;
    man["lambda1"] = cfg.lambda1;
    man["lambda2"] = cfg.lambda2;
    man["c0"] = cfg.c0;
    man["learning_rate"] = cfg.learning_rate;
    man["seed"] = cfg.seed;
    man["epochs"] = cfg.epochs;
    man["use_biases"] = cfg.use_biases;
    man["mask_missing"] = cfg.mask_missing;
    man["relax_nonneg"] = cfg.relax_nonneg;
    for (const auto& [key, value] : extra.items()) man[key] = value;

    nlohmann::ordered_json files;
    auto put_mats = [&](const char* base, const std::vector<Matrix>& list) {
        auto arr = nlohmann::ordered_json::array();
        for (std::size_t t = 0; t < list.size(); ++t) {
            auto f = file_name(base, t);
            binio::write_dense(dir / f, list[t]);
            arr.push_back(f);
        }
        files[base] = arr;
    };
    auto put_vecs = [&](const char* base, const std::vector<Vector>& list) {
        auto arr = nlohmann::ordered_json::array();
        for (std::size_t t = 0; t < list.size(); ++t) {
            auto f = file_name(base, t);
            binio::write_dense(dir / f, as_column(list[t]));
            arr.push_back(f);
        }
        files[base] = arr;
    };
    put_mats("U", m.U);
    put_mats("V", m.V);
    put_mats("W", m.W);
    put_vecs("b_user_A", m.bias_user_A);
    put_vecs("b_ctx", m.bias_ctx);
    put_vecs("b_user_C", m.bias_user_C);
    put_vecs("b_word", m.bias_word);
    man["files"] = files;

    std::ofstream os(dir / "manifest.json");
    os << man.dump(2) << '\n';
}

EmbeddingSet load_model(const std::filesystem::path& dir, ModelConfig* cfg_out) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw MissingArtifact("missing file " + (dir / "manifest.json").string());
    const auto man = nlohmann::json::parse(is);

    ModelConfig cfg;
    cfg.variant = man.at("variant").get<std::string>();
    cfg.k = man.at("k").get<int>();
    cfg.lambda1 = man.at("lambda1").get<double>();
    cfg.lambda2 = man.at("lambda2").get<double>();
    cfg.c0 = man.at("c0").get<double>();
    cfg.learning_rate = man.value("learning_rate", cfg.learning_rate);
    cfg.seed = man.at("seed").get<std::uint64_t>();
    cfg.epochs = man.at("epochs").get<int>();
    cfg.use_biases = man.value("use_biases", true);
    cfg.mask_missing = man.value("mask_missing", true);
    cfg.relax_nonneg = man.value("relax_nonneg", true);

    EmbeddingSet m;
    m.variant = make_variant(cfg.variant);
    m.k = cfg.k;
    m.dims.T = man.at("T").get<int>();
    m.dims.m = man.at("m").get<std::size_t>();
    m.dims.n = man.at("n").get<std::size_t>();
    m.dims.d = man.at("d_vocab").get<std::size_t>();

    const auto& files = man.at("files");
    auto load_mats = [&](const char* base, std::size_t rows, std::size_t expected_count) {
        std::vector<Matrix> out;
        for (const auto& f : files.at(base)) {
            Matrix x = binio::read_dense(dir / f.get<std::string>());
            if (static_cast<std::size_t>(x.rows()) != rows || x.cols() != m.k) {
                throw Error("factor file " + f.get<std::string>() +
                            " does not match manifest dimensions");
            }
            out.push_back(std::move(x));
        }
        if (out.size() != expected_count) {
            throw Error(std::string("manifest lists the wrong number of ") + base + " files");
        }
        return out;
    };
    auto load_vecs = [&](const char* base, std::size_t len, std::size_t expected_count) {
        std::vector<Vector> out;
        for (const auto& f : files.at(base)) {
            Matrix x = binio::read_dense(dir / f.get<std::string>());
            if (static_cast<std::size_t>(x.rows()) != len || x.cols() != 1) {
                throw Error("bias file " + f.get<std::string>() +
                            " does not match manifest dimensions");
            }
            out.emplace_back(x.col(0));
        }
        if (out.size() != expected_count) {
            throw Error(std::string("manifest lists the wrong number of ") + base + " files");
        }
        return out;
    };
    const auto T = static_cast<std::size_t>(m.dims.T);
    const auto& v = m.variant;
    m.U = load_mats("U", m.dims.m, v.dynamic_user ? T : 1);
    m.V = load_mats("V", m.dims.n, v.uses_adjacency ? (v.dynamic_context ? T : 1) : 0);
    m.W = load_mats("W", m.dims.d, v.uses_content ? (v.dynamic_word ? T : 1) : 0);
    const std::size_t nb = cfg.use_biases ? T : 0;
    m.bias_user_A = load_vecs("b_user_A", m.dims.m, v.uses_adjacency ? nb : 0);
    m.bias_ctx = load_vecs("b_ctx", m.dims.n, v.uses_adjacency ? nb : 0);
    m.bias_user_C = load_vecs("b_user_C", m.dims.m, v.uses_content ? nb : 0);
    m.bias_word = load_vecs("b_word", m.dims.d, v.uses_content ? nb : 0);
    if (cfg_out) *cfg_out = cfg;
    return m;
}

}  // namespace cerberus
