#include "cerberus/forecast.hpp"

#include "cerberus/adam.hpp"
#include "cerberus/binio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace cerberus {
namespace {

using nlohmann::json;

void check_equal_lengths(const std::vector<Matrix>& seqs) {
    for (const auto& s : seqs) {
        if (s.rows() != seqs[0].rows() || s.cols() != seqs[0].cols()) {
            throw Error("sequences in one batch must share a shape");
        }
    }
}

// Step-major batches: out[s] holds row s of every sequence.
std::vector<Matrix> to_steps(const std::vector<const Matrix*>& seqs, Eigen::Index first,
                             Eigen::Index count, const Vector& mean, const Vector& scale) {
    std::vector<Matrix> out;
    const auto B = static_cast<Eigen::Index>(seqs.size());
    const auto k = seqs[0]->cols();
    for (Eigen::Index s = first; s < first + count; ++s) {
        Matrix x(B, k);
        for (Eigen::Index r = 0; r < B; ++r) {
            x.row(r) = ((seqs[static_cast<std::size_t>(r)]->row(s).transpose() - mean).array() /
                        scale.array())
                           .matrix()
                           .transpose();
        }
        out.push_back(std::move(x));
    }
    return out;
}

double squared_error(const Forecaster& f, const UserSequences& data, std::size_t* count) {
    double sse = 0.0;
    std::size_t n = 0;
    if (data.seqs.empty()) {
        if (count) *count = 0;
        return 0.0;
    }
    const auto preds = f.predict_steps(data.seqs);
    for (std::size_t u = 0; u < data.seqs.size(); ++u) {
        const Matrix& seq = data.seqs[u];
        for (Eigen::Index t = 1; t < seq.rows(); ++t) {
            sse += (preds[u].row(t - 1) - seq.row(t)).squaredNorm();
            n += static_cast<std::size_t>(seq.cols());
        }
    }
    if (count) *count = n;
    return sse;
}

double mse(const Forecaster& f, const UserSequences& data) {
    std::size_t n = 0;
    const double sse = squared_error(f, data, &n);
    return n ? sse / static_cast<double>(n) : 0.0;
}

void write_params(const std::filesystem::path& path, const std::vector<double>& p) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os.write("FPRM", 4);
    binio::put_u32(os, 1);
    binio::put_u64(os, p.size());
    for (double v : p) binio::put_f64(os, v);
    if (!os) throw Error("write failed: " + path.string());
}

std::vector<double> read_params(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifact("missing forecaster parameters " + path.string());
    binio::expect_magic(is, "FPRM");
    if (binio::get_u32(is) != 1) throw Error("unsupported parameter file version");
    std::vector<double> p(binio::get_u64(is));
    for (double& v : p) v = binio::get_f64(is);
    return p;
}

}  // namespace

void ForecasterConfig::validate() const {
    if (kind != "linear_ar" && kind != "recurrent") {
        throw ConfigError("unknown forecaster kind '" + kind + "' (valid: linear_ar, recurrent)");
    }
    if (hidden < 1) throw ConfigError("forecaster hidden size must be >= 1");
    for (int d : dense) {
        if (d < 1) throw ConfigError("forecaster dense sizes must be >= 1");
    }
    if (learning_rates.empty() || dropouts.empty()) {
        throw ConfigError("forecaster grid must list at least one learning rate and dropout");
    }
    for (double lr : learning_rates) {
        if (!(lr > 0)) throw ConfigError("forecaster learning rates must be > 0");
    }
    for (double p : dropouts) {
        if (!(p >= 0 && p < 1)) throw ConfigError("forecaster dropout must lie in [0, 1)");
    }
    if (epochs < 1) throw ConfigError("forecaster epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("forecaster batch_size must be >= 1");
    const SplitConfig& s = split;
    if (s.train < 0 || s.test < 0 || s.validation < 0 ||
        std::abs(s.train + s.test + s.validation - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be non-negative and sum to 1");
    }
}

void to_json(json& j, const ForecasterConfig& c) {
    j = json{{"kind", c.kind},
             {"hidden", c.hidden},
             {"dense", c.dense},
             {"learning_rates", c.learning_rates},
             {"dropouts", c.dropouts},
             {"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"seed", c.seed},
             {"split",
              {{"train", c.split.train}, {"test", c.split.test}, {"validation", c.split.validation}}}};
}

void from_json(const json& j, ForecasterConfig& c) {
    ForecasterConfig d;
    c.kind = j.value("kind", d.kind);
    c.hidden = j.value("hidden", d.hidden);
    c.dense = j.value("dense", d.dense);
    c.learning_rates = j.value("learning_rates", d.learning_rates);
    c.dropouts = j.value("dropouts", d.dropouts);
    c.epochs = j.value("epochs", d.epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.seed = j.value("seed", d.seed);
    c.split = d.split;
    if (auto it = j.find("split"); it != j.end()) {
        c.split.train = it->value("train", d.split.train);
        c.split.test = it->value("test", d.split.test);
        c.split.validation = it->value("validation", d.split.validation);
    }
}

std::size_t UserSequences::samples() const {
    std::size_t n = 0;
    for (const auto& s : seqs) n += s.rows() > 0 ? static_cast<std::size_t>(s.rows() - 1) : 0;
    return n;
}

SequenceSplits make_sequences(const EmbeddingSet& model, const NameIndex& roster,
                              const SplitConfig& split, std::uint64_t seed) {
    if (model.T() < 2) throw Error("forecasting needs T >= 2, model has T = " +
                                   std::to_string(model.T()));
    if (roster.size() != model.dims.m) throw Error("roster size does not match the model");
    std::vector<std::size_t> order(roster.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<double>(order.size());
    const auto n_train = static_cast<std::size_t>(std::floor(split.train * n + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(split.test * n + 1e-9));

    SequenceSplits out;
    for (std::size_t p = 0; p < order.size(); ++p) {
        UserSequences& dst = p < n_train ? out.train : p < n_train + n_test ? out.test
                                                                            : out.validation;
        const std::size_t i = order[p];
        Matrix seq(model.T(), model.k);
        for (int t = 0; t < model.T(); ++t) {
            seq.row(t) = model.users_at(t).row(static_cast<Eigen::Index>(i));
        }
        dst.users.push_back(roster.name(i));
        dst.seqs.push_back(std::move(seq));
    }
    return out;
}

int Forecaster::dim() const {
    if (kind == "linear_ar") return static_cast<int>(A.rows());
    return net.shape().output;
}

std::vector<Matrix> Forecaster::predict_steps(const std::vector<Matrix>& seqs) const {
    std::vector<Matrix> out;
    if (seqs.empty()) return out;
    check_equal_lengths(seqs);
    if (seqs[0].cols() != dim()) throw Error("sequence dimension does not match the forecaster");
    if (kind == "linear_ar") {
        for (const auto& s : seqs) {
            Matrix p = s * A.transpose();
            p.rowwise() += b.transpose();
            out.push_back(std::move(p));
        }
        return out;
    }
    std::vector<const Matrix*> ptrs;
    for (const auto& s : seqs) ptrs.push_back(&s);
    const auto ys = net.forward(to_steps(ptrs, 0, seqs[0].rows(), mean, scale));
    for (std::size_t u = 0; u < seqs.size(); ++u) {
        Matrix p(seqs[u].rows(), seqs[u].cols());
        for (std::size_t s = 0; s < ys.size(); ++s) {
            p.row(static_cast<Eigen::Index>(s)) =
                (ys[s].row(static_cast<Eigen::Index>(u)).transpose().array() * scale.array() +
                 mean.array())
                    .matrix()
                    .transpose();
        }
        out.push_back(std::move(p));
    }
    return out;
}

Vector Forecaster::predict_next(const Matrix& history) const {
    if (history.rows() < 1) throw Error("empty history");
    return predict_steps({history})[0].bottomRows(1).transpose();
}

Forecaster fit_linear_ar(const UserSequences& train) {
    if (train.samples() == 0) throw Error("training split has no samples");
    const auto k = train.seqs[0].cols();
    const auto n = static_cast<Eigen::Index>(train.samples());
    Matrix X(n, k + 1), Y(n, k);
    Eigen::Index r = 0;
    for (const auto& s : train.seqs) {
        if (s.cols() != k) throw Error("sequences differ in dimension");
        for (Eigen::Index t = 1; t < s.rows(); ++t, ++r) {
            X.row(r).head(k) = s.row(t - 1);
            X(r, k) = 1.0;
            Y.row(r) = s.row(t);
        }
    }
    const Eigen::MatrixXd Xc = X;
    const Eigen::MatrixXd Yc = Y;
    const Eigen::MatrixXd sol = Xc.completeOrthogonalDecomposition().solve(Yc);  // (k+1) x k
    Forecaster f;
    f.kind = "linear_ar";
    f.A = sol.topRows(k).transpose();
    f.b = sol.row(k).transpose();
    return f;
}

Forecaster train_forecaster(const UserSequences& train, const UserSequences& validation,
                            const ForecasterConfig& cfg) {
    cfg.validate();
    if (cfg.kind == "linear_ar") return fit_linear_ar(train);
    if (train.samples() == 0) throw Error("training split has no samples");
    if (validation.samples() == 0) throw Error("validation split has no samples");
    check_equal_lengths(train.seqs);

    const auto k = train.seqs[0].cols();
    const auto L = train.seqs[0].rows();
    Vector mean = Vector::Zero(k), sq = Vector::Zero(k);
    double cnt = 0.0;
    for (const auto& s : train.seqs) {
        for (Eigen::Index t = 0; t < L; ++t) {
            mean += s.row(t).transpose();
            cnt += 1.0;
        }
    }
    mean /= cnt;
    for (const auto& s : train.seqs) {
        for (Eigen::Index t = 0; t < L; ++t) {
            sq += (s.row(t).transpose() - mean).array().square().matrix();
        }
    }
    Vector scale = (sq / cnt).array().sqrt().matrix();
    for (Eigen::Index q = 0; q < k; ++q) {
        if (!(scale[q] > 1e-12)) scale[q] = 1.0;
    }

    const RecurrentShape shape{static_cast<int>(k), cfg.hidden, cfg.dense, static_cast<int>(k)};
    const std::uint64_t init_seed = derive_seed(cfg.seed, "forecaster/init");

    Forecaster best;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<GridResult> grid;
    for (double lr : cfg.learning_rates) {
        for (double p : cfg.dropouts) {
            Forecaster cur;
            cur.kind = "recurrent";
            cur.net = RecurrentNet(shape, init_seed);
            cur.mean = mean;
            cur.scale = scale;
            cur.learning_rate = lr;
            cur.dropout = p;
            std::mt19937_64 rng(
                derive_seed(cfg.seed, "forecaster/" + format_double(lr) + "/" + format_double(p)));
            auto& params = cur.net.params();
            std::vector<double> grad, m1(params.size(), 0.0), m2(params.size(), 0.0);
            const AdamConfig adam{lr};

            GridResult gr{lr, p, std::numeric_limits<double>::infinity(), false};
            std::vector<double> kept = params;
            std::vector<std::size_t> order(train.seqs.size());
            std::iota(order.begin(), order.end(), 0);
            int step = 0;
            for (int epoch = 0; epoch < cfg.epochs && !gr.diverged; ++epoch) {
                std::shuffle(order.begin(), order.end(), rng);
                for (std::size_t first = 0; first < order.size();
                     first += static_cast<std::size_t>(cfg.batch_size)) {
                    const std::size_t last =
                        std::min(order.size(), first + static_cast<std::size_t>(cfg.batch_size));
                    std::vector<const Matrix*> batch;
                    for (std::size_t q = first; q < last; ++q) batch.push_back(&train.seqs[order[q]]);
                    const auto xs = to_steps(batch, 0, L - 1, mean, scale);
                    const auto ys = to_steps(batch, 1, L - 1, mean, scale);
                    const double l = cur.net.loss(xs, ys, p, &rng, &grad);
                    if (!std::isfinite(l)) {
                        gr.diverged = true;
                        break;
                    }
                    adam_update(adam, std::span<double>(params), std::span<const double>(grad),
                                std::span<double>(m1), std::span<double>(m2), ++step);
                }
                if (gr.diverged) break;
                const double v = mse(cur, validation);
                if (!std::isfinite(v)) {
                    gr.diverged = true;
                } else if (v < gr.val_mse) {
                    gr.val_mse = v;
                    kept = params;
                }
            }
            grid.push_back(gr);
            if (!gr.diverged && gr.val_mse < best_val) {
                best_val = gr.val_mse;
                params = kept;
                best = std::move(cur);
            }
        }
    }
    if (!std::isfinite(best_val)) {
        throw Error("forecaster training diverged for every grid configuration");
    }
    best.grid = std::move(grid);
    return best;
}

double cosine(const Vector& a, const Vector& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0 || nb == 0) return 0.0;
    return a.dot(b) / (na * nb);
}

PredictionEval eval_embedding_prediction(const Forecaster& f, const UserSequences& test) {
    if (test.samples() == 0) throw Error("test split has no samples");
    PredictionEval ev;
    const auto preds = f.predict_steps(test.seqs);
    double cos_sum = 0.0, sse = 0.0;
    std::size_t coords = 0;
    for (std::size_t u = 0; u < test.seqs.size(); ++u) {
        const Matrix& seq = test.seqs[u];
        for (Eigen::Index t = 1; t < seq.rows(); ++t) {
            const Vector p = preds[u].row(t - 1).transpose();
            const Vector y = seq.row(t).transpose();
            sse += (p - y).squaredNorm();
            coords += static_cast<std::size_t>(y.size());
            if (p.norm() == 0 || y.norm() == 0) {
                ++ev.skipped;
                continue;
            }
            cos_sum += cosine(p, y);
            ++ev.samples;
        }
    }
    ev.cosine_mean = ev.samples ? cos_sum / static_cast<double>(ev.samples) : 0.0;
    ev.mse = sse / static_cast<double>(coords);
    return ev;
}

void save_forecaster(const std::filesystem::path& dir, const Forecaster& f,
                     const ForecasterConfig& cfg) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json j;
    j["kind"] = f.kind;
    j["config"] = json(cfg);
    std::vector<double> params;
    if (f.kind == "linear_ar") {
        j["dim"] = f.A.rows();
        params.assign(f.A.data(), f.A.data() + f.A.size());
        params.insert(params.end(), f.b.data(), f.b.data() + f.b.size());
    } else {
        const auto& s = f.net.shape();
        j["shape"] = {{"input", s.input}, {"hidden", s.hidden}, {"dense", s.dense},
                      {"output", s.output}};
        j["mean"] = std::vector<double>(f.mean.data(), f.mean.data() + f.mean.size());
        j["scale"] = std::vector<double>(f.scale.data(), f.scale.data() + f.scale.size());
        j["learning_rate"] = f.learning_rate;
        j["dropout"] = f.dropout;
        json grid = json::array();
        for (const auto& g : f.grid) {
            grid.push_back({{"learning_rate", g.learning_rate},
                            {"dropout", g.dropout},
                            {"val_mse", g.diverged ? json(nullptr) : json(g.val_mse)},
                            {"diverged", g.diverged}});
        }
        j["grid"] = grid;
        params = f.net.params();
    }
    j["params_file"] = "params.f64";
    std::ofstream os(dir / "forecaster.json");
    os << j.dump(2) << '\n';
    if (!os) throw Error("cannot write " + (dir / "forecaster.json").string());
    write_params(dir / "params.f64", params);
}

Forecaster load_forecaster(const std::filesystem::path& dir) {
    std::ifstream is(dir / "forecaster.json");
    if (!is) throw MissingArtifact("missing " + (dir / "forecaster.json").string());
    const json j = json::parse(is);
    const auto params = read_params(dir / j.at("params_file").get<std::string>());
    Forecaster f;
    f.kind = j.at("kind").get<std::string>();
    if (f.kind == "linear_ar") {
        const auto k = j.at("dim").get<Eigen::Index>();
        if (params.size() != static_cast<std::size_t>(k * k + k)) {
            throw Error("forecaster parameter count does not match its manifest");
        }
        f.A = Eigen::Map<const Matrix>(params.data(), k, k);
        f.b = Eigen::Map<const Vector>(params.data() + k * k, k);
        return f;
    }
    const auto& js = j.at("shape");
    RecurrentShape s{js.at("input").get<int>(), js.at("hidden").get<int>(),
                     js.at("dense").get<std::vector<int>>(), js.at("output").get<int>()};
    f.net = RecurrentNet(s, 0);
    if (params.size() != f.net.params().size()) {
        throw Error("forecaster parameter count does not match its manifest");
    }
    f.net.params() = params;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    f.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    f.scale = Eigen::Map<const Vector>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    f.learning_rate = j.at("learning_rate").get<double>();
    f.dropout = j.at("dropout").get<double>();
    for (const auto& g : j.at("grid")) {
        f.grid.push_back({g.at("learning_rate").get<double>(), g.at("dropout").get<double>(),
                          g.at("val_mse").is_null() ? 0.0 : g.at("val_mse").get<double>(),
                          g.at("diverged").get<bool>()});
    }
    return f;
}

CommunityCentroids community_centroids(const EmbeddingSet& model, const NameIndex& roster,
                                       const std::vector<Bucket>& buckets,
                                       const std::vector<std::string>& required) {
    if (roster.size() != model.dims.m) throw Error("roster size does not match the model");
    if (model.T() != 1 && buckets.size() != static_cast<std::size_t>(model.T())) {
        throw Error("interaction windows do not match the model's timesteps");
    }
    // (community -> set of (t, user)) so each pair counts once however many posts it made
    std::map<std::string, std::set<std::pair<int, std::size_t>>> pairs;
    for (const auto& c : required) pairs[c];
    for (std::size_t t = 0; t < buckets.size(); ++t) {
        for (const auto& p : buckets[t]) {
            if (p.community.empty()) continue;
            auto i = roster.find(p.user_id);
            if (!i) continue;
            if (!required.empty() && !pairs.count(p.community)) continue;
            pairs[p.community].insert({static_cast<int>(t), *i});
        }
    }
    CommunityCentroids out;
    out.X.resize(static_cast<Eigen::Index>(pairs.size()), model.k);
    Eigen::Index row = 0;
    for (const auto& [name, members] : pairs) {
        if (members.empty()) throw Error("community " + name + " has no interacting users");
        Vector acc = Vector::Zero(model.k);
        for (const auto& [t, i] : members) {
            acc += model.users_at(model.T() == 1 ? 0 : t).row(static_cast<Eigen::Index>(i)).transpose();
        }
        out.X.row(row++) = (acc / static_cast<double>(members.size())).transpose();
        out.names.push_back(name);
    }
    return out;
}

AffinityPrediction predict_affinity(const Vector& u_hat, const CommunityCentroids& centroids,
                                    const Vector& f) {
    const auto C = centroids.X.rows();
    if (C == 0) throw Error("no community centroids");
    if (f.size() != C) throw Error("engagement vector does not match the centroids");
    AffinityPrediction p;
    p.s.resize(C);
    for (Eigen::Index c = 0; c < C; ++c) p.s[c] = cosine(u_hat, centroids.X.row(c).transpose());
    const double smax = p.s.maxCoeff();
    if (smax > 0) {
        p.y_hat = p.s / smax;
    } else {
        p.degenerate = true;
        p.y_hat = p.s.array() - p.s.minCoeff();
        const double m = p.y_hat.maxCoeff();
        if (m > 0) p.y_hat /= m;
    }
    const double fmax = f.maxCoeff();
    p.y_true = fmax > 0 ? Vector(f / fmax) : Vector::Zero(C);
    return p;
}

std::optional<double> try_concordance(std::span<const double> y_hat,
                                      std::span<const double> y_true) {
    if (y_hat.size() != y_true.size()) throw Error("prediction and truth lengths differ");
    const std::size_t n = y_hat.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(y_hat[i]) || !std::isfinite(y_true[i])) {
            throw Error("non-finite value in concordance input");
        }
    }
    std::vector<double> levels(y_hat.begin(), y_hat.end());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    std::vector<std::size_t> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        rank[i] = static_cast<std::size_t>(
                      std::lower_bound(levels.begin(), levels.end(), y_hat[i]) - levels.begin()) +
                  1;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return y_true[a] < y_true[b]; });

    // Fenwick tree over prediction ranks of items with strictly smaller y_true.
    std::vector<std::uint64_t> tree(levels.size() + 1, 0);
    auto prefix = [&](std::size_t r) {
        std::uint64_t s = 0;
        for (; r > 0; r -= r & (~r + 1)) s += tree[r];
        return s;
    };
    auto add = [&](std::size_t r) {
        for (; r < tree.size(); r += r & (~r + 1)) ++tree[r];
    };
    std::uint64_t concordant = 0, tied = 0, pairs = 0, inserted = 0;
    for (std::size_t g = 0; g < n;) {
        std::size_t h = g;
        while (h < n && y_true[order[h]] == y_true[order[g]]) ++h;
        for (std::size_t q = g; q < h; ++q) {
            const std::size_t r = rank[order[q]];
            const std::uint64_t below = prefix(r - 1);
            concordant += below;
            tied += prefix(r) - below;
            pairs += inserted;
        }
        for (std::size_t q = g; q < h; ++q) add(rank[order[q]]);
        inserted += h - g;
        g = h;
    }
    if (pairs == 0) return std::nullopt;
    return (static_cast<double>(concordant) + 0.5 * static_cast<double>(tied)) /
           static_cast<double>(pairs);
}

double concordance(std::span<const double> y_hat, std::span<const double> y_true) {
    auto ci = try_concordance(y_hat, y_true);
    if (!ci) throw Error("no comparable pairs for the concordance index");
    return *ci;
}

ConcordanceSummary concordance_summary(const std::vector<AffinityPrediction>& preds,
                                       std::size_t n_classes) {
    ConcordanceSummary out;
    double sum = 0.0;
    for (const auto& p : preds) {
        if (static_cast<std::size_t>(p.y_hat.size()) != n_classes) {
            throw Error("prediction length does not match the number of classes");
        }
        if (auto ci = try_concordance({p.y_hat.data(), n_classes}, {p.y_true.data(), n_classes})) {
            sum += *ci;
            ++out.users;
        }
    }
    if (out.users == 0) throw Error("no user has a comparable pair of communities");
    out.within_sample = sum / static_cast<double>(out.users);

    double csum = 0.0;
    std::size_t defined = 0;
    std::vector<double> yh(preds.size()), yt(preds.size());
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t u = 0; u < preds.size(); ++u) {
            yh[u] = preds[u].y_hat[static_cast<Eigen::Index>(c)];
            yt[u] = preds[u].y_true[static_cast<Eigen::Index>(c)];
        }
        auto ci = try_concordance(yh, yt);
        out.per_class.push_back(ci);
        if (ci) {
            csum += *ci;
            ++defined;
        }
    }
    out.per_class_mean = defined ? csum / static_cast<double>(defined) : 0.0;
    return out;
}

}  // namespace cerberus
