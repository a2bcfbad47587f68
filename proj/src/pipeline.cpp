#include "cerberus/pipeline.hpp"

#include "cerberus/analyze.hpp"
#include "cerberus/binio.hpp"
#include "cerberus/factorize.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <Eigen/Core>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace cerberus {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------- configuration

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            throw ConfigError("unknown key '" + k + "' in " + where + " (valid: " + list + ")");
        }
    }
}

std::set<std::string> keys_of(const json& j) {
    std::set<std::string> s;
    for (const auto& [k, v] : j.items()) s.insert(k);
    return s;
}

template <class T>
void read_section(const json& j, const char* key, T& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    check_keys(*it, keys_of(json(T{})), key);
    out = it->template get<T>();
}

TimeWindowing effective_windowing(const RunConfig& c) {
    if (c.uses_synth()) return {c.synth.start, c.synth.window_length, c.synth.T};
    return c.windowing;
}

SynthConfig effective_synth(const RunConfig& c) {
    SynthConfig s = c.synth;
    s.seed = derive_seed(c.seed, "synth");
    return s;
}

ModelConfig effective_model(const RunConfig& c, const char* stream) {
    ModelConfig m = c.model;
    m.seed = derive_seed(c.seed, stream);
    return m;
}

ForecasterConfig effective_forecaster(const RunConfig& c) {
    ForecasterConfig f = c.forecaster;
    f.seed = derive_seed(c.seed, "forecast");
    return f;
}

int main_K(const RunConfig& c) { return c.clustering.K > 0 ? c.clustering.K : c.clustering.K_list.at(0); }

fs::path synth_dir(const RunConfig& c) { return c.out() / "synth"; }

std::vector<std::string> effective_lexicons(const RunConfig& c) {
    if (!c.paths.lexicons.empty() || !c.uses_synth()) return c.paths.lexicons;
    return {(synth_dir(c) / "lexicon.txt").string()};
}

json windowing_json(const TimeWindowing& w) {
    return {{"start", w.start}, {"window_length", w.window_length}, {"T", w.T}};
}

json filter_json(const FilterConfig& f) {
    return {{"min_active_timesteps", f.min_active_timesteps},
            {"n_context_users", f.n_context_users},
            {"min_word_users", f.min_word_users}};
}

// ---------------------------------------------------------------- stage graph

struct StageInfo {
    const char* name;
    const char* dir;
};

const std::vector<StageInfo>& stages() {
    static const std::vector<StageInfo> s{
        {"synth", "synth"},         {"ingest", "ingest"},   {"matrices", "matrices"},
        {"train", "model"},         {"eval-recon", "recon"}, {"cluster", "clusters"},
        {"purity", "purity"},       {"forecast", "forecast"}, {"predict", "predict"},
        {"relevance", "relevance"}, {"concept", "concept"}, {"project", "project"}};
    return s;
}

const char* dir_of(const std::string& stage) {
    for (const auto& s : stages()) {
        if (stage == s.name) return s.dir;
    }
    throw ConfigError("unknown stage " + stage);
}

std::vector<std::string> parents(const RunConfig& c, const std::string& stage) {
    if (stage == "synth") return {};
    if (stage == "ingest") return c.uses_synth() ? std::vector<std::string>{"synth"}
                                                 : std::vector<std::string>{};
    if (stage == "matrices") return {"ingest"};
    if (stage == "train" || stage == "eval-recon") return {"matrices"};
    if (stage == "cluster" || stage == "purity" || stage == "forecast") return {"train"};
    if (stage == "predict" || stage == "project") return {"forecast"};
    if (stage == "relevance" || stage == "concept") return {"cluster"};
    throw ConfigError("unknown stage " + stage);
}

json section(const RunConfig& c, const std::string& stage) {
    if (stage == "synth") return {{"synth", json(effective_synth(c))}};
    if (stage == "ingest") {
        return {{"corpus", c.paths.corpus},
                {"background", c.paths.background},
                {"future", c.paths.future},
                {"windowing", windowing_json(effective_windowing(c))},
                {"filter", filter_json(c.filter)}};
    }
    if (stage == "matrices") return json::object();
    if (stage == "train") return {{"model", json(effective_model(c, "train"))}};
    if (stage == "eval-recon") {
        return {{"model", json(effective_model(c, "recon"))},
                {"holdout_fraction", c.holdout_fraction},
                {"seed", c.seed}};
    }
    if (stage == "cluster") {
        return {{"K_list", c.clustering.K_list},
                {"max_iters", c.clustering.max_iters},
                {"seed", c.seed}};
    }
    if (stage == "purity") {
        std::vector<std::string> levels;
        for (auto l : c.label_levels) levels.push_back(level_name(l));
        return {{"K_list", c.clustering.K_list},
                {"n_seeds", c.clustering.n_seeds},
                {"max_iters", c.clustering.max_iters},
                {"size_weighted", c.clustering.size_weighted},
                {"label_levels", levels},
                {"seed", c.seed}};
    }
    if (stage == "forecast") {
        return {{"forecaster", json(effective_forecaster(c))}, {"seed", c.seed}};
    }
    if (stage == "predict") return json::object();
    if (stage == "relevance") {
        return {{"words", c.analysis.words},
                {"K", main_K(c)},
                {"min_cluster_size", c.analysis.min_cluster_size}};
    }
    if (stage == "concept") {
        return {{"lexicons", c.paths.lexicons},  // empty: the synth lexicon, covered by the synth hash
                {"K", main_K(c)},
                {"time_averaged", c.analysis.time_averaged_concept},
                {"min_cluster_size", c.analysis.min_cluster_size}};
    }
    if (stage == "project") return {{"users", c.analysis.users}};
    throw ConfigError("unknown stage " + stage);
}

// ---------------------------------------------------------------- artifacts

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw MissingArtifact("missing file " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error("cannot parse " + p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
    if (!out) throw Error("write failed: " + p.string());
}

void write_json(const fs::path& p, const ojson& j) { write_text(p, j.dump(2) + "\n"); }

/// Verifies that the named upstream stage ran under the current configuration.
void require_stage(const RunConfig& c, const std::string& stage) {
    const fs::path man = c.out() / dir_of(stage) / "stage.json";
    if (!fs::exists(man)) {
        throw MissingArtifact("missing upstream artifact " + man.string() + " (run `cerberus " +
                              stage + "` first)");
    }
    const json j = read_json(man);
    const std::string want = stage_hash(c, stage);
    const std::string have = j.value("config_hash", "");
    if (have != want) {
        throw MissingArtifact("artifact " + man.string() + " was produced under a different " +
                              "configuration (hash " + have + ", expected " + want +
                              "); rerun `cerberus " + stage + "`");
    }
}

void finish_stage(const RunConfig& c, const std::string& stage, const ojson& summary) {
    ojson man;
    man["stage"] = stage;
    man["config_hash"] = stage_hash(c, stage);
    ojson up = ojson::object();
    for (const auto& p : parents(c, stage)) up[p] = stage_hash(c, p);
    man["upstream"] = up;
    man["summary"] = summary;
    write_json(c.out() / dir_of(stage) / "stage.json", man);
}

class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        fs::create_directories(dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            if (errno == EEXIST) {
                throw Error("output directory " + dir.string() +
                            " is locked by another run (delete " + path_.string() +
                            " if it is stale)");
            }
            throw Error("cannot create lock " + path_.string() + ": " + std::strerror(errno));
        }
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    ~DirLock() {
        ::close(fd_);
        ::unlink(path_.c_str());
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

std::vector<Post> read_posts(const fs::path& p) {
    if (!fs::exists(p)) throw MissingArtifact("missing file " + p.string());
    return load_corpus(p).posts;
}

struct Ingested {
    std::vector<Bucket> buckets;
    std::optional<Bucket> future;
    NameIndex roster, context, vocab;
    BackgroundModel bg;
};

Ingested load_ingest(const RunConfig& c) {
    const fs::path dir = c.out() / "ingest";
    Ingested in;
    in.roster = NameIndex(read_json(dir / "users.json").get<std::vector<std::string>>());
    in.context = NameIndex(read_json(dir / "context.json").get<std::vector<std::string>>());
    in.vocab = NameIndex(read_json(dir / "vocab.json").get<std::vector<std::string>>());
    const json bg = read_json(dir / "background.json");
    in.bg = BackgroundModel::from_counts(bg.at("counts").get<std::map<std::string, std::int64_t>>());
    const json st = read_json(dir / "stage.json");
    const int T = st.at("summary").at("T").get<int>();
    for (int t = 0; t < T; ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "window_%03d.jsonl", t);
        in.buckets.push_back(read_posts(dir / "windows" / name));
    }
    if (st.at("summary").at("future_posts").get<long>() >= 0) {
        in.future = read_posts(dir / "windows" / "future.jsonl");
    }
    return in;
}

MatrixBundle load_matrices(const RunConfig& c, bool pooled) {
    return load_bundle(c.out() / "matrices" / (pooled ? "pooled" : "bundle"));
}

std::vector<Bucket> windows_for(const EmbeddingSet& m, const std::vector<Bucket>& buckets) {
    if (m.T() == 1 && buckets.size() > 1) return {pool_buckets(buckets)};
    return buckets;
}

ojson metrics_json(const ReconMetrics& r) {
    ojson j;
    j["nz_mae"] = r.nz_mae;
    j["zero_mae"] = r.zero_mae;
    j["wmae"] = r.wmae;
    j["n_nz"] = r.n_nz;
    j["n_zero"] = r.n_zero;
    return j;
}

std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch;
    }
    return q + "\"";
}

struct Clustering {
    ClusterModel cm;
    std::vector<std::size_t> sizes;
};

Clustering load_clustering(const RunConfig& c, int K) {
    const fs::path dir = c.out() / "clusters";
    const std::string base = "K" + std::to_string(K);
    const json j = read_json(dir / ("clusters_" + base + ".json"));
    Clustering out;
    out.cm.K = K;
    out.cm.seed = j.at("seed").get<std::uint64_t>();
    out.cm.centroids = binio::read_dense(dir / j.at("centroids").get<std::string>());
    out.sizes = j.at("sizes").get<std::vector<std::size_t>>();
    return out;
}

// ---------------------------------------------------------------- stages

void stage_synth(const RunConfig& c) {
    const SynthConfig s = effective_synth(c);
    const SynthCorpus corpus = generate(s);
    write_synth(synth_dir(c), corpus, s);
    ojson sum;
    sum["posts"] = corpus.posts.size();
    sum["future_posts"] = corpus.future_posts.size();
    sum["users"] = corpus.users.size();
    sum["communities"] = corpus.communities;
    finish_stage(c, "synth", sum);
    std::cout << "synth: " << corpus.posts.size() << " posts, " << corpus.users.size()
              << " users, " << corpus.communities.size() << " communities\n";
}

void stage_ingest(const RunConfig& c) {
    fs::path corpus = c.paths.corpus, background = c.paths.background, future = c.paths.future;
    if (c.uses_synth()) {
        require_stage(c, "synth");
        corpus = synth_dir(c) / "corpus.jsonl";
        if (background.empty()) background = synth_dir(c) / "background.txt";
        if (future.empty() && c.synth.future_windows > 0) future = synth_dir(c) / "future.jsonl";
    }
    if (background.empty()) throw ConfigError("paths.background is required with paths.corpus");
    const TimeWindowing w = effective_windowing(c);
    const CorpusStore store = load_corpus(corpus);
    const BackgroundModel bg = build_background(background);
    const auto buckets = partition_timesteps(store, w);
    const NameIndex roster = filter_users(buckets, c.filter);
    const NameIndex context = select_context_users(buckets, c.filter);
    const NameIndex vocab = build_vocab(buckets, roster, c.filter);

    const fs::path dir = c.out() / "ingest";
    fs::remove_all(dir);
    write_json(dir / "users.json", roster.names());
    write_json(dir / "context.json", context.names());
    write_json(dir / "vocab.json", vocab.names());
    ojson bgj;
    bgj["total_tokens"] = bg.total_tokens();
    bgj["oov_floor"] = bg.oov_floor();
    ojson counts = ojson::object();
    for (const auto& [word, n] : bg.counts()) counts[word] = n;
    bgj["counts"] = counts;
    write_json(dir / "background.json", bgj);
    for (std::size_t t = 0; t < buckets.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "window_%03zu.jsonl", t);
        std::ostringstream os;
        write_corpus(os, buckets[t]);
        write_text(dir / "windows" / name, os.str());
    }
    long future_posts = -1;
    if (!future.empty()) {
        const std::int64_t lo = w.start + static_cast<std::int64_t>(w.T) * w.window_length;
        Bucket next;
        for (auto& p : load_corpus(future).posts) {
            if (p.timestamp >= lo && p.timestamp < lo + w.window_length) next.push_back(std::move(p));
        }
        std::ostringstream os;
        write_corpus(os, next);
        write_text(dir / "windows" / "future.jsonl", os.str());
        future_posts = static_cast<long>(next.size());
    }
    ojson sum;
    sum["T"] = w.T;
    sum["posts"] = store.posts.size();
    sum["users"] = roster.size();
    sum["context_users"] = context.size();
    sum["vocab"] = vocab.size();
    sum["future_posts"] = future_posts;
    finish_stage(c, "ingest", sum);
    std::cout << "ingest: " << store.posts.size() << " posts in " << w.T << " windows, "
              << roster.size() << " users, " << context.size() << " context users, "
              << vocab.size() << " words\n";
}

void stage_matrices(const RunConfig& c) {
    require_stage(c, "ingest");
    const Ingested in = load_ingest(c);
    const MatrixBundle bundle = build_bundle(in.buckets, in.roster, in.context, in.vocab, in.bg);
    const MatrixBundle pooled =
        build_bundle({pool_buckets(in.buckets)}, in.roster, in.context, in.vocab, in.bg);
    const fs::path dir = c.out() / "matrices";
    fs::remove_all(dir);
    save_bundle(dir / "bundle", bundle);
    save_bundle(dir / "pooled", pooled);
    std::size_t nnz_a = 0, nnz_c = 0;
    for (int t = 0; t < bundle.T(); ++t) {
        nnz_a += bundle.A[static_cast<std::size_t>(t)].nnz();
        nnz_c += bundle.C[static_cast<std::size_t>(t)].nnz();
    }
    ojson sum;
    sum["T"] = bundle.T();
    sum["nnz_A"] = nnz_a;
    sum["nnz_C"] = nnz_c;
    finish_stage(c, "matrices", sum);
    std::cout << "matrices: " << bundle.T() << " windows, nnz(A) = " << nnz_a
              << ", nnz(C) = " << nnz_c << "\n";
}

void stage_train(const RunConfig& c) {
    require_stage(c, "matrices");
    const ModelConfig mc = effective_model(c, "train");
    const Variant v = make_variant(mc.variant);
    const MatrixBundle bundle = load_matrices(c, v.time_aggregated);
    const TrainResult res = train(bundle, mc);
    const fs::path dir = c.out() / "model";
    fs::remove_all(dir);
    json extra = {{"bundle", v.time_aggregated ? "../matrices/pooled" : "../matrices/bundle"}};
    save_model(dir, res.model, mc, extra);
    ojson trace = ojson::array();
    for (const auto& lb : res.trace) {
        trace.push_back({{"recon_A", lb.recon_A},
                         {"recon_C", lb.recon_C},
                         {"l2", lb.l2},
                         {"smooth", lb.smooth},
                         {"total", lb.total}});
    }
    ojson tj;
    tj["epochs_run"] = res.epochs_run;
    tj["trace"] = trace;
    write_json(dir / "trace.json", tj);
    ojson sum;
    sum["variant"] = mc.variant;
    sum["epochs_run"] = res.epochs_run;
    sum["final_loss"] = res.trace.back().total;
    finish_stage(c, "train", sum);
    std::cout << "train: " << mc.variant << ", " << res.epochs_run << " epochs, loss "
              << res.trace.front().total << " -> " << res.trace.back().total << "\n";
}

void stage_eval_recon(const RunConfig& c) {
    require_stage(c, "matrices");
    const ModelConfig mc = effective_model(c, "recon");
    const Variant v = make_variant(mc.variant);
    const MatrixBundle bundle = load_matrices(c, v.time_aggregated);
    const HoldoutMask mask = make_holdout(bundle, c.holdout_fraction, derive_seed(c.seed, "holdout"));
    const TrainResult res = train(bundle, mc, &mask);
    ojson out;
    out["variant"] = mc.variant;
    out["c0"] = mc.c0;
    out["holdout_fraction"] = c.holdout_fraction;
    if (v.uses_adjacency) out["A"] = metrics_json(eval_reconstruction(res.model, mask, Source::A, mc.c0));
    if (v.uses_content) out["C"] = metrics_json(eval_reconstruction(res.model, mask, Source::C, mc.c0));
    const fs::path dir = c.out() / "recon";
    fs::remove_all(dir);
    write_json(dir / "metrics.json", out);
    finish_stage(c, "eval-recon", out);
    std::cout << "eval-recon:";
    for (const char* s : {"A", "C"}) {
        if (out.contains(s)) {
            std::cout << " " << s << " nz_mae " << out[s]["nz_mae"].get<double>() << " zero_mae "
                      << out[s]["zero_mae"].get<double>() << " wmae " << out[s]["wmae"].get<double>()
                      << ";";
        }
    }
    std::cout << "\n";
}

struct Trained {
    EmbeddingSet model;
    MatrixBundle bundle;
    StackedEmbeddings stacked;
};

Trained load_trained(const RunConfig& c) {
    require_stage(c, "train");
    require_stage(c, "matrices");
    Trained t;
    t.model = load_model(c.out() / "model");
    t.bundle = load_matrices(c, t.model.variant.time_aggregated);
    t.stacked = stack(t.model, t.bundle.users, t.bundle.activity);
    return t;
}

void stage_cluster(const RunConfig& c) {
    const Trained tr = load_trained(c);
    const fs::path dir = c.out() / "clusters";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::uint64_t base = derive_seed(c.seed, "cluster");
    ojson sum = ojson::array();
    for (int K : c.clustering.K_list) {
        const ClusterModel cm = best_kmeans(tr.stacked.X, K, base, c.clustering.n_seeds, c.clustering.max_iters);
        const std::string tag = "K" + std::to_string(K);
        binio::write_dense(dir / ("centroids_" + tag + ".cerb"), cm.centroids);
        std::vector<std::size_t> sizes(static_cast<std::size_t>(K), 0);
        ojson rows = ojson::array();
        for (std::size_t r = 0; r < tr.stacked.rows.size(); ++r) {
            ++sizes[static_cast<std::size_t>(cm.assignment[r])];
            rows.push_back({tr.stacked.rows[r].user, tr.stacked.rows[r].t, cm.assignment[r]});
        }
        ojson j;
        j["K"] = K;
        j["seed"] = cm.seed;
        j["iterations"] = cm.iterations;
        j["objective"] = cm.objective;
        j["centroids"] = "centroids_" + tag + ".cerb";
        j["sizes"] = sizes;
        j["rows"] = rows;
        write_json(dir / ("clusters_" + tag + ".json"), j);
        sum.push_back({{"K", K}, {"iterations", cm.iterations}, {"objective", cm.objective.back()}});
        std::cout << "cluster: K = " << K << ", " << cm.iterations << " iterations, within-SS "
                  << cm.objective.back() << "\n";
    }
    finish_stage(c, "cluster", sum);
}

void stage_purity(const RunConfig& c) {
    const Trained tr = load_trained(c);
    require_stage(c, "ingest");
    const Ingested in = load_ingest(c);
    const auto windows = windows_for(tr.model, in.buckets);
    std::vector<LabelSet> labels;
    for (auto level : c.label_levels) labels.push_back(labels_from_buckets(windows, tr.bundle.users, level));
    const auto table = purity_report(tr.stacked, labels, c.clustering.K_list, c.clustering.n_seeds,
                                     derive_seed(c.seed, "cluster"), c.clustering.size_weighted);
    ojson rows = ojson::array();
    for (const auto& r : table) {
        rows.push_back({{"K", r.K},
                        {"level", level_name(r.level)},
                        {"mean", r.mean},
                        {"std", r.std},
                        {"per_seed", r.per_seed}});
        std::cout << "purity: K = " << r.K << ", " << level_name(r.level) << ": " << r.mean
                  << " +- " << r.std << "\n";
    }
    ojson out;
    out["weighting"] = c.clustering.size_weighted ? "size" : "unweighted";
    out["n_seeds"] = c.clustering.n_seeds;
    out["rows"] = rows;
    if (c.uses_synth()) {
        // planted home communities, one label per (user, window)
        const json gt = read_json(synth_dir(c) / "ground_truth.json");
        LabelSet truth;
        for (const auto& [user, per_t] : gt.at("labels").items()) {
            for (std::size_t t = 0; t < per_t.size(); ++t) {
                truth.labels[{user, static_cast<int>(t)}] = {per_t[t].get<std::string>()};
            }
        }
        if (tr.model.T() == 1) {
            LabelSet pooled;
            for (const auto& [key, l] : truth.labels) {
                auto& dst = pooled.labels[{key.user, 0}];
                dst.insert(dst.end(), l.begin(), l.end());
            }
            for (auto& [key, l] : pooled.labels) {
                std::sort(l.begin(), l.end());
                l.erase(std::unique(l.begin(), l.end()), l.end());
            }
            truth = std::move(pooled);
        }
        ojson gt_rows = ojson::array();
        for (const auto& r : purity_report(tr.stacked, {truth}, c.clustering.K_list, c.clustering.n_seeds,
                                           derive_seed(c.seed, "cluster"), c.clustering.size_weighted)) {
            gt_rows.push_back({{"K", r.K}, {"mean", r.mean}, {"std", r.std}, {"per_seed", r.per_seed}});
            std::cout << "purity: K = " << r.K << ", planted: " << r.mean << " +- " << r.std << "\n";
        }
        out["planted"] = gt_rows;
    }
    const fs::path dir = c.out() / "purity";
    fs::remove_all(dir);
    write_json(dir / "purity.json", out);
    finish_stage(c, "purity", out);
}

void stage_forecast(const RunConfig& c) {
    const Trained tr = load_trained(c);
    const ForecasterConfig fc = effective_forecaster(c);
    fc.validate();
    const SequenceSplits sp = make_sequences(tr.model, tr.bundle.users, fc.split, derive_seed(c.seed, "split"));
    const Forecaster f = train_forecaster(sp.train, sp.validation, fc);
    const PredictionEval ev = eval_embedding_prediction(f, sp.test);
    const fs::path dir = c.out() / "forecast";
    fs::remove_all(dir);
    save_forecaster(dir / "forecaster", f, fc);
    ojson splits;
    splits["train"] = sp.train.users;
    splits["test"] = sp.test.users;
    splits["validation"] = sp.validation.users;
    write_json(dir / "splits.json", splits);
    ojson m;
    m["kind"] = f.kind;
    m["cosine_mean"] = ev.cosine_mean;
    m["mse"] = ev.mse;
    m["samples"] = ev.samples;
    m["skipped"] = ev.skipped;
    if (f.kind == "recurrent") {
        m["learning_rate"] = f.learning_rate;
        m["dropout"] = f.dropout;
    }
    write_json(dir / "metrics.json", m);
    finish_stage(c, "forecast", m);
    std::cout << "forecast: " << f.kind << ", test cosine " << ev.cosine_mean << ", mse " << ev.mse
              << " over " << ev.samples << " samples\n";
}

std::vector<std::string> test_users(const RunConfig& c) {
    return read_json(c.out() / "forecast" / "splits.json").at("test").get<std::vector<std::string>>();
}

Matrix history_of(const EmbeddingSet& m, std::size_t i) {
    Matrix seq(m.T(), m.k);
    for (int t = 0; t < m.T(); ++t) seq.row(t) = m.users_at(t).row(static_cast<Eigen::Index>(i));
    return seq;
}

void stage_predict(const RunConfig& c) {
    require_stage(c, "forecast");
    const Trained tr = load_trained(c);
    require_stage(c, "ingest");
    const Ingested in = load_ingest(c);
    if (!in.future) {
        throw MissingArtifact("no future window was ingested (set paths.future or "
                              "synth.future_windows)");
    }
    const Forecaster f = load_forecaster(c.out() / "forecast" / "forecaster");
    const CommunityCentroids cents =
        community_centroids(tr.model, tr.bundle.users, windows_for(tr.model, in.buckets));
    std::map<std::string, std::map<std::string, double>> engagement;
    for (const auto& p : *in.future) engagement[p.user_id][p.community] += 1.0;

    std::vector<AffinityPrediction> preds;
    std::ostringstream csv;
    csv << "user_id,community,s,y_hat,y_true\n";
    std::size_t degenerate = 0;
    for (const auto& u : test_users(c)) {
        const std::size_t i = tr.bundle.users.at(u);
        const Vector u_hat = f.predict_next(history_of(tr.model, i));
        Vector fv = Vector::Zero(static_cast<Eigen::Index>(cents.names.size()));
        for (std::size_t k = 0; k < cents.names.size(); ++k) {
            auto it = engagement.find(u);
            if (it == engagement.end()) continue;
            auto jt = it->second.find(cents.names[k]);
            if (jt != it->second.end()) fv[static_cast<Eigen::Index>(k)] = jt->second;
        }
        AffinityPrediction p = predict_affinity(u_hat, cents, fv);
        p.user = u;
        degenerate += p.degenerate ? 1 : 0;
        for (std::size_t k = 0; k < cents.names.size(); ++k) {
            const auto e = static_cast<Eigen::Index>(k);
            csv << csv_cell(u) << ',' << csv_cell(cents.names[k]) << ',' << format_double(p.s[e])
                << ',' << format_double(p.y_hat[e]) << ',' << format_double(p.y_true[e]) << '\n';
        }
        preds.push_back(std::move(p));
    }
    const ConcordanceSummary ci = concordance_summary(preds, cents.names.size());
    const json fm = read_json(c.out() / "forecast" / "metrics.json");
    ojson m;
    m["cosine_mean"] = fm.at("cosine_mean").get<double>();
    m["ci_within"] = ci.within_sample;
    ojson per = ojson::object();
    for (std::size_t k = 0; k < cents.names.size(); ++k) {
        per[cents.names[k]] = ci.per_class[k] ? json(*ci.per_class[k]) : json(nullptr);
    }
    m["ci_per_class"] = per;
    m["ci_per_class_mean"] = ci.per_class_mean;
    m["users"] = preds.size();
    m["users_with_pairs"] = ci.users;
    m["degenerate"] = degenerate;
    const fs::path dir = c.out() / "predict";
    fs::remove_all(dir);
    write_text(dir / "predictions.csv", csv.str());
    write_json(dir / "metrics.json", m);
    finish_stage(c, "predict", m);
    std::cout << "predict: within-sample CI " << ci.within_sample << ", per-class CI "
              << ci.per_class_mean << " over " << preds.size() << " test users\n";
}

void stage_relevance(const RunConfig& c) {
    if (c.analysis.words.empty()) throw ConfigError("analysis.words lists no words to track");
    require_stage(c, "cluster");
    const Trained tr = load_trained(c);
    const Clustering cl = load_clustering(c, main_K(c));
    std::vector<RelevanceSeries> series;
    for (const auto& w : c.analysis.words) {
        for (int k = 0; k < cl.cm.K; ++k) {
            series.push_back(word_relevance(w, tr.bundle.vocab, cl.cm.centroids.row(k).transpose(),
                                            k, cl.sizes[static_cast<std::size_t>(k)], tr.model));
        }
    }
    series = filter_min_size(std::move(series), c.analysis.min_cluster_size);
    const fs::path dir = c.out() / "relevance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    export_series(series, dir / "relevance.csv");
    ojson sum;
    sum["series"] = series.size();
    finish_stage(c, "relevance", sum);
    std::cout << "relevance: " << series.size() << " series\n";
}

void stage_concept(const RunConfig& c) {
    const auto lexicons = effective_lexicons(c);
    if (lexicons.empty()) throw ConfigError("paths.lexicons lists no lexicon");
    require_stage(c, "cluster");
    const Trained tr = load_trained(c);
    const Clustering cl = load_clustering(c, main_K(c));
    const fs::path dir = c.out() / "concept";
    fs::remove_all(dir);
    fs::create_directories(dir);
    ojson sum = ojson::object();
    for (const auto& path : lexicons) {
        const ConceptLexicon lex = resolve_lexicon(load_lexicon(path), tr.bundle.vocab);
        std::vector<RelevanceSeries> series;
        for (int k = 0; k < cl.cm.K; ++k) {
            series.push_back(concept_score(cl.cm.centroids.row(k).transpose(), k,
                                           cl.sizes[static_cast<std::size_t>(k)], lex,
                                           tr.bundle.vocab, tr.model,
                                           c.analysis.time_averaged_concept));
        }
        series = filter_min_size(std::move(series), c.analysis.min_cluster_size);
        export_series(series, dir / ("concept_" + lex.name + ".csv"));
        ojson means = ojson::object();
        for (const auto& s : series) means[std::to_string(s.cluster_id)] = series_mean(s);
        sum[lex.name] = {{"words", lex.words}, {"missing", lex.missing}, {"mean_score", means}};
        std::cout << "concept: " << lex.name << ", " << lex.words.size() << " words ("
                  << lex.missing.size() << " missing), " << series.size() << " clusters\n";
    }
    write_json(dir / "summary.json", sum);
    finish_stage(c, "concept", sum);
}

ojson points_json(const Matrix& P) {
    ojson a = ojson::array();
    for (Eigen::Index r = 0; r < P.rows(); ++r) a.push_back({P(r, 0), P(r, 1)});
    return a;
}

void stage_project(const RunConfig& c) {
    require_stage(c, "forecast");
    const Trained tr = load_trained(c);
    require_stage(c, "ingest");
    const Ingested in = load_ingest(c);
    const Forecaster f = load_forecaster(c.out() / "forecast" / "forecaster");
    const CommunityCentroids cents =
        community_centroids(tr.model, tr.bundle.users, windows_for(tr.model, in.buckets));
    std::vector<std::string> users = c.analysis.users;
    if (users.empty()) {
        const auto tu = test_users(c);
        if (tu.empty()) throw Error("no test user to project; set analysis.users");
        users.push_back(tu.front());
    }
    const fs::path dir = c.out() / "project";
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& u : users) {
        const TrajectoryProjection tp =
            project_trajectory(tr.model, tr.bundle.users, u, tr.stacked.X, f, cents);
        ojson j;
        j["user"] = u;
        j["explained_variance"] = std::vector<double>(tp.pca.variance.data(),
                                                      tp.pca.variance.data() + tp.pca.variance.size());
        j["points"] = points_json(tp.points);
        j["forecasts"] = points_json(tp.forecasts);
        ojson cj = ojson::object();
        for (std::size_t k = 0; k < cents.names.size(); ++k) {
            cj[cents.names[k]] = {tp.centroid_points(static_cast<Eigen::Index>(k), 0),
                                  tp.centroid_points(static_cast<Eigen::Index>(k), 1)};
        }
        j["centroids"] = cj;
        write_json(dir / ("trajectory_" + u + ".json"), j);
    }
    ojson sum;
    sum["users"] = users;
    finish_stage(c, "project", sum);
    std::cout << "project: " << users.size() << " trajectories\n";
}

void dispatch(const std::string& stage, const RunConfig& c) {
    if (stage == "synth") return stage_synth(c);
    if (stage == "ingest") return stage_ingest(c);
    if (stage == "matrices") return stage_matrices(c);
    if (stage == "train") return stage_train(c);
    if (stage == "eval-recon") return stage_eval_recon(c);
    if (stage == "cluster") return stage_cluster(c);
    if (stage == "purity") return stage_purity(c);
    if (stage == "forecast") return stage_forecast(c);
    if (stage == "predict") return stage_predict(c);
    if (stage == "relevance") return stage_relevance(c);
    if (stage == "concept") return stage_concept(c);
    if (stage == "project") return stage_project(c);
    throw ConfigError("unknown stage " + stage);
}

void write_runlog(const RunConfig& c, const std::string& stage, double seconds) {
    ojson j;
    j["subcommand"] = stage;
    j["config_hash"] = stage_hash(c, stage);
    j["wall_time_s"] = seconds;
    j["versions"] = {{"cerberus", CERBERUS_VERSION},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                   std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"compiler", __VERSION__}};
    write_json(c.out() / "runlog" / (stage + ".json"), j);
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    try {
        check_keys(j,
                   {"seed", "paths", "windowing", "filter", "model", "forecaster", "clustering",
                    "eval", "label_levels", "synth", "analysis"},
                   "run configuration");
        RunConfig c;
        c.seed = j.value("seed", c.seed);
        if (auto it = j.find("paths"); it != j.end()) {
            check_keys(*it, {"corpus", "background", "future", "output", "lexicons"}, "paths");
            c.paths.corpus = it->value("corpus", c.paths.corpus);
            c.paths.background = it->value("background", c.paths.background);
            c.paths.future = it->value("future", c.paths.future);
            c.paths.output = it->value("output", c.paths.output);
            c.paths.lexicons = it->value("lexicons", c.paths.lexicons);
        }
        if (auto it = j.find("windowing"); it != j.end()) {
            check_keys(*it, {"start", "window_length", "T"}, "windowing");
            c.windowing.start = it->value("start", c.windowing.start);
            c.windowing.window_length = it->value("window_length", c.windowing.window_length);
            c.windowing.T = it->value("T", c.windowing.T);
        }
        if (auto it = j.find("filter"); it != j.end()) {
            check_keys(*it, {"min_active_timesteps", "n_context_users", "min_word_users"}, "filter");
            c.filter.min_active_timesteps = it->value("min_active_timesteps", c.filter.min_active_timesteps);
            c.filter.n_context_users = it->value("n_context_users", c.filter.n_context_users);
            c.filter.min_word_users = it->value("min_word_users", c.filter.min_word_users);
        }
        read_section(j, "model", c.model);
        read_section(j, "forecaster", c.forecaster);
        read_section(j, "synth", c.synth);
        if (auto it = j.find("clustering"); it != j.end()) {
            check_keys(*it, {"K_list", "n_seeds", "max_iters", "K", "size_weighted"}, "clustering");
            c.clustering.K_list = it->value("K_list", c.clustering.K_list);
            c.clustering.n_seeds = it->value("n_seeds", c.clustering.n_seeds);
            c.clustering.max_iters = it->value("max_iters", c.clustering.max_iters);
            c.clustering.K = it->value("K", c.clustering.K);
            c.clustering.size_weighted = it->value("size_weighted", c.clustering.size_weighted);
        }
        if (auto it = j.find("eval"); it != j.end()) {
            check_keys(*it, {"holdout_fraction"}, "eval");
            c.holdout_fraction = it->value("holdout_fraction", c.holdout_fraction);
        }
        if (auto it = j.find("label_levels"); it != j.end()) {
            c.label_levels.clear();
            for (const auto& l : *it) c.label_levels.push_back(parse_level(l.get<std::string>()));
        }
        if (auto it = j.find("analysis"); it != j.end()) {
            check_keys(*it, {"words", "users", "time_averaged_concept", "min_cluster_size"}, "analysis");
            c.analysis.words = it->value("words", c.analysis.words);
            c.analysis.users = it->value("users", c.analysis.users);
            c.analysis.time_averaged_concept =
                it->value("time_averaged_concept", c.analysis.time_averaged_concept);
            c.analysis.min_cluster_size = it->value("min_cluster_size", c.analysis.min_cluster_size);
        }

        c.model.validate();
        make_variant(c.model.variant);
        c.forecaster.validate();
        if (c.uses_synth()) c.synth.validate();
        if (c.paths.output.empty()) throw ConfigError("paths.output must not be empty");
        if (c.clustering.K_list.empty()) throw ConfigError("clustering.K_list must not be empty");
        for (int K : c.clustering.K_list) {
            if (K < 1) throw ConfigError("clustering.K_list values must be >= 1");
        }
        if (c.clustering.n_seeds < 1) throw ConfigError("clustering.n_seeds must be >= 1");
        if (c.clustering.max_iters < 1) throw ConfigError("clustering.max_iters must be >= 1");
        if (c.clustering.K < 0) throw ConfigError("clustering.K must be >= 0");
        if (!(c.holdout_fraction > 0 && c.holdout_fraction < 1)) {
            throw ConfigError("eval.holdout_fraction must lie in (0, 1)");
        }
        if (c.label_levels.empty()) throw ConfigError("label_levels must not be empty");
        const TimeWindowing w = effective_windowing(c);
        if (w.T < 1) throw ConfigError("windowing.T must be >= 1");
        if (w.window_length <= 0) throw ConfigError("windowing.window_length must be > 0");
        if (c.filter.min_active_timesteps < 1 || c.filter.n_context_users < 1 ||
            c.filter.min_word_users < 1) {
            throw ConfigError("filter values must be >= 1");
        }
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
}

json load_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse configuration file " + path.string() + ": " + e.what());
    }
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json* node = &j;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t p = 0; p < parts.size(); ++p) {
        if (parts[p].empty()) throw ConfigError("override key '" + key + "' has an empty segment");
        if (!node->is_object()) {
            if (!node->is_null()) throw ConfigError("override key '" + key + "' crosses a non-object");
            *node = json::object();
        }
        node = &(*node)[parts[p]];
    }
    *node = value;
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& s : stages()) n.push_back(s.name);
        return n;
    }();
    return names;
}

std::string stage_hash(const RunConfig& c, const std::string& stage) {
    std::string text = stage + "|" + section(c, stage).dump();
    for (const auto& p : parents(c, stage)) text += "|" + p + "=" + stage_hash(c, p);
    return hex64(fnv1a64(text));
}

void run_stage(const std::string& stage, const RunConfig& cfg) {
    dir_of(stage);
    DirLock lock(cfg.out());
    const auto t0 = std::chrono::steady_clock::now();
    dispatch(stage, cfg);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    write_runlog(cfg, stage, dt.count());
}

void run_all(const RunConfig& cfg) {
    std::vector<std::string> order;
    if (cfg.uses_synth()) order.push_back("synth");
    for (const char* s : {"ingest", "matrices", "train", "eval-recon", "cluster", "purity"}) {
        order.push_back(s);
    }
    const TimeWindowing w = effective_windowing(cfg);
    const bool dynamic = !make_variant(cfg.model.variant).time_aggregated && w.T >= 2;
    if (dynamic) order.push_back("forecast");
    const bool has_future = !cfg.paths.future.empty() || (cfg.uses_synth() && cfg.synth.future_windows > 0);
    if (dynamic && has_future) order.push_back("predict");
    const Variant v = make_variant(cfg.model.variant);
    if (!cfg.analysis.words.empty() && v.uses_content && v.dynamic_word && !v.time_aggregated) {
        order.push_back("relevance");
    }
    if (!effective_lexicons(cfg).empty() && v.uses_content) order.push_back("concept");
    if (dynamic && cfg.model.k >= 2) order.push_back("project");
    for (const auto& s : order) run_stage(s, cfg);
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const MissingArtifact*>(&e)) return 2;
    if (dynamic_cast<const ConfigError*>(&e)) return 3;
    return 1;
}

Prepared prepare(const CorpusStore& corpus, const TimeWindowing& w, const FilterConfig& f,
                 const BackgroundModel& bg) {
    Prepared p;
    p.buckets = partition_timesteps(corpus, w);
    p.roster = filter_users(p.buckets, f);
    p.context = select_context_users(p.buckets, f);
    p.vocab = build_vocab(p.buckets, p.roster, f);
    p.bundle = build_bundle(p.buckets, p.roster, p.context, p.vocab, bg);
    p.pooled = build_bundle({pool_buckets(p.buckets)}, p.roster, p.context, p.vocab, bg);
    return p;
}

}  // namespace cerberus
