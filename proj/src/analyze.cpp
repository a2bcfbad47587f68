#include "cerberus/analyze.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace cerberus {
namespace {

void require_dynamic_words(const EmbeddingSet& model) {
    if (!model.variant.uses_content) {
        throw Error("variant " + model.variant.name + " has no word factors");
    }
    if (model.variant.time_aggregated || !model.variant.dynamic_word) {
        throw Error("static word factors yield constant series (variant " + model.variant.name +
                    ")");
    }
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& s, const char* what, std::size_t line) {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw Error(std::string("bad ") + what + " at line " + std::to_string(line));
    }
    return v;
}

}  // namespace

ConceptLexicon load_lexicon(const std::filesystem::path& path, std::string name) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open lexicon " + path.string());
    ConceptLexicon lex;
    lex.name = name.empty() ? path.stem().string() : std::move(name);
    std::set<std::string> seen;
    std::string line;
    while (std::getline(in, line)) {
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        std::transform(line.begin(), line.end(), line.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (seen.insert(line).second) lex.words.push_back(line);
    }
    if (lex.words.empty()) throw Error("lexicon " + path.string() + " is empty");
    return lex;
}

ConceptLexicon resolve_lexicon(const ConceptLexicon& lex, const NameIndex& vocab) {
    ConceptLexicon out;
    out.name = lex.name;
    out.missing = lex.missing;
    for (const auto& w : lex.words) {
        (vocab.find(w) ? out.words : out.missing).push_back(w);
    }
    if (out.words.empty()) {
        throw Error("no word of lexicon " + lex.name + " is in the vocabulary");
    }
    return out;
}

RelevanceSeries word_relevance(const std::string& word, const NameIndex& vocab,
                               const Vector& centroid, int cluster_id, std::size_t cluster_size,
                               const EmbeddingSet& model) {
    require_dynamic_words(model);
    const auto z = vocab.find(word);
    if (!z) throw Error("word '" + word + "' is not in the vocabulary");
    if (centroid.size() != model.k) throw Error("centroid dimension does not match the model");
    RelevanceSeries s{word, cluster_id, cluster_size, {}};
    for (int t = 0; t < model.T(); ++t) {
        s.values.push_back(centroid.dot(model.words_at(t).row(static_cast<Eigen::Index>(*z))));
    }
    return s;
}

Vector concept_centroid(const ConceptLexicon& lex, const NameIndex& vocab,
                        const EmbeddingSet& model, int t) {
    if (!model.variant.uses_content) {
        throw Error("variant " + model.variant.name + " has no word factors");
    }
    Vector acc = Vector::Zero(model.k);
    std::size_t n = 0;
    for (const auto& w : lex.words) {
        auto z = vocab.find(w);
        if (!z) continue;
        acc += model.words_at(t).row(static_cast<Eigen::Index>(*z)).transpose();
        ++n;
    }
    if (n == 0) throw Error("no word of lexicon " + lex.name + " is in the vocabulary");
    return acc / static_cast<double>(n);
}

RelevanceSeries concept_score(const Vector& centroid, int cluster_id, std::size_t cluster_size,
                              const ConceptLexicon& lex, const NameIndex& vocab,
                              const EmbeddingSet& model, bool time_averaged) {
    if (centroid.size() != model.k) throw Error("centroid dimension does not match the model");
    RelevanceSeries s{lex.name, cluster_id, cluster_size, {}};
    if (time_averaged) {
        Vector avg = Vector::Zero(model.k);
        for (int t = 0; t < model.T(); ++t) avg += concept_centroid(lex, vocab, model, t);
        avg /= static_cast<double>(model.T());
        s.values.assign(static_cast<std::size_t>(model.T()), centroid.dot(avg));
        return s;
    }
    for (int t = 0; t < model.T(); ++t) {
        s.values.push_back(centroid.dot(concept_centroid(lex, vocab, model, t)));
    }
    return s;
}

double series_mean(const RelevanceSeries& s) {
    if (s.values.empty()) return 0.0;
    double sum = 0.0;
    for (double v : s.values) sum += v;
    return sum / static_cast<double>(s.values.size());
}

Matrix Pca::project(const Matrix& X) const {
    Matrix centred = X;
    centred.rowwise() -= mean.transpose();
    return centred * components;
}

Pca fit_pca(const Matrix& X, int n_components) {
    if (X.cols() < n_components) {
        throw Error("PCA needs embeddings of dimension >= " + std::to_string(n_components));
    }
    if (X.rows() < 1) throw Error("PCA needs at least one row");
    Pca p;
    p.mean = X.colwise().mean().transpose();
    Matrix centred = X;
    centred.rowwise() -= p.mean.transpose();
    const Eigen::MatrixXd cov =
        (centred.transpose() * centred) / static_cast<double>(std::max<Eigen::Index>(1, X.rows()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw Error("eigendecomposition failed");
    const auto k = X.cols();
    p.components.resize(k, n_components);
    p.variance.resize(n_components);
    for (int c = 0; c < n_components; ++c) {
        // eigenvalues come in increasing order
        const Eigen::Index src = k - 1 - c;
        Vector v = es.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0) v = -v;
        p.components.col(c) = v;
        p.variance[c] = es.eigenvalues()[src];
    }
    return p;
}

TrajectoryProjection project_trajectory(const EmbeddingSet& model, const NameIndex& roster,
                                        const std::string& user, const Matrix& stacked,
                                        const Forecaster& forecaster,
                                        const CommunityCentroids& centroids) {
    if (model.k < 2) throw Error("trajectory projection needs k >= 2");
    const auto i = roster.find(user);
    if (!i) throw Error("user '" + user + "' is not in the roster");
    TrajectoryProjection tp;
    tp.user = user;
    tp.pca = fit_pca(stacked, 2);
    Matrix seq(model.T(), model.k);
    for (int t = 0; t < model.T(); ++t) {
        seq.row(t) = model.users_at(t).row(static_cast<Eigen::Index>(*i));
    }
    tp.points = tp.pca.project(seq);
    tp.forecasts = tp.pca.project(forecaster.predict_steps({seq})[0]);
    tp.centroids = centroids;
    tp.centroid_points = centroids.X.rows() ? tp.pca.project(centroids.X) : Matrix(0, 2);
    return tp;
}

void export_series(const std::vector<RelevanceSeries>& series, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "subject,cluster_id,cluster_size,t,value\n";
    for (const auto& s : series) {
        if (s.subject.find_first_of(",\"\n\r") != std::string::npos) {
            throw Error("series subject '" + s.subject + "' cannot be written to CSV");
        }
        for (std::size_t t = 0; t < s.values.size(); ++t) {
            out << s.subject << ',' << s.cluster_id << ',' << s.cluster_size << ',' << t << ','
                << format_double(s.values[t]) << '\n';
        }
    }
    if (!out) throw Error("write failed: " + path.string());
}

std::vector<RelevanceSeries> read_series(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "subject,cluster_id,cluster_size,t,value") {
        throw Error("unexpected series header in " + path.string());
    }
    std::vector<RelevanceSeries> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 5) throw Error("expected 5 fields at line " + std::to_string(lineno));
        const int cid = parse_number<int>(f[1], "cluster_id", lineno);
        const auto size = parse_number<std::size_t>(f[2], "cluster_size", lineno);
        const auto t = parse_number<std::size_t>(f[3], "t", lineno);
        const double v = parse_number<double>(f[4], "value", lineno);
        if (out.empty() || out.back().subject != f[0] || out.back().cluster_id != cid ||
            t == 0) {
            out.push_back({f[0], cid, size, {}});
        }
        if (t != out.back().values.size()) {
            throw Error("non-consecutive t at line " + std::to_string(lineno));
        }
        out.back().values.push_back(v);
    }
    return out;
}

std::vector<RelevanceSeries> filter_min_size(std::vector<RelevanceSeries> series,
                                             std::size_t min_cluster_size) {
    std::erase_if(series, [&](const RelevanceSeries& s) { return s.cluster_size < min_cluster_size; });
    return series;
}

}  // namespace cerberus
