#pragma once

#include "cerberus/corpus.hpp"
#include "cerberus/forecast.hpp"
#include "cerberus/model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cerberus {

struct ConceptLexicon {
    std::string name;
    std::vector<std::string> words;
    std::vector<std::string> missing;  // words dropped because they are not in the vocabulary
};

/// One token per line, '#' starts a comment, blank lines ignored, tokens lowercased.
ConceptLexicon load_lexicon(const std::filesystem::path& path, std::string name = {});

/// Keeps the words present in `vocab`; throws when none is.
ConceptLexicon resolve_lexicon(const ConceptLexicon& lex, const NameIndex& vocab);

struct RelevanceSeries {
    std::string subject;
    int cluster_id = 0;
    std::size_t cluster_size = 0;
    std::vector<double> values;  // one per timestep
};

/// value_t = centroid . W_t[word]. The centroid is held fixed, so all variation comes
/// from the word's embedding.
RelevanceSeries word_relevance(const std::string& word, const NameIndex& vocab,
                               const Vector& centroid, int cluster_id, std::size_t cluster_size,
                               const EmbeddingSet& model);

/// Mean of W_t rows over the lexicon words (already resolved against the vocabulary).
Vector concept_centroid(const ConceptLexicon& lex, const NameIndex& vocab,
                        const EmbeddingSet& model, int t);

/// With `time_averaged`, one centroid averaged over t is used at every timestep.
RelevanceSeries concept_score(const Vector& centroid, int cluster_id, std::size_t cluster_size,
                              const ConceptLexicon& lex, const NameIndex& vocab,
                              const EmbeddingSet& model, bool time_averaged = false);

double series_mean(const RelevanceSeries& s);

struct Pca {
    Vector mean;
    Matrix components;  // k x n_components, columns by decreasing variance
    Vector variance;    // eigenvalues of the covariance

    Matrix project(const Matrix& X) const;
};

/// Principal components of the rows of X. Each component's largest-magnitude loading is
/// made positive.
Pca fit_pca(const Matrix& X, int n_components = 2);

struct TrajectoryProjection {
    std::string user;
    Pca pca;
    Matrix points;     // T x 2, the user's embedding at each timestep
    Matrix forecasts;  // T x 2, row s forecasts timestep s + 1 (the last row is T)
    CommunityCentroids centroids;
    Matrix centroid_points;  // one row per community
};

/// PCA is fit on `stacked` (all stacked user embeddings).
TrajectoryProjection project_trajectory(const EmbeddingSet& model, const NameIndex& roster,
                                        const std::string& user, const Matrix& stacked,
                                        const Forecaster& forecaster,
                                        const CommunityCentroids& centroids);

/// CSV: subject,cluster_id,cluster_size,t,value in input order.
void export_series(const std::vector<RelevanceSeries>& series, const std::filesystem::path& path);
std::vector<RelevanceSeries> read_series(const std::filesystem::path& path);

std::vector<RelevanceSeries> filter_min_size(std::vector<RelevanceSeries> series,
                                             std::size_t min_cluster_size);

}  // namespace cerberus
