#pragma once

#include "cerberus/corpus.hpp"
#include "cerberus/model.hpp"

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cerberus {

struct RowKey {
    std::string user;
    int t = 0;

    friend auto operator<=>(const RowKey&, const RowKey&) = default;
};

/// One row per (user, timestep) with the user active at t; t-major, then roster order.
struct StackedEmbeddings {
    std::vector<RowKey> rows;
    std::vector<std::size_t> user_index;  // roster position of rows[r].user
    Matrix X;
};

/// `activity[t][i]` flags user i as active at t. Time-aggregated models (T = 1) take
/// the union of activity over all windows.
StackedEmbeddings stack(const EmbeddingSet& model, const NameIndex& roster,
                        const std::vector<std::vector<std::uint8_t>>& activity);

struct ClusterModel {
    int K = 0;
    std::uint64_t seed = 0;
    Matrix centroids;                // K x k
    std::vector<int> assignment;     // per row
    std::vector<double> objective;   // within-cluster sum of squares per Lloyd iteration
    int iterations = 0;
};

/// k-means++ seeding then Lloyd iterations until the assignment stops changing or
/// `max_iters` is reached. An emptied cluster takes the point of the largest cluster that
/// lies farthest from its centroid.
ClusterModel kmeans(const Matrix& X, int K, std::uint64_t seed, int max_iters = 300);

/// Lowest final objective over n_seeds restarts, restart s seeded with kmeans_seed(seed, K, s).
ClusterModel best_kmeans(const Matrix& X, int K, std::uint64_t seed, int n_seeds,
                         int max_iters = 300);

enum class LabelLevel { category, community };

/// (user, t) -> sorted label set.
struct LabelSet {
    LabelLevel level = LabelLevel::community;
    std::map<RowKey, std::vector<std::string>> labels;

    const std::vector<std::string>* find(const RowKey& key) const;
};

const char* level_name(LabelLevel level);
LabelLevel parse_level(const std::string& name);

/// Labels of (user, t): every community (or category) the user posted in during window t.
/// Users outside the roster are ignored.
LabelSet labels_from_buckets(const std::vector<Bucket>& buckets, const NameIndex& roster,
                             LabelLevel level);

struct PurityResult {
    std::vector<std::optional<double>> per_cluster;  // nullopt: no labeled rows
    double mean = 0.0;           // unweighted over clusters with labeled rows
    double weighted_mean = 0.0;  // weighted by labeled rows per cluster
};

/// Multilabel purity: for each cluster, the largest number of its labeled rows sharing one
/// label, divided by its number of labeled rows.
PurityResult purity(const std::vector<int>& assignment, int K, const std::vector<RowKey>& rows,
                    const LabelSet& labels);

struct PurityRow {
    int K = 0;
    LabelLevel level = LabelLevel::community;
    double mean = 0.0;
    double std = 0.0;  // population std over seeds
    std::vector<double> per_seed;
};

/// Seed s of K uses derive_seed(seed, "kmeans/K/s").
std::vector<PurityRow> purity_report(const StackedEmbeddings& stacked,
                                     const std::vector<LabelSet>& label_sets,
                                     const std::vector<int>& K_list, int n_seeds,
                                     std::uint64_t seed, bool size_weighted = false);

std::uint64_t kmeans_seed(std::uint64_t seed, int K, int s);

}  // namespace cerberus
