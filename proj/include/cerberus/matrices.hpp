#pragma once

#include "cerberus/corpus.hpp"
#include "cerberus/sparse.hpp"

#include <filesystem>
#include <vector>

namespace cerberus {

/// Per-timestep source matrices plus the manifests that name their rows and columns.
struct MatrixBundle {
    std::vector<SparseMatrix> A;  // T matrices, users x context users
    std::vector<SparseMatrix> C;  // T matrices, users x vocabulary
    NameIndex users;
    NameIndex context;
    NameIndex vocab;
    // activity[t][i] != 0 when user i posted at least once in window t
    std::vector<std::vector<std::uint8_t>> activity;

    int T() const { return static_cast<int>(A.size()); }
};

/// Row-normalised thread co-participation counts of roster users against context users.
///
/// a_ij = |th_i & th_j| / sum_y |th_i & th_y|, with th_i the threads user i posted in
/// within this bucket. A roster user never counts as their own context user. Rows with a
/// zero denominator are left inactive.
SparseMatrix build_adjacency(const Bucket& bucket, const NameIndex& roster,
                             const NameIndex& context);

/// PPMI(i, z) = max(0, ln(P(z|i) / P(z))) with P(z|i) from the user's tokens in this
/// bucket. Zeros are not stored; users without tokens are inactive.
SparseMatrix build_content(const Bucket& bucket, const NameIndex& roster, const NameIndex& vocab,
                           const BackgroundModel& bg);

MatrixBundle build_bundle(const std::vector<Bucket>& buckets, const NameIndex& roster,
                          const NameIndex& context, const NameIndex& vocab,
                          const BackgroundModel& bg);

/// Throws Error when dimensions disagree across timesteps or with the manifests.
void validate_bundle(const MatrixBundle& b);

void save_bundle(const std::filesystem::path& dir, const MatrixBundle& b);
MatrixBundle load_bundle(const std::filesystem::path& dir);

}  // namespace cerberus
