#include "cerberus/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

namespace cerberus {
namespace {

double sq_dist(const Matrix& X, Eigen::Index r, const Matrix& C, Eigen::Index c) {
    return (X.row(r) - C.row(c)).squaredNorm();
}

std::vector<Eigen::Index> plus_plus(const Matrix& X, int K, std::mt19937_64& rng) {
    const Eigen::Index n = X.rows();
    std::vector<Eigen::Index> chosen;
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    chosen.push_back(first(rng));
    std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    while (static_cast<int>(chosen.size()) < K) {
        const Eigen::Index last = chosen.back();
        double total = 0.0;
        for (Eigen::Index r = 0; r < n; ++r) {
            auto& d = d2[static_cast<std::size_t>(r)];
            d = std::min(d, (X.row(r) - X.row(last)).squaredNorm());
            total += d;
        }
        Eigen::Index pick = n - 1;
        if (total > 0) {
            double u = unif(rng) * total;
            for (Eigen::Index r = 0; r < n; ++r) {
                u -= d2[static_cast<std::size_t>(r)];
                if (u < 0 && d2[static_cast<std::size_t>(r)] > 0) {
                    pick = r;
                    break;
                }
            }
            while (d2[static_cast<std::size_t>(pick)] == 0) --pick;
        } else {
            // every remaining point coincides with a chosen centre
            std::vector<Eigen::Index> rest;
            for (Eigen::Index r = 0; r < n; ++r) {
                if (std::find(chosen.begin(), chosen.end(), r) == chosen.end()) rest.push_back(r);
            }
            std::uniform_int_distribution<std::size_t> any(0, rest.size() - 1);
            pick = rest[any(rng)];
        }
        chosen.push_back(pick);
    }
    return chosen;
}

// Returns the within-cluster sum of squares; ties go to the lowest cluster index.
double assign(const Matrix& X, const Matrix& C, std::vector<int>& out) {
    const Eigen::Index n = X.rows();
    std::vector<double> best(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
    for (Eigen::Index r = 0; r < n; ++r) {
        int arg = 0;
        double bd = sq_dist(X, r, C, 0);
        for (Eigen::Index c = 1; c < C.rows(); ++c) {
            const double d = sq_dist(X, r, C, c);
            if (d < bd) {
                bd = d;
                arg = static_cast<int>(c);
            }
        }
        out[static_cast<std::size_t>(r)] = arg;
        best[static_cast<std::size_t>(r)] = bd;
    }
    double s = 0.0;
    for (double d : best) s += d;
    return s;
}

void update(const Matrix& X, std::vector<int>& assignment, Matrix& C) {
    const auto K = static_cast<int>(C.rows());
    std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(K));
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        members[static_cast<std::size_t>(assignment[static_cast<std::size_t>(r)])].push_back(r);
    }
    auto recompute = [&](int c) {
        const auto& ms = members[static_cast<std::size_t>(c)];
        C.row(c).setZero();
        for (Eigen::Index r : ms) C.row(c) += X.row(r);
        C.row(c) /= static_cast<double>(ms.size());
    };
#pragma omp parallel for schedule(static)
    for (int c = 0; c < K; ++c) {
        if (!members[static_cast<std::size_t>(c)].empty()) recompute(c);
    }
    for (int c = 0; c < K; ++c) {
        if (!members[static_cast<std::size_t>(c)].empty()) continue;
        int largest = 0;
        for (int o = 1; o < K; ++o) {
            if (members[static_cast<std::size_t>(o)].size() >
                members[static_cast<std::size_t>(largest)].size()) {
                largest = o;
            }
        }
        auto& from = members[static_cast<std::size_t>(largest)];
        std::size_t far = 0;
        double fd = -1.0;
        for (std::size_t p = 0; p < from.size(); ++p) {
            const double d = sq_dist(X, from[p], C, largest);
            if (d > fd) {
                fd = d;
                far = p;
            }
        }
        const Eigen::Index r = from[far];
        from.erase(from.begin() + static_cast<std::ptrdiff_t>(far));
        members[static_cast<std::size_t>(c)].push_back(r);
        assignment[static_cast<std::size_t>(r)] = c;
        recompute(c);
        recompute(largest);
    }
}

}  // namespace

StackedEmbeddings stack(const EmbeddingSet& model, const NameIndex& roster,
                        const std::vector<std::vector<std::uint8_t>>& activity) {
    if (roster.size() != model.dims.m) throw Error("roster size does not match the model");
    for (const auto& a : activity) {
        if (a.size() != roster.size()) throw Error("activity rows do not match the roster");
    }
    std::vector<std::vector<std::uint8_t>> act = activity;
    if (model.T() == 1 && act.size() > 1) {
        std::vector<std::uint8_t> any(roster.size(), 0);
        for (const auto& a : activity) {
            for (std::size_t i = 0; i < a.size(); ++i) any[i] = any[i] || a[i];
        }
        act = {any};
    }
    if (act.size() != static_cast<std::size_t>(model.T())) {
        throw Error("activity covers " + std::to_string(act.size()) + " timesteps, model has " +
                    std::to_string(model.T()));
    }
    StackedEmbeddings s;
    for (int t = 0; t < model.T(); ++t) {
        for (std::size_t i = 0; i < roster.size(); ++i) {
            if (!act[static_cast<std::size_t>(t)][i]) continue;
            s.rows.push_back({roster.name(i), t});
            s.user_index.push_back(i);
        }
    }
    s.X.resize(static_cast<Eigen::Index>(s.rows.size()), model.k);
    for (std::size_t r = 0; r < s.rows.size(); ++r) {
        s.X.row(static_cast<Eigen::Index>(r)) =
            model.users_at(s.rows[r].t).row(static_cast<Eigen::Index>(s.user_index[r]));
    }
    return s;
}

ClusterModel kmeans(const Matrix& X, int K, std::uint64_t seed, int max_iters) {
    if (K < 1 || K > X.rows()) {
        throw ConfigError("K = " + std::to_string(K) + " must lie in [1, " +
                          std::to_string(X.rows()) + "]");
    }
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    std::mt19937_64 rng(seed);
    ClusterModel cm;
    cm.K = K;
    cm.seed = seed;
    const auto init = plus_plus(X, K, rng);
    cm.centroids.resize(K, X.cols());
    for (int c = 0; c < K; ++c) cm.centroids.row(c) = X.row(init[static_cast<std::size_t>(c)]);

    const auto n = static_cast<std::size_t>(X.rows());
    cm.assignment.assign(n, -1);
    std::vector<int> next(n);
    for (int it = 0; it < max_iters; ++it) {
        cm.objective.push_back(assign(X, cm.centroids, next));
        cm.iterations = it + 1;
        if (next == cm.assignment) break;
        cm.assignment = next;
        update(X, cm.assignment, cm.centroids);
    }
    return cm;
}

ClusterModel best_kmeans(const Matrix& X, int K, std::uint64_t seed, int n_seeds, int max_iters) {
    if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
    ClusterModel best;
    for (int s = 0; s < n_seeds; ++s) {
        ClusterModel cm = kmeans(X, K, kmeans_seed(seed, K, s), max_iters);
        if (s == 0 || cm.objective.back() < best.objective.back()) best = std::move(cm);
    }
    return best;
}

const std::vector<std::string>* LabelSet::find(const RowKey& key) const {
    auto it = labels.find(key);
    return it == labels.end() ? nullptr : &it->second;
}

const char* level_name(LabelLevel level) {
    return level == LabelLevel::category ? "category" : "community";
}

LabelLevel parse_level(const std::string& name) {
    if (name == "category") return LabelLevel::category;
    if (name == "community" || name == "subreddit") return LabelLevel::community;
    throw ConfigError("unknown label level '" + name + "' (expected category or community)");
}

LabelSet labels_from_buckets(const std::vector<Bucket>& buckets, const NameIndex& roster,
                             LabelLevel level) {
    std::map<RowKey, std::set<std::string>> acc;
    for (std::size_t t = 0; t < buckets.size(); ++t) {
        for (const auto& p : buckets[t]) {
            if (!roster.find(p.user_id)) continue;
            const std::string& lab = level == LabelLevel::category ? p.category : p.community;
            if (lab.empty()) continue;
            acc[{p.user_id, static_cast<int>(t)}].insert(lab);
        }
    }
    LabelSet ls;
    ls.level = level;
    for (auto& [k, v] : acc) ls.labels.emplace(k, std::vector<std::string>(v.begin(), v.end()));
    return ls;
}

PurityResult purity(const std::vector<int>& assignment, int K, const std::vector<RowKey>& rows,
                    const LabelSet& labels) {
    if (assignment.size() != rows.size()) throw Error("assignment does not match the rows");
    std::vector<std::map<std::string, std::size_t>> counts(static_cast<std::size_t>(K));
    std::vector<std::size_t> labeled(static_cast<std::size_t>(K), 0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto* ls = labels.find(rows[r]);
        if (!ls || ls->empty()) continue;
        const int c = assignment[r];
        if (c < 0 || c >= K) throw Error("cluster index out of range");
        ++labeled[static_cast<std::size_t>(c)];
        for (const auto& l : *ls) ++counts[static_cast<std::size_t>(c)][l];
    }
    PurityResult res;
    res.per_cluster.resize(static_cast<std::size_t>(K));
    double sum = 0.0, wsum = 0.0;
    std::size_t nonempty = 0, total = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (labeled[c] == 0) continue;
        std::size_t best = 0;
        for (const auto& [l, n] : counts[c]) best = std::max(best, n);
        const double p = static_cast<double>(best) / static_cast<double>(labeled[c]);
        res.per_cluster[c] = p;
        sum += p;
        wsum += static_cast<double>(best);
        ++nonempty;
        total += labeled[c];
    }
    if (nonempty == 0) throw Error("no labeled rows to evaluate purity against");
    res.mean = sum / static_cast<double>(nonempty);
    res.weighted_mean = wsum / static_cast<double>(total);
    return res;
}

std::uint64_t kmeans_seed(std::uint64_t seed, int K, int s) {
    return derive_seed(seed, "kmeans/" + std::to_string(K) + "/" + std::to_string(s));
}

std::vector<PurityRow> purity_report(const StackedEmbeddings& stacked,
                                     const std::vector<LabelSet>& label_sets,
                                     const std::vector<int>& K_list, int n_seeds,
                                     std::uint64_t seed, bool size_weighted) {
    if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
    std::vector<PurityRow> out;
    for (int K : K_list) {
        std::vector<ClusterModel> runs;
        for (int s = 0; s < n_seeds; ++s) runs.push_back(kmeans(stacked.X, K, kmeans_seed(seed, K, s)));
        for (const auto& ls : label_sets) {
            PurityRow row;
            row.K = K;
            row.level = ls.level;
            for (const auto& cm : runs) {
                const auto p = purity(cm.assignment, K, stacked.rows, ls);
                row.per_seed.push_back(size_weighted ? p.weighted_mean : p.mean);
            }
            double mu = 0.0;
            for (double v : row.per_seed) mu += v;
            mu /= static_cast<double>(n_seeds);
            double var = 0.0;
            for (double v : row.per_seed) var += (v - mu) * (v - mu);
            row.mean = mu;
            row.std = std::sqrt(var / static_cast<double>(n_seeds));
            out.push_back(std::move(row));
        }
    }
    return out;
}

}  // namespace cerberus
