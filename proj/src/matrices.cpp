#include "cerberus/matrices.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

namespace cerberus {
namespace {

std::string indexed_name(const char* prefix, int t, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03d.%s", prefix, t, ext);
    return buf;
}

}  // namespace

SparseMatrix build_adjacency(const Bucket& bucket, const NameIndex& roster,
                             const NameIndex& context) {
    if (roster.empty() || context.empty()) throw Error("build_adjacency: empty roster");

    // thread -> distinct context users; roster user -> distinct threads
    std::unordered_map<std::string, std::set<std::uint32_t>> participants;
    std::vector<std::set<std::string>> threads_of(roster.size());
    for (const auto& p : bucket) {
        if (auto j = context.find(p.user_id)) {
            participants[p.thread_id].insert(static_cast<std::uint32_t>(*j));
        }
        if (auto i = roster.find(p.user_id)) threads_of[*i].insert(p.thread_id);
    }

    // Self-exclusion: the context column of user i, if any.
    std::vector<std::int64_t> self_col(roster.size(), -1);
    for (std::size_t i = 0; i < roster.size(); ++i) {
        if (auto j = context.find(roster.name(i))) self_col[i] = static_cast<std::int64_t>(*j);
    }

    std::vector<std::vector<Entry>> rows(roster.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t i = 0; i < roster.size(); ++i) {
        std::map<std::uint32_t, std::int64_t> shared;
        for (const auto& th : threads_of[i]) {
            auto it = participants.find(th);
            if (it == participants.end()) continue;
            for (auto j : it->second) {
                if (static_cast<std::int64_t>(j) != self_col[i]) ++shared[j];
            }
        }
        std::int64_t denom = 0;
        for (const auto& [j, c] : shared) denom += c;
        if (denom == 0) continue;
        auto& out = rows[i];
        out.reserve(shared.size());
        for (const auto& [j, c] : shared) {
            out.push_back({static_cast<std::uint32_t>(i), j,
                           static_cast<double>(c) / static_cast<double>(denom)});
        }
    }

    std::vector<Entry> entries;
    for (auto& r : rows) entries.insert(entries.end(), r.begin(), r.end());
    return SparseMatrix::from_entries(roster.size(), context.size(), std::move(entries));
}

SparseMatrix build_content(const Bucket& bucket, const NameIndex& roster, const NameIndex& vocab,
                           const BackgroundModel& bg) {
    if (vocab.empty()) throw Error("build_content: empty vocabulary");
    std::vector<std::unordered_map<std::string, std::int64_t>> counts(roster.size());
    std::vector<std::int64_t> totals(roster.size(), 0);
    for (const auto& p : bucket) {
        auto i = roster.find(p.user_id);
        if (!i) continue;
        for (const auto& tok : p.tokens) ++counts[*i][tok];
        totals[*i] += static_cast<std::int64_t>(p.tokens.size());
    }

    std::vector<double> bg_prob(vocab.size());
    for (std::size_t z = 0; z < vocab.size(); ++z) bg_prob[z] = bg.probability(vocab.name(z));

    std::vector<std::vector<Entry>> rows(roster.size());
    std::vector<std::uint8_t> active(roster.size(), 0);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t i = 0; i < roster.size(); ++i) {
        if (totals[i] == 0) continue;
        active[i] = 1;
        const double total = static_cast<double>(totals[i]);
        auto& out = rows[i];
        for (const auto& [word, c] : counts[i]) {
            auto z = vocab.find(word);
            if (!z) continue;
            const double pmi = std::log((static_cast<double>(c) / total) / bg_prob[*z]);
            if (pmi > 0.0) {
                out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(*z), pmi});
            }
        }
    }

    std::vector<Entry> entries;
    for (auto& r : rows) entries.insert(entries.end(), r.begin(), r.end());
    return SparseMatrix::from_entries(roster.size(), vocab.size(), std::move(entries),
                                      std::move(active));
}

MatrixBundle build_bundle(const std::vector<Bucket>& buckets, const NameIndex& roster,
                          const NameIndex& context, const NameIndex& vocab,
                          const BackgroundModel& bg) {
    if (buckets.empty()) throw Error("build_bundle: no buckets");
    if (roster.empty() || context.empty() || vocab.empty()) {
        throw Error("build_bundle: roster, context roster and vocabulary must be nonempty");
    }
    MatrixBundle b;
    b.users = roster;
    b.context = context;
    b.vocab = vocab;
    const std::size_t T = buckets.size();
    b.A.resize(T);
    b.C.resize(T);
    b.activity.assign(T, std::vector<std::uint8_t>(roster.size(), 0));
    for (std::size_t t = 0; t < T; ++t) {
        b.A[t] = build_adjacency(buckets[t], roster, context);
        b.C[t] = build_content(buckets[t], roster, vocab, bg);
        for (const auto& p : buckets[t]) {
            if (auto i = roster.find(p.user_id)) b.activity[t][*i] = 1;
        }
    }
    validate_bundle(b);
    return b;
}

void validate_bundle(const MatrixBundle& b) {
    if (b.A.empty()) throw Error("bundle has no timesteps");
    if (b.C.size() != b.A.size() || b.activity.size() != b.A.size()) {
        throw Error("bundle timestep counts disagree");
    }
    for (std::size_t t = 0; t < b.A.size(); ++t) {
        if (b.A[t].rows() != b.users.size() || b.A[t].cols() != b.context.size()) {
            throw Error("adjacency matrix " + std::to_string(t) + " has wrong dimensions");
        }
        if (b.C[t].rows() != b.users.size() || b.C[t].cols() != b.vocab.size()) {
            throw Error("content matrix " + std::to_string(t) + " has wrong dimensions");
        }
        if (b.activity[t].size() != b.users.size()) {
            throw Error("activity vector " + std::to_string(t) + " has wrong length");
        }
    }
}

void save_bundle(const std::filesystem::path& dir, const MatrixBundle& b) {
    validate_bundle(b);
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json man;
    man["T"] = b.T();
    man["m"] = b.users.size();
    man["n"] = b.context.size();
    man["d_vocab"] = b.vocab.size();
    man["users"] = b.users.names();
    man["context"] = b.context.names();
    man["vocab"] = b.vocab.names();
    man["activity"] = b.activity;
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    for (int t = 0; t < b.T(); ++t) {
        auto a = indexed_name("A", t, "tmsp");
        auto c = indexed_name("C", t, "tmsp");
        write_sparse(dir / a, b.A[t]);
        write_sparse(dir / c, b.C[t]);
        files.push_back({{"A", a}, {"C", c}});
    }
    man["files"] = files;
    std::ofstream os(dir / "bundle.json");
    os << man.dump(2) << '\n';
}

MatrixBundle load_bundle(const std::filesystem::path& dir) {
    std::ifstream is(dir / "bundle.json");
    if (!is) throw MissingArtifact("missing file " + (dir / "bundle.json").string());
    auto man = nlohmann::json::parse(is);
    MatrixBundle b;
    b.users = NameIndex(man.at("users").get<std::vector<std::string>>());
    b.context = NameIndex(man.at("context").get<std::vector<std::string>>());
    b.vocab = NameIndex(man.at("vocab").get<std::vector<std::string>>());
    b.activity = man.at("activity").get<std::vector<std::vector<std::uint8_t>>>();
    for (const auto& f : man.at("files")) {
        b.A.push_back(read_sparse(dir / f.at("A").get<std::string>()));
        b.C.push_back(read_sparse(dir / f.at("C").get<std::string>()));
    }
    if (man.at("T").get<int>() != b.T()) throw Error("bundle manifest T mismatch");
    validate_bundle(b);
    return b;
}

}  // namespace cerberus
