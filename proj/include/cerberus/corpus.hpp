#pragma once

#include "cerberus/common.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace cerberus {

/// One authored message.
struct Post {
    std::string user_id;
    std::string thread_id;
    std::int64_t timestamp = 0;
    std::string community;
    std::string category;
    std::vector<std::string> tokens;

    friend bool operator==(const Post&, const Post&) = default;
};

struct CorpusStore {
    std::vector<Post> posts;
};

using Bucket = std::vector<Post>;

/// Half-open windows [start + t*len, start + (t+1)*len) for t in [0, T).
struct TimeWindowing {
    std::int64_t start = 0;
    std::int64_t window_length = 1;
    int T = 1;
};

struct FilterConfig {
    int min_active_timesteps = 3;
    int n_context_users = 10000;
    int min_word_users = 20;
};

/// Ordered list of unique names; positions are the matrix row/column ids.
class NameIndex {
public:
    NameIndex() = default;
    explicit NameIndex(std::vector<std::string> names);

    std::size_t size() const { return names_.size(); }
    bool empty() const { return names_.empty(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    const std::vector<std::string>& names() const { return names_; }
    std::optional<std::size_t> find(const std::string& name) const;
    std::size_t at(const std::string& name) const;  // throws if absent

    friend bool operator==(const NameIndex& a, const NameIndex& b) {
        return a.names_ == b.names_;
    }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> pos_;
};

/// Unigram distribution of a background corpus.
class BackgroundModel {
public:
    BackgroundModel() = default;
    static BackgroundModel from_tokens(const std::vector<std::string>& tokens);
    static BackgroundModel from_counts(const std::map<std::string, std::int64_t>& counts);

    std::map<std::string, std::int64_t> counts() const;

    /// P(z); words never seen in the background get the oov floor 1/(N+1).
    double probability(const std::string& word) const;
    double oov_floor() const { return oov_floor_; }
    std::int64_t total_tokens() const { return total_; }
    const std::unordered_map<std::string, double>& table() const { return prob_; }

private:
    std::unordered_map<std::string, double> prob_;
    std::unordered_map<std::string, std::int64_t> count_;
    std::int64_t total_ = 0;
    double oov_floor_ = 1.0;
};

CorpusStore parse_corpus(std::istream& in);
CorpusStore load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, const std::vector<Post>& posts);

std::vector<Bucket> partition_timesteps(const CorpusStore& store, const TimeWindowing& w);

/// Users posting in at least cfg.min_active_timesteps distinct buckets, lexicographic.
NameIndex filter_users(const std::vector<Bucket>& buckets, const FilterConfig& cfg);

/// Top cfg.n_context_users by total post count (ties by user id), listed lexicographically.
NameIndex select_context_users(const std::vector<Bucket>& buckets, const FilterConfig& cfg);

/// Words used by strictly more than cfg.min_word_users distinct roster users, counted
/// over all buckets.
NameIndex build_vocab(const std::vector<Bucket>& buckets, const NameIndex& roster,
                      const FilterConfig& cfg);

/// Background corpus: JSONL posts (first character '{') or a whitespace token stream.
BackgroundModel build_background(const std::filesystem::path& path);

/// Concatenation of all buckets, for time-aggregated variants.
Bucket pool_buckets(const std::vector<Bucket>& buckets);

}  // namespace cerberus
