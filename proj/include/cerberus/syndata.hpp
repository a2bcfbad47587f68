#pragma once

// Synthetic thread-structured corpora with planted communities.
//
// Each community owns `threads_per_window` threads per window. A user posts
// max(1, round(threads_per_window * posts_per_thread / community size)) times per active
// window; each post lands in a thread of the author's community with probability
// 1 - sum of the crossover rates, otherwise in a uniformly chosen thread of a foreign
// community c' with probability crossover(c, c'). Tokens are drawn per post from the
// author's community distribution: every shared word has weight 1, the community's
// signature words weight `signature_boost`, other signature words weight 1. Lexicon
// words and adopted event words are mixed in at fixed per-token rates.

#include "cerberus/cluster.hpp"
#include "cerberus/corpus.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cerberus {

struct DriftEvent {
    std::string kind;      // user_migration | word_adoption | splinter
    int t = 0;             // first affected window (0-based)
    int community = 0;     // source / adopting / parent community
    int target = 0;        // user_migration destination
    double fraction = 0.5; // share of users that migrate or splinter off
    double rate = 0.1;     // word_adoption: per-token probability of the event word
    double factor = 10.0;  // splinter: lexicon-rate multiplier
    std::string word;      // word_adoption: defaults to "event<i>"
};

struct PairCrossover {
    int a = 0;
    int b = 0;
    double rate = 0.0;  // probability that a post of either community lands with the other
};

struct SynthConfig {
    int G = 3;
    int users_per_community = 30;
    int T = 6;
    int future_windows = 0;  // extra windows written to a separate file
    int threads_per_window = 10;
    int posts_per_thread = 6;
    int tokens_per_post = 20;
    double crossover = 0.1;
    std::vector<PairCrossover> pair_crossover;
    int shared_words = 60;
    int signature_words = 20;
    double signature_boost = 10.0;
    // communities listed together draw on one signature word set
    std::vector<std::vector<int>> shared_signatures;
    int lexicon_words = 10;
    double lexicon_rate = 0.01;
    double activity = 1.0;  // probability a user is active in a window
    std::vector<std::string> categories;  // per community; defaults to the community name
    std::vector<DriftEvent> drift_events;
    std::int64_t start = 1522540800;  // 2018-04-01
    std::int64_t window_length = 2592000;
    int background_repeats = 50;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SynthCorpus {
    std::vector<Post> posts;         // windows [0, T)
    std::vector<Post> future_posts;  // windows [T, T + future_windows)
    std::vector<std::string> background;
    std::vector<std::string> lexicon;
    std::vector<std::string> communities;  // including splinters, in creation order
    std::vector<std::string> categories;   // parallel to communities
    std::vector<std::string> users;
    // membership[u][t]: index into `communities` of user u's community in window t
    std::vector<std::vector<int>> membership;
    nlohmann::ordered_json drift_log = nlohmann::ordered_json::array();

    TimeWindowing windowing(const SynthConfig& cfg) const;
    nlohmann::ordered_json ground_truth(const SynthConfig& cfg) const;
    /// Home community (or its category) of every user in every window, active or not.
    LabelSet true_labels(LabelLevel level) const;
};

SynthCorpus generate(const SynthConfig& cfg);

/// corpus.jsonl, future.jsonl (when future_windows > 0), background.txt, lexicon.txt and
/// ground_truth.json.
void write_synth(const std::filesystem::path& dir, const SynthCorpus& s, const SynthConfig& cfg);

}  // namespace cerberus
