#include "cerberus/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace cerberus {
namespace {

using nlohmann::json;

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

const json& require(const json& rec, const char* field, std::size_t line) {
    auto it = rec.find(field);
    if (it == rec.end() || it->is_null()) {
        throw Error("missing field " + std::string(field) + " at line " + std::to_string(line));
    }
    return *it;
}

std::string string_field(const json& rec, const char* field, std::size_t line) {
    const json& v = require(rec, field, line);
    if (!v.is_string()) {
        throw Error("field " + std::string(field) + " is not a string at line " +
                    std::to_string(line));
    }
    return v.get<std::string>();
}

std::string optional_string(const json& rec, const char* field, std::size_t line) {
    auto it = rec.find(field);
    if (it == rec.end() || it->is_null()) return {};
    if (!it->is_string()) {
        throw Error("field " + std::string(field) + " is not a string at line " +
                    std::to_string(line));
    }
    return it->get<std::string>();
}

Post parse_post(const json& rec, std::size_t line) {
    if (!rec.is_object()) {
        throw Error("line " + std::to_string(line) + " is not a JSON object");
    }
    Post p;
    p.user_id = string_field(rec, "user_id", line);
    p.thread_id = string_field(rec, "thread_id", line);
    const json& ts = require(rec, "timestamp", line);
    if (!ts.is_number_integer()) {
        throw Error("field timestamp is not an integer at line " + std::to_string(line));
    }
    p.timestamp = ts.get<std::int64_t>();
    p.community = optional_string(rec, "community", line);
    p.category = optional_string(rec, "category", line);
    if (auto it = rec.find("tokens"); it != rec.end() && !it->is_null()) {
        if (!it->is_array()) {
            throw Error("field tokens is not an array at line " + std::to_string(line));
        }
        p.tokens.reserve(it->size());
        for (const auto& tok : *it) {
            if (!tok.is_string()) {
                throw Error("non-string token at line " + std::to_string(line));
            }
            p.tokens.push_back(lowercase(tok.get<std::string>()));
        }
    }
    if (p.user_id.empty()) throw Error("empty user_id at line " + std::to_string(line));
    if (p.thread_id.empty()) throw Error("empty thread_id at line " + std::to_string(line));
    if (p.timestamp < 0) throw Error("negative timestamp at line " + std::to_string(line));
    return p;
}

}  // namespace

NameIndex::NameIndex(std::vector<std::string> names) : names_(std::move(names)) {
    pos_.reserve(names_.size());
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (!pos_.emplace(names_[i], i).second) {
            throw Error("duplicate name in index: " + names_[i]);
        }
    }
}

std::optional<std::size_t> NameIndex::find(const std::string& name) const {
    auto it = pos_.find(name);
    if (it == pos_.end()) return std::nullopt;
    return it->second;
}

std::size_t NameIndex::at(const std::string& name) const {
    auto i = find(name);
    if (!i) throw Error("unknown name: " + name);
    return *i;
}

BackgroundModel BackgroundModel::from_tokens(const std::vector<std::string>& tokens) {
    std::map<std::string, std::int64_t> counts;
    for (const auto& t : tokens) ++counts[t];
    return from_counts(counts);
}

BackgroundModel BackgroundModel::from_counts(const std::map<std::string, std::int64_t>& counts) {
    BackgroundModel bg;
    for (const auto& [w, c] : counts) {
        if (c < 1) throw Error("background count of '" + w + "' must be positive");
        bg.total_ += c;
    }
    if (bg.total_ == 0) throw Error("background corpus is empty");
    const double n = static_cast<double>(bg.total_);
    bg.prob_.reserve(counts.size());
    for (const auto& [w, c] : counts) {
        bg.prob_.emplace(w, static_cast<double>(c) / n);
        bg.count_.emplace(w, c);
    }
    bg.oov_floor_ = 1.0 / (n + 1.0);
    return bg;
}

std::map<std::string, std::int64_t> BackgroundModel::counts() const {
    return {count_.begin(), count_.end()};
}

double BackgroundModel::probability(const std::string& word) const {
    auto it = prob_.find(word);
    return it == prob_.end() ? oov_floor_ : it->second;
}

CorpusStore parse_corpus(std::istream& in) {
    CorpusStore store;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (std::all_of(line.begin(), line.end(),
                        [](unsigned char c) { return std::isspace(c); })) {
            continue;
        }
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error("malformed JSON at line " + std::to_string(lineno) + ": " + e.what());
        }
        store.posts.push_back(parse_post(rec, lineno));
    }
    return store;
}

CorpusStore load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open corpus " + path.string());
    return parse_corpus(in);
}

void write_corpus(std::ostream& out, const std::vector<Post>& posts) {
    for (const auto& p : posts) {
        nlohmann::ordered_json rec;
        rec["user_id"] = p.user_id;
        rec["thread_id"] = p.thread_id;
        rec["timestamp"] = p.timestamp;
        rec["community"] = p.community;
        rec["category"] = p.category;
        rec["tokens"] = p.tokens;
        out << rec.dump() << '\n';
    }
}

std::vector<Bucket> partition_timesteps(const CorpusStore& store, const TimeWindowing& w) {
    if (w.T < 1) throw ConfigError("windowing: T must be >= 1");
    if (w.window_length <= 0) throw ConfigError("windowing: window_length must be > 0");
    const std::int64_t end = w.start + static_cast<std::int64_t>(w.T) * w.window_length;
    std::vector<Bucket> buckets(static_cast<std::size_t>(w.T));
    std::vector<const Post*> offending;
    for (const auto& p : store.posts) {
        if (p.timestamp < w.start || p.timestamp >= end) {
            offending.push_back(&p);
            continue;
        }
        auto t = static_cast<std::size_t>((p.timestamp - w.start) / w.window_length);
        buckets[t].push_back(p);
    }
    if (!offending.empty()) {
        std::ostringstream msg;
        msg << offending.size() << " post(s) outside [" << w.start << ", " << end << "):";
        for (std::size_t i = 0; i < std::min<std::size_t>(offending.size(), 5); ++i) {
            msg << " (user " << offending[i]->user_id << ", thread " << offending[i]->thread_id
                << ", timestamp " << offending[i]->timestamp << ")";
        }
        throw Error(msg.str());
    }
    return buckets;
}

NameIndex filter_users(const std::vector<Bucket>& buckets, const FilterConfig& cfg) {
    if (buckets.empty()) throw Error("filter_users: no buckets");
    if (cfg.min_active_timesteps < 1) throw ConfigError("min_active_timesteps must be >= 1");
    std::map<std::string, int> active;
    for (const auto& b : buckets) {
        std::set<std::string> seen;
        for (const auto& p : b) seen.insert(p.user_id);
        for (const auto& u : seen) ++active[u];
    }
    std::vector<std::string> kept;
    for (const auto& [u, n] : active) {
        if (n >= cfg.min_active_timesteps) kept.push_back(u);
    }
    if (kept.empty()) throw Error("no users survive filtering");
    return NameIndex(std::move(kept));
}

NameIndex select_context_users(const std::vector<Bucket>& buckets, const FilterConfig& cfg) {
    if (cfg.n_context_users < 1) throw ConfigError("n_context_users must be >= 1");
    std::map<std::string, std::int64_t> counts;
    for (const auto& b : buckets) {
        for (const auto& p : b) ++counts[p.user_id];
    }
    const auto n = static_cast<std::size_t>(cfg.n_context_users);
    if (n > counts.size()) {
        throw ConfigError("n_context_users (" + std::to_string(n) + ") exceeds the " +
                          std::to_string(counts.size()) + " distinct users in the corpus");
    }
    std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> chosen;
    chosen.reserve(n);
    for (std::size_t i = 0; i < n; ++i) chosen.push_back(ranked[i].first);
    std::sort(chosen.begin(), chosen.end());
    return NameIndex(std::move(chosen));
}

NameIndex build_vocab(const std::vector<Bucket>& buckets, const NameIndex& roster,
                      const FilterConfig& cfg) {
    if (cfg.min_word_users < 1) throw ConfigError("min_word_users must be >= 1");
    std::map<std::string, std::set<std::size_t>> users_of;
    for (const auto& b : buckets) {
        for (const auto& p : b) {
            auto u = roster.find(p.user_id);
            if (!u) continue;
            for (const auto& tok : p.tokens) users_of[tok].insert(*u);
        }
    }
    std::vector<std::string> words;
    for (const auto& [w, us] : users_of) {
        if (us.size() > static_cast<std::size_t>(cfg.min_word_users)) words.push_back(w);
    }
    if (words.empty()) throw Error("vocabulary is empty after filtering");
    return NameIndex(std::move(words));
}

BackgroundModel build_background(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open background corpus " + path.string());
    char first = 0;
    while (in.get(first) && std::isspace(static_cast<unsigned char>(first))) {
    }
    std::vector<std::string> tokens;
    if (!in) return BackgroundModel::from_tokens(tokens);  // throws: empty
    in.unget();
    if (first == '{') {
        for (auto& p : parse_corpus(in).posts) {
            for (auto& t : p.tokens) tokens.push_back(std::move(t));
        }
    } else {
        std::string tok;
        while (in >> tok) tokens.push_back(lowercase(std::move(tok)));
    }
    return BackgroundModel::from_tokens(tokens);
}

Bucket pool_buckets(const std::vector<Bucket>& buckets) {
    Bucket all;
    for (const auto& b : buckets) all.insert(all.end(), b.begin(), b.end());
    return all;
}

}  // namespace cerberus
