#include "cerberus/syndata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace cerberus {
namespace {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

struct Community {
    std::string name;
    std::string category;
    int sig_group = 0;
    double lex_rate = 0.0;
    int threads = 0;
    int born = 0;
};

std::string padded(const char* prefix, int i, int width) {
    std::string s = std::to_string(i);
    if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
    return prefix + s;
}

double pair_rate(const SynthConfig& cfg, int a, int b, std::size_t n_alive) {
    for (const auto& p : cfg.pair_crossover) {
        if ((p.a == a && p.b == b) || (p.a == b && p.b == a)) return p.rate;
    }
    return n_alive > 1 ? cfg.crossover / static_cast<double>(n_alive - 1) : 0.0;
}

}  // namespace

void SynthConfig::validate() const {
    auto bad = [](const std::string& m) { throw ConfigError("synth: " + m); };
    if (G < 1) bad("G must be >= 1");
    if (users_per_community < 1) bad("users_per_community must be >= 1");
    if (T < 1) bad("T must be >= 1");
    if (future_windows < 0) bad("future_windows must be >= 0");
    if (threads_per_window < 1) bad("threads_per_window must be >= 1");
    if (posts_per_thread < 1) bad("posts_per_thread must be >= 1");
    if (tokens_per_post < 1) bad("tokens_per_post must be >= 1");
    if (!(crossover >= 0 && crossover <= 1)) bad("crossover must lie in [0, 1]");
    if (shared_words < 0 || signature_words < 0 || lexicon_words < 0) {
        bad("word counts must be >= 0");
    }
    if (shared_words + signature_words < 1) bad("the vocabulary is empty");
    if (!(signature_boost >= 1)) bad("signature_boost must be >= 1");
    if (!(lexicon_rate >= 0 && lexicon_rate < 1)) bad("lexicon_rate must lie in [0, 1)");
    if (lexicon_rate > 0 && lexicon_words < 1) bad("lexicon_rate > 0 needs lexicon_words >= 1");
    if (!(activity > 0 && activity <= 1)) bad("activity must lie in (0, 1]");
    if (!categories.empty() && static_cast<int>(categories.size()) != G) {
        bad("categories must list one label per community");
    }
    if (window_length <= 0) bad("window_length must be > 0");
    if (start < 0) bad("start must be >= 0");
    if (background_repeats < 1) bad("background_repeats must be >= 1");
    int n_comm = G;
    for (const auto& e : drift_events) {
        if (e.kind == "splinter") ++n_comm;
    }
    for (const auto& p : pair_crossover) {
        if (p.a < 0 || p.b < 0 || p.a >= n_comm || p.b >= n_comm || p.a == p.b) {
            bad("pair_crossover names an invalid community pair");
        }
        if (!(p.rate >= 0 && p.rate <= 1)) bad("pair_crossover rate must lie in [0, 1]");
    }
    for (const auto& grp : shared_signatures) {
        for (int c : grp) {
            if (c < 0 || c >= G) bad("shared_signatures names an unknown community");
        }
    }
    int created = G;
    for (const auto& e : drift_events) {
        if (e.t < 0 || e.t >= T + future_windows) bad("drift event window out of range");
        if (e.community < 0 || e.community >= created) bad("drift event names an unknown community");
        if (e.kind == "user_migration") {
            if (e.target < 0 || e.target >= created || e.target == e.community) {
                bad("user_migration needs a distinct existing target community");
            }
            if (!(e.fraction > 0 && e.fraction <= 1)) bad("migration fraction must lie in (0, 1]");
        } else if (e.kind == "word_adoption") {
            if (!(e.rate > 0 && e.rate < 1)) bad("word_adoption rate must lie in (0, 1)");
        } else if (e.kind == "splinter") {
            if (!(e.fraction > 0 && e.fraction < 1)) bad("splinter fraction must lie in (0, 1)");
            if (!(e.factor >= 1)) bad("splinter factor must be >= 1");
            ++created;
        } else {
            bad("unknown drift event kind '" + e.kind +
                "' (valid: user_migration, word_adoption, splinter)");
        }
    }
}

void to_json(json& j, const SynthConfig& c) {
    json events = json::array();
    for (const auto& e : c.drift_events) {
        events.push_back({{"kind", e.kind},
                          {"t", e.t},
                          {"community", e.community},
                          {"target", e.target},
                          {"fraction", e.fraction},
                          {"rate", e.rate},
                          {"factor", e.factor},
                          {"word", e.word}});
    }
    json pairs = json::array();
    for (const auto& p : c.pair_crossover) pairs.push_back({{"a", p.a}, {"b", p.b}, {"rate", p.rate}});
    j = json{{"G", c.G},
             {"users_per_community", c.users_per_community},
             {"T", c.T},
             {"future_windows", c.future_windows},
             {"threads_per_window", c.threads_per_window},
             {"posts_per_thread", c.posts_per_thread},
             {"tokens_per_post", c.tokens_per_post},
             {"crossover", c.crossover},
             {"pair_crossover", pairs},
             {"shared_words", c.shared_words},
             {"signature_words", c.signature_words},
             {"signature_boost", c.signature_boost},
             {"shared_signatures", c.shared_signatures},
             {"lexicon_words", c.lexicon_words},
             {"lexicon_rate", c.lexicon_rate},
             {"activity", c.activity},
             {"categories", c.categories},
             {"drift_events", events},
             {"start", c.start},
             {"window_length", c.window_length},
             {"background_repeats", c.background_repeats},
             {"seed", c.seed}};
}

void from_json(const json& j, SynthConfig& c) {
    SynthConfig d;
    c.G = j.value("G", d.G);
    c.users_per_community = j.value("users_per_community", d.users_per_community);
    c.T = j.value("T", d.T);
    c.future_windows = j.value("future_windows", d.future_windows);
    c.threads_per_window = j.value("threads_per_window", d.threads_per_window);
    c.posts_per_thread = j.value("posts_per_thread", d.posts_per_thread);
    c.tokens_per_post = j.value("tokens_per_post", d.tokens_per_post);
    c.crossover = j.value("crossover", d.crossover);
    c.pair_crossover.clear();
    if (auto it = j.find("pair_crossover"); it != j.end()) {
        for (const auto& p : *it) {
            c.pair_crossover.push_back(
                {p.at("a").get<int>(), p.at("b").get<int>(), p.at("rate").get<double>()});
        }
    }
    c.shared_words = j.value("shared_words", d.shared_words);
    c.signature_words = j.value("signature_words", d.signature_words);
    c.signature_boost = j.value("signature_boost", d.signature_boost);
    c.shared_signatures = j.value("shared_signatures", d.shared_signatures);
    c.lexicon_words = j.value("lexicon_words", d.lexicon_words);
    c.lexicon_rate = j.value("lexicon_rate", d.lexicon_rate);
    c.activity = j.value("activity", d.activity);
    c.categories = j.value("categories", d.categories);
    c.drift_events.clear();
    if (auto it = j.find("drift_events"); it != j.end()) {
        for (const auto& e : *it) {
            DriftEvent ev;
            ev.kind = e.at("kind").get<std::string>();
            ev.t = e.value("t", ev.t);
            ev.community = e.value("community", ev.community);
            ev.target = e.value("target", ev.target);
            ev.fraction = e.value("fraction", ev.fraction);
            ev.rate = e.value("rate", ev.rate);
            ev.factor = e.value("factor", ev.factor);
            ev.word = e.value("word", ev.word);
            c.drift_events.push_back(ev);
        }
    }
    c.start = j.value("start", d.start);
    c.window_length = j.value("window_length", d.window_length);
    c.background_repeats = j.value("background_repeats", d.background_repeats);
    c.seed = j.value("seed", d.seed);
}

TimeWindowing SynthCorpus::windowing(const SynthConfig& cfg) const {
    return {cfg.start, cfg.window_length, cfg.T};
}

ojson SynthCorpus::ground_truth(const SynthConfig& cfg) const {
    ojson labels = ojson::object();
    for (std::size_t u = 0; u < users.size(); ++u) {
        std::vector<std::string> per_t;
        for (int c : membership[u]) per_t.push_back(communities[static_cast<std::size_t>(c)]);
        labels[users[u]] = per_t;
    }
    ojson gt;
    gt["communities"] = communities;
    gt["labels"] = labels;
    gt["drift_log"] = drift_log;
    gt["lexicon"] = lexicon;
    gt["config"] = ojson::parse(json(cfg).dump());
    return gt;
}

LabelSet SynthCorpus::true_labels(LabelLevel level) const {
    LabelSet out;
    out.level = level;
    const auto& names = level == LabelLevel::community ? communities : categories;
    for (std::size_t u = 0; u < users.size(); ++u) {
        for (std::size_t t = 0; t < membership[u].size(); ++t) {
            out.labels[{users[u], static_cast<int>(t)}] = {names[static_cast<std::size_t>(membership[u][t])]};
        }
    }
    return out;
}

SynthCorpus generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int W = cfg.T + cfg.future_windows;
    SynthCorpus out;

    // signature groups
    std::vector<int> group(static_cast<std::size_t>(cfg.G));
    std::iota(group.begin(), group.end(), 0);
    for (const auto& grp : cfg.shared_signatures) {
        if (grp.empty()) continue;
        const int g = *std::min_element(grp.begin(), grp.end());
        for (int c : grp) group[static_cast<std::size_t>(c)] = g;
    }
    std::vector<Community> comms;
    for (int c = 0; c < cfg.G; ++c) {
        const std::string name = "c" + std::to_string(c);
        comms.push_back({name,
                         cfg.categories.empty() ? name : cfg.categories[static_cast<std::size_t>(c)],
                         group[static_cast<std::size_t>(c)], cfg.lexicon_rate,
                         cfg.threads_per_window, 0});
    }

    // vocabulary
    std::vector<std::string> shared;
    for (int i = 0; i < cfg.shared_words; ++i) shared.push_back(padded("w", i, 3));
    std::vector<std::string> event_words(cfg.drift_events.size());
    for (std::size_t e = 0; e < cfg.drift_events.size(); ++e) {
        if (cfg.drift_events[e].kind != "word_adoption") continue;
        event_words[e] = cfg.drift_events[e].word.empty() ? "event" + std::to_string(e)
                                                          : cfg.drift_events[e].word;
        if (std::find(shared.begin(), shared.end(), event_words[e]) == shared.end()) {
            shared.push_back(event_words[e]);
        }
    }
    std::set<int> groups(group.begin(), group.end());
    std::map<int, std::vector<std::string>> sig_words;
    for (int g : groups) {
        for (int i = 0; i < cfg.signature_words; ++i) {
            sig_words[g].push_back("s" + std::to_string(g) + "_" + padded("", i, 2));
        }
    }
    for (int i = 0; i < cfg.lexicon_words; ++i) out.lexicon.push_back(padded("lex", i, 2));

    // users and membership
    const int n_users = cfg.G * cfg.users_per_community;
    for (int u = 0; u < n_users; ++u) out.users.push_back(padded("user", u, 4));
    out.membership.assign(static_cast<std::size_t>(n_users), std::vector<int>(static_cast<std::size_t>(W)));
    for (int u = 0; u < n_users; ++u) {
        std::fill(out.membership[static_cast<std::size_t>(u)].begin(),
                  out.membership[static_cast<std::size_t>(u)].end(), u / cfg.users_per_community);
    }
    auto members_at = [&](int c, int t) {
        std::vector<int> m;
        for (int u = 0; u < n_users; ++u) {
            if (out.membership[static_cast<std::size_t>(u)][static_cast<std::size_t>(t)] == c) m.push_back(u);
        }
        return m;
    };
    auto pick = [&](std::vector<int> pool, double fraction) {
        const auto n = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(pool.size()))));
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(std::min(n, pool.size()));
        std::sort(pool.begin(), pool.end());
        return pool;
    };
    auto move_from = [&](const std::vector<int>& us, int t, int c) {
        for (int u : us) {
            for (int s = t; s < W; ++s) out.membership[static_cast<std::size_t>(u)][static_cast<std::size_t>(s)] = c;
        }
    };
    auto names_of = [&](const std::vector<int>& us) {
        std::vector<std::string> n;
        for (int u : us) n.push_back(out.users[static_cast<std::size_t>(u)]);
        return n;
    };
    for (std::size_t e = 0; e < cfg.drift_events.size(); ++e) {
        const DriftEvent& ev = cfg.drift_events[e];
        ojson log;
        log["kind"] = ev.kind;
        log["t"] = ev.t;
        log["community"] = comms[static_cast<std::size_t>(ev.community)].name;
        if (ev.kind == "user_migration") {
            auto us = pick(members_at(ev.community, ev.t), ev.fraction);
            move_from(us, ev.t, ev.target);
            log["target"] = comms[static_cast<std::size_t>(ev.target)].name;
            log["users"] = names_of(us);
        } else if (ev.kind == "word_adoption") {
            log["word"] = event_words[e];
            log["rate"] = ev.rate;
        } else {
            const Community& parent = comms[static_cast<std::size_t>(ev.community)];
            Community child{parent.name + "s", parent.category, parent.sig_group,
                            parent.lex_rate * ev.factor,
                            std::max(1, static_cast<int>(std::lround(parent.threads * ev.fraction))),
                            ev.t};
            if (!(child.lex_rate < 1)) throw ConfigError("synth: splinter lexicon rate reaches 1");
            auto us = pick(members_at(ev.community, ev.t), ev.fraction);
            comms.push_back(child);
            move_from(us, ev.t, static_cast<int>(comms.size()) - 1);
            log["splinter"] = child.name;
            log["factor"] = ev.factor;
            log["users"] = names_of(us);
        }
        out.drift_log.push_back(log);
    }
    for (const auto& c : comms) {
        out.communities.push_back(c.name);
        out.categories.push_back(c.category);
    }

    // per-(community, window) token distributions
    auto token_dist = [&](int c) {
        std::vector<std::string> words = shared;
        std::vector<double> w(shared.size(), 1.0);
        for (const auto& [g, ws] : sig_words) {
            const double weight = g == comms[static_cast<std::size_t>(c)].sig_group ? cfg.signature_boost : 1.0;
            for (const auto& s : ws) {
                words.push_back(s);
                w.push_back(weight);
            }
        }
        return std::make_pair(words, std::discrete_distribution<std::size_t>(w.begin(), w.end()));
    };

    for (int t = 0; t < W; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        std::vector<int> alive;
        for (int c = 0; c < static_cast<int>(comms.size()); ++c) {
            if (comms[static_cast<std::size_t>(c)].born <= t) alive.push_back(c);
        }
        for (int c : alive) {
            double leave = 0.0;
            for (int o : alive) {
                if (o != c) leave += pair_rate(cfg, c, o, alive.size());
            }
            if (leave > 1 + 1e-12) {
                throw ConfigError("synth: crossover rates of " + comms[static_cast<std::size_t>(c)].name +
                                  " sum above 1");
            }
        }
        std::vector<std::size_t> size(comms.size(), 0);
        for (int u = 0; u < n_users; ++u) ++size[static_cast<std::size_t>(out.membership[static_cast<std::size_t>(u)][ts])];

        for (int u = 0; u < n_users; ++u) {
            const int c = out.membership[static_cast<std::size_t>(u)][ts];
            const Community& me = comms[static_cast<std::size_t>(c)];
            if (unif(rng) >= cfg.activity) continue;
            const auto n_posts = std::max<long>(
                1, std::lround(static_cast<double>(me.threads) * cfg.posts_per_thread /
                               static_cast<double>(size[static_cast<std::size_t>(c)])));
            double event_rate = 0.0;
            std::string event_word;
            for (std::size_t e = 0; e < cfg.drift_events.size(); ++e) {
                const auto& ev = cfg.drift_events[e];
                if (ev.kind == "word_adoption" && ev.community == c && t >= ev.t) {
                    event_rate = ev.rate;
                    event_word = event_words[e];
                }
            }
            auto [words, dist] = token_dist(c);
            for (long p = 0; p < n_posts; ++p) {
                int dest = c;
                double r = unif(rng);
                for (int o : alive) {
                    if (o == c) continue;
                    r -= pair_rate(cfg, c, o, alive.size());
                    if (r < 0) {
                        dest = o;
                        break;
                    }
                }
                const Community& host = comms[static_cast<std::size_t>(dest)];
                std::uniform_int_distribution<int> thread(0, host.threads - 1);
                Post post;
                post.user_id = out.users[static_cast<std::size_t>(u)];
                post.thread_id = host.name + "-t" + std::to_string(t) + "-" + std::to_string(thread(rng));
                std::uniform_int_distribution<std::int64_t> offset(0, cfg.window_length - 1);
                post.timestamp = cfg.start + static_cast<std::int64_t>(t) * cfg.window_length + offset(rng);
                post.community = host.name;
                post.category = host.category;
                for (int k = 0; k < cfg.tokens_per_post; ++k) {
                    const double x = unif(rng);
                    if (x < event_rate) {
                        post.tokens.push_back(event_word);
                    } else if (x < event_rate + me.lex_rate) {
                        std::uniform_int_distribution<std::size_t> lw(0, out.lexicon.size() - 1);
                        post.tokens.push_back(out.lexicon[lw(rng)]);
                    } else {
                        post.tokens.push_back(words[dist(rng)]);
                    }
                }
                (t < cfg.T ? out.posts : out.future_posts).push_back(std::move(post));
            }
        }
    }

    std::vector<std::string> vocab = shared;
    for (const auto& [g, ws] : sig_words) vocab.insert(vocab.end(), ws.begin(), ws.end());
    vocab.insert(vocab.end(), out.lexicon.begin(), out.lexicon.end());
    for (const auto& w : vocab) {
        for (int r = 0; r < cfg.background_repeats; ++r) out.background.push_back(w);
    }
    return out;
}

void write_synth(const std::filesystem::path& dir, const SynthCorpus& s, const SynthConfig& cfg) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream os(dir / name, std::ios::binary);
        if (!os) throw Error("cannot write " + (dir / name).string());
        return os;
    };
    {
        auto os = open("corpus.jsonl");
        write_corpus(os, s.posts);
    }
    if (cfg.future_windows > 0) {
        auto os = open("future.jsonl");
        write_corpus(os, s.future_posts);
    }
    {
        auto os = open("background.txt");
        for (std::size_t i = 0; i < s.background.size(); ++i) {
            os << s.background[i] << ((i + 1) % static_cast<std::size_t>(cfg.background_repeats) ? ' ' : '\n');
        }
    }
    {
        auto os = open("lexicon.txt");
        os << "# planted lexicon\n";
        for (const auto& w : s.lexicon) os << w << '\n';
    }
    {
        auto os = open("ground_truth.json");
        os << s.ground_truth(cfg).dump(2) << '\n';
    }
}

}  // namespace cerberus
