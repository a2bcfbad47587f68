#include "cerberus/syndata.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace cerberus;

namespace {

std::map<std::string, int> home_at(const SynthCorpus& c, int t) {
    std::map<std::string, int> h;
    for (std::size_t u = 0; u < c.users.size(); ++u) h[c.users[u]] = c.membership[u][static_cast<std::size_t>(t)];
    return h;
}

int window_of(const Post& p, const SynthConfig& s) {
    return static_cast<int>((p.timestamp - s.start) / s.window_length);
}

}  // namespace

TEST_CASE("generation is deterministic given the seed") {
    SynthConfig s;
    s.seed = 3;
    const auto a = generate(s), b = generate(s);
    CHECK(a.posts == b.posts);
    CHECK(a.background == b.background);
    s.seed = 4;
    CHECK_FALSE(generate(s).posts == a.posts);
}

TEST_CASE("foreign-thread rate matches the crossover probability") {
    SynthConfig s;
    s.crossover = 0.3;
    std::size_t foreign = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        s.seed = seed;
        const auto c = generate(s);
        for (const auto& p : c.posts) {
            const int home = c.membership[static_cast<std::size_t>(std::stoi(p.user_id.substr(4)))]
                                         [static_cast<std::size_t>(window_of(p, s))];
            foreign += p.community != c.communities[static_cast<std::size_t>(home)] ? 1 : 0;
            ++total;
        }
    }
    const double rate = static_cast<double>(foreign) / static_cast<double>(total);
    const double sigma = std::sqrt(0.3 * 0.7 / static_cast<double>(total));
    CAPTURE(rate);
    CHECK(std::abs(rate - 0.3) <= 3 * sigma);
}

TEST_CASE("one community means one label everywhere") {
    SynthConfig s;
    s.G = 1;
    s.seed = 2;
    const auto c = generate(s);
    std::set<std::string> seen;
    for (const auto& [key, l] : c.true_labels(LabelLevel::community).labels) seen.insert(l.begin(), l.end());
    CHECK(seen == std::set<std::string>{"c0"});
}

TEST_CASE("word adoption raises the adopting community's word frequency") {
    SynthConfig s;
    s.seed = 8;
    DriftEvent ev;
    ev.kind = "word_adoption";
    ev.t = 3;
    ev.community = 0;
    ev.rate = 0.05;
    s.drift_events = {ev};
    const auto c = generate(s);
    REQUIRE(c.drift_log.size() == 1);
    CHECK(c.drift_log[0]["word"] == "event0");
    std::vector<double> hits(6, 0.0), toks(6, 0.0);
    for (const auto& p : c.posts) {
        const int t = window_of(p, s);
        if (home_at(c, t).at(p.user_id) != 0) continue;
        for (const auto& w : p.tokens) hits[static_cast<std::size_t>(t)] += w == "event0" ? 1 : 0;
        toks[static_cast<std::size_t>(t)] += static_cast<double>(p.tokens.size());
    }
    double before = 0.0;
    for (int t = 0; t < 3; ++t) before = std::max(before, hits[static_cast<std::size_t>(t)] / toks[static_cast<std::size_t>(t)]);
    for (int t = 3; t < 6; ++t) CHECK(hits[static_cast<std::size_t>(t)] / toks[static_cast<std::size_t>(t)] > before);
}

TEST_CASE("a splinter uses lexicon words at the configured multiple") {
    SynthConfig s;
    s.seed = 5;
    s.lexicon_rate = 0.02;
    s.posts_per_thread = 20;
    DriftEvent ev;
    ev.kind = "splinter";
    ev.t = 2;
    ev.community = 1;
    ev.fraction = 0.5;
    ev.factor = 5.0;
    s.drift_events = {ev};
    const auto c = generate(s);
    REQUIRE(c.communities.back() == "c1s");
    const std::set<std::string> lex(c.lexicon.begin(), c.lexicon.end());
    double lex_child = 0, tok_child = 0, lex_parent = 0, tok_parent = 0;
    for (const auto& p : c.posts) {
        const int t = window_of(p, s);
        if (t < 2) continue;
        const int home = home_at(c, t).at(p.user_id);
        double n = 0;
        for (const auto& w : p.tokens) n += lex.count(w) ? 1 : 0;
        if (c.communities[static_cast<std::size_t>(home)] == "c1s") {
            lex_child += n;
            tok_child += static_cast<double>(p.tokens.size());
        } else if (home == 1) {
            lex_parent += n;
            tok_parent += static_cast<double>(p.tokens.size());
        }
    }
    const double ratio = (lex_child / tok_child) / (lex_parent / tok_parent);
    CAPTURE(ratio);
    CHECK(ratio > 4.0);
    CHECK(ratio < 6.25);
}

TEST_CASE("user migration moves the logged users") {
    SynthConfig s;
    s.seed = 6;
    DriftEvent ev;
    ev.kind = "user_migration";
    ev.t = 2;
    ev.community = 0;
    ev.target = 2;
    ev.fraction = 0.2;
    s.drift_events = {ev};
    const auto c = generate(s);
    const auto& moved = c.drift_log[0]["users"];
    CHECK(moved.size() == 6);
    for (const auto& u : moved) {
        const auto i = static_cast<std::size_t>(std::stoi(u.get<std::string>().substr(4)));
        CHECK(c.membership[i][1] == 0);
        CHECK(c.membership[i][2] == 2);
        CHECK(c.membership[i][5] == 2);
    }
}

TEST_CASE("invalid synth configurations are rejected") {
    auto bad = [](auto edit) {
        SynthConfig s;
        edit(s);
        return s;
    };
    CHECK_THROWS_AS(generate(bad([](SynthConfig& s) { s.G = 0; })), ConfigError);
    CHECK_THROWS_AS(generate(bad([](SynthConfig& s) { s.crossover = 1.5; })), ConfigError);
    CHECK_THROWS_AS(generate(bad([](SynthConfig& s) { s.threads_per_window = 0; })), ConfigError);
    CHECK_THROWS_AS(generate(bad([](SynthConfig& s) { s.signature_boost = 0.5; })), ConfigError);
    CHECK_THROWS_AS(generate(bad([](SynthConfig& s) {
                        s.drift_events = {DriftEvent{"meteor", 1, 0, 0, 0.5, 0.1, 10, ""}};
                    })),
                    ConfigError);
    CHECK_THROWS_AS(generate(bad([](SynthConfig& s) {
                        s.pair_crossover = {{0, 1, 0.7}, {0, 2, 0.5}};
                    })),
                    ConfigError);
}

TEST_CASE("synth config JSON round-trip") {
    SynthConfig s;
    s.G = 4;
    s.pair_crossover = {{0, 1, 0.2}};
    s.drift_events = {DriftEvent{"splinter", 2, 1, 0, 0.3, 0.1, 4.0, ""}};
    const nlohmann::json j = s;
    const SynthConfig r = j.get<SynthConfig>();
    CHECK(nlohmann::json(r) == j);
    CHECK(r.G == 4);
}
