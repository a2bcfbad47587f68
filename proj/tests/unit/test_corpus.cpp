#include "cerberus/corpus.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <sstream>

using namespace cerberus;
using testutil::post;

TEST_CASE("parse_corpus reads posts and lowercases tokens") {
    std::istringstream in(
        R"({"user_id":"a","thread_id":"t1","timestamp":5,"tokens":["Hello","WORLD"]})"
        "\n\n"
        R"({"user_id":"b","thread_id":"t2","timestamp":7,"community":"c0"})"
        "\n");
    const CorpusStore s = parse_corpus(in);
    REQUIRE(s.posts.size() == 2);
    CHECK(s.posts[0].tokens == std::vector<std::string>{"hello", "world"});
    CHECK(s.posts[1].community == "c0");
    CHECK(s.posts[1].tokens.empty());
}

TEST_CASE("parse_corpus rejects malformed records with the line number") {
    auto fails = [](const std::string& text, const std::string& needle) {
        std::istringstream in(text);
        try {
            parse_corpus(in);
        } catch (const Error& e) {
            return std::string(e.what()).find(needle) != std::string::npos;
        }
        return false;
    };
    CHECK(fails(R"({"thread_id":"t","timestamp":1})", "user_id"));
    CHECK(fails("{\"user_id\":\"a\",\"thread_id\":\"t\",\"timestamp\":1}\n{bad", "line 2"));
    CHECK(fails(R"({"user_id":"a","thread_id":"t","timestamp":-1})", "negative"));
    CHECK(fails(R"({"user_id":"a","thread_id":"t","timestamp":"x"})", "timestamp"));
    CHECK(fails(R"({"user_id":"a","thread_id":"t","timestamp":1,"tokens":[3]})", "token"));
}

TEST_CASE("write_corpus round-trips") {
    std::vector<Post> posts{post("a", "t", 1, {"x", "y"}), post("b", "u", 9)};
    posts[1].community = "c1";
    posts[1].category = "k";
    std::stringstream io;
    write_corpus(io, posts);
    CHECK(parse_corpus(io).posts == posts);
}

TEST_CASE("partition_timesteps uses half-open windows") {
    const CorpusStore s{{post("a", "t", 0), post("a", "t", 9), post("b", "t", 10), post("b", "t", 29)}};
    const auto b = partition_timesteps(s, {0, 10, 3});
    REQUIRE(b.size() == 3);
    CHECK(b[0].size() == 2);
    CHECK(b[1].size() == 1);
    CHECK(b[2].size() == 1);

    const CorpusStore out{{post("a", "t", 30)}};
    CHECK_THROWS_AS(partition_timesteps(out, {0, 10, 3}), Error);
    CHECK_THROWS_AS(partition_timesteps(s, {0, 0, 3}), ConfigError);
}

TEST_CASE("filter_users, context users and vocabulary thresholds") {
    std::vector<Bucket> b(3);
    b[0] = {post("a", "t", 0, {"x", "y"}), post("b", "t", 0, {"x"}), post("c", "t", 0, {"x"})};
    b[1] = {post("a", "t", 1, {"y"}), post("b", "t", 1, {"x"}), post("b", "u", 1)};
    b[2] = {post("a", "t", 2), post("c", "t", 2, {"z"})};
    FilterConfig f;
    f.min_active_timesteps = 2;
    f.n_context_users = 2;
    f.min_word_users = 1;
    CHECK(filter_users(b, f).names() == std::vector<std::string>{"a", "b", "c"});
    f.min_active_timesteps = 3;
    CHECK(filter_users(b, f).names() == std::vector<std::string>{"a"});

    // a and b have 3 posts each, c has 2
    CHECK(select_context_users(b, f).names() == std::vector<std::string>{"a", "b"});
    f.n_context_users = 4;
    CHECK_THROWS_AS(select_context_users(b, f), ConfigError);

    // x: a, b, c; y: a; z: c. Strictly more than min_word_users distinct users.
    const NameIndex roster({"a", "b", "c"});
    f.min_word_users = 1;
    CHECK(build_vocab(b, roster, f).names() == std::vector<std::string>{"x"});
    f.min_word_users = 3;
    CHECK_THROWS_AS(build_vocab(b, roster, f), Error);
}

TEST_CASE("background model probabilities and oov floor") {
    const auto bg = BackgroundModel::from_tokens({"a", "a", "b", "c"});
    CHECK(bg.probability("a") == doctest::Approx(0.5));
    CHECK(bg.probability("b") == doctest::Approx(0.25));
    CHECK(bg.probability("zzz") == doctest::Approx(1.0 / 5.0));
    CHECK(bg.total_tokens() == 4);
    CHECK_THROWS_AS(BackgroundModel::from_tokens({}), Error);
    CHECK_THROWS_AS(BackgroundModel::from_counts({{"a", 0}}), Error);
}

TEST_CASE("NameIndex lookups") {
    const NameIndex idx({"b", "a"});
    CHECK(idx.at("a") == 1);
    CHECK_FALSE(idx.find("c").has_value());
    CHECK_THROWS_AS(idx.at("c"), Error);
    CHECK_THROWS_AS(NameIndex({"a", "a"}), Error);
}
