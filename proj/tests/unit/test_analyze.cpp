#include "cerberus/analyze.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <fstream>

using namespace cerberus;

namespace {

EmbeddingSet word_model() {
    EmbeddingSet m;
    m.variant = make_variant("cerberus");
    m.dims = {3, 1, 1, 3};
    m.k = 2;
    for (int t = 0; t < 3; ++t) {
        Matrix W(3, 2);
        W << 1.0 * t, 0, 0, 1, 2, 2;
        m.W.push_back(W);
    }
    return m;
}

}  // namespace

TEST_CASE("word relevance is the centroid dot the word embedding") {
    const auto m = word_model();
    const NameIndex vocab({"a", "b", "c"});
    Vector c(2);
    c << 2, -1;
    const auto s = word_relevance("a", vocab, c, 1, 7, m);
    CHECK(s.values == std::vector<double>{0, 2, 4});
    CHECK(s.cluster_size == 7);
    CHECK(word_relevance("b", vocab, c, 1, 7, m).values == std::vector<double>{-1, -1, -1});
    CHECK_THROWS(word_relevance("zz", vocab, c, 1, 7, m));
}

TEST_CASE("concept score uses the lexicon centroid") {
    const auto m = word_model();
    const NameIndex vocab({"a", "b", "c"});
    ConceptLexicon lex{"x", {"a", "c", "nope"}, {}};
    lex = resolve_lexicon(lex, vocab);
    CHECK(lex.words == std::vector<std::string>{"a", "c"});
    CHECK(lex.missing == std::vector<std::string>{"nope"});
    Vector c(2);
    c << 1, 1;
    // centroid of a and c at t: ((t + 2) / 2, 1)
    const auto s = concept_score(c, 0, 1, lex, vocab, m);
    CHECK(s.values[0] == doctest::Approx(2.0));
    CHECK(s.values[2] == doctest::Approx(3.0));
    const auto avg = concept_score(c, 0, 1, lex, vocab, m, true);
    CHECK(avg.values[0] == doctest::Approx(2.5));
    CHECK(avg.values[2] == doctest::Approx(2.5));
    CHECK(series_mean(s) == doctest::Approx(2.5));
    CHECK_THROWS(resolve_lexicon(ConceptLexicon{"y", {"q"}, {}}, vocab));
}

TEST_CASE("lexicon files skip comments and lowercase") {
    const auto dir = testutil::scratch("lexicon");
    std::ofstream(dir / "l.txt") << "# header\nAlpha\n\n  beta  # trailing\n";
    const auto lex = load_lexicon(dir / "l.txt");
    CHECK(lex.words == std::vector<std::string>{"alpha", "beta"});
    CHECK(lex.name == "l");
    CHECK_THROWS_AS(load_lexicon(dir / "missing.txt"), MissingArtifact);
}

TEST_CASE("PCA finds the dominant direction with a fixed sign") {
    Matrix X(4, 2);
    X << -2, -0.1, -1, 0.1, 1, -0.1, 2, 0.1;
    const Pca p = fit_pca(X, 2);
    CHECK(std::abs(p.components(0, 0)) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(p.components(0, 0) > 0);
    CHECK(p.variance[0] > p.variance[1]);
    const Matrix Y = p.project(X);
    CHECK(Y(3, 0) > Y(0, 0));
}

TEST_CASE("series CSV round-trip and size filter") {
    std::vector<RelevanceSeries> s{{"w", 0, 10, {0.5, -1.25}}, {"w", 1, 2, {3, 4}}};
    const auto dir = testutil::scratch("series");
    export_series(s, dir / "s.csv");
    const auto r = read_series(dir / "s.csv");
    REQUIRE(r.size() == 2);
    CHECK(r[0].values == s[0].values);
    CHECK(r[1].cluster_size == 2);
    CHECK(filter_min_size(r, 5).size() == 1);
}
