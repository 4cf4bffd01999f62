#include <doctest.h>

#include <cmath>

#include "cpretrieve/error.hpp"
#include "cpretrieve/retrieval_index.hpp"
#include "properties.hpp"
#include "test_support.hpp"

using namespace cpretrieve;

namespace {

EmbeddingVector vec(std::vector<double> v) { return EmbeddingVector(std::move(v)); }

RetrievalIndex small_index() {
    return RetrievalIndex(IndexConfig(), "p", 2,
                          {{"b", vec({1, 0})}, {"a", vec({0, 1})}, {"c", vec({1, 0})},
                           {"d", vec({std::sqrt(0.5), std::sqrt(0.5)})}});
}

}  // namespace

TEST_CASE("cosine of simple vectors") {
    CHECK(cosine_similarity(vec({1, 0}), vec({0, 1})) == 0.0);
    CHECK(cosine_similarity(vec({1, 0}), vec({-2, 0})) == -1.0);
    CHECK(cosine_similarity(vec({1, 1}), vec({3, 3})) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cosine_similarity(vec({1, 2, 2}), vec({2, 0, 0})) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(cosine_similarity(vec({1, 0}), vec({1, 0, 0})), Error);
    CHECK_THROWS_AS(cosine_similarity(vec({1, 0}), vec({0, 0})), Error);
}

TEST_CASE("cosine properties hold on random pairs") {
    const auto bad = testing::cosine_property_violations(7, 200, {2, 8, 768});
    CHECK(bad.empty());
}

TEST_CASE("top-k ordering and tie-break") {
    const auto index = small_index();
    CHECK(index.items().front().entry_id == "a");

    const auto top = query_top_k(index, vec({2, 0}), 3);
    REQUIRE(top.size() == 3);
    CHECK(top[0] == RankedResult{"b", 1.0, 1});
    CHECK(top[1] == RankedResult{"c", 1.0, 2});
    CHECK(top[2].entry_id == "d");
    CHECK(top[2].score == doctest::Approx(std::sqrt(0.5)));

    CHECK(query_top_k(index, vec({0, 1}), 10).size() == 4);
    CHECK(query_top_k(index, vec({0, 1}), 1).front().entry_id == "a");
    CHECK_THROWS_AS(query_top_k(index, vec({0, 1}), 0), Error);
    CHECK_THROWS_AS(query_top_k(index, vec({0, 1, 0}), 1), Error);
}

TEST_CASE("rank_of agrees with the ordering") {
    const auto index = small_index();
    CHECK(rank_of(index, vec({1, 0}), "b") == 1u);
    CHECK(rank_of(index, vec({1, 0}), "c") == 2u);
    CHECK(rank_of(index, vec({1, 0}), "a") == 4u);
    CHECK_FALSE(rank_of(index, vec({1, 0}), "zzz").has_value());
}

TEST_CASE("top-k matches a brute-force oracle") {
    const auto stats = testing::oracle_equivalence(11, 30, 60, 16);
    CHECK(stats.violations.empty());
    CHECK(stats.tied_queries > 0);
}

TEST_CASE("index construction checks") {
    CHECK_THROWS_AS(RetrievalIndex(IndexConfig(), "p", 2, {{"a", vec({1, 1})}}), Error);
    CHECK_THROWS_AS(RetrievalIndex(IndexConfig(), "p", 3, {{"a", vec({1, 0})}}), Error);
    CHECK_THROWS_AS(RetrievalIndex(IndexConfig(), "p", 2, {{"a", vec({1, 0})}, {"a", vec({0, 1})}}), Error);

    const auto index = small_index();
    const auto grown = index.with_item({"aa", vec({0, -1})});
    CHECK(grown.size() == 5);
    CHECK(grown.items()[1].entry_id == "aa");
    CHECK(index.size() == 4);
    CHECK(grown.find("aa") != nullptr);
    CHECK(index.find("aa") == nullptr);
}

TEST_CASE("self retrieval on the fixture corpus") {
    const auto corpus = testing::fixture_corpus();
    FallbackEmbedder embedder;
    for (const auto& config : IndexConfig::all()) {
        const auto built = build_index(corpus, config, embedder);
        REQUIRE(built.failures.empty());
        CHECK(built.index.provider_id() == "fallback-fnv1a");
        CHECK(built.index.size() == corpus.size());
        for (const auto& entry : corpus.entries()) {
            const auto q = embed(build_embedding_input(entry, config), embedder);
            CHECK(rank_of(built.index, q, entry.id) == 1u);
        }
    }
}

TEST_CASE("save and load round-trip") {
    testing::TempDir dir;
    FallbackEmbedder embedder(32);
    const auto built = build_index(testing::fixture_corpus(), IndexConfig::parse("SC+D1&3"), embedder);
    save_index(built.index, dir / "index.json");
    const auto loaded = load_index(dir / "index.json");
    CHECK(loaded == built.index);
    CHECK(serialize_index(loaded) == read_file(dir / "index.json"));
    CHECK(loaded.config().name() == "SC+D1&3");
}

TEST_CASE("index file errors") {
    testing::TempDir dir;
    auto j = index_to_json(small_index());

    auto truncated = j;
    truncated["items"][2]["vector"].erase(1);
    try {
        index_from_json(truncated);
        FAIL("expected failure");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DimensionMismatch);
        CHECK(std::string(e.what()).find("'c'") != std::string::npos);
    }

    auto future = j;
    future["schema_version"] = 2;
    CHECK_THROWS_AS(index_from_json(future), Error);

    CHECK_THROWS_AS(load_index(dir / "missing.json"), Error);
}

TEST_CASE("provider mismatch is reported") {
    testing::quiet_logs();
    const auto index = small_index();
    FallbackEmbedder other(2);
    const auto warning = check_provider(index, other);
    REQUIRE(warning.has_value());
    CHECK(warning->find("fallback-fnv1a") != std::string::npos);

    const RetrievalIndex same(IndexConfig(), "fallback-fnv1a", 2, {{"a", vec({1, 0})}});
    CHECK_FALSE(check_provider(same, other).has_value());
}
