#include <doctest.h>

#include "cpretrieve/error.hpp"
#include "cpretrieve/evaluation.hpp"
#include "test_support.hpp"

using namespace cpretrieve;
using testing::make_entry;

namespace {

const std::vector<QuerySource> kRows{QuerySource::D1, QuerySource::D2, QuerySource::D3, QuerySource::External};

QuerySet fixture_queries() { return load_external_queries(testing::fixture_dir() / "queries.json"); }

}  // namespace

TEST_CASE("reciprocal rank arithmetic") {
    CHECK(reciprocal_rank(1) == 1.0);
    CHECK(reciprocal_rank(4) == 0.25);
    CHECK(reciprocal_rank(5) == 0.2);
    CHECK(reciprocal_rank(6) == 0.0);
    CHECK(reciprocal_rank(std::nullopt) == 0.0);
    CHECK(reciprocal_rank(6, 10) == doctest::Approx(1.0 / 6.0));

    CHECK(mean_reciprocal_rank({1u, 2u, 4u}) == doctest::Approx(0.5833333333333334).epsilon(1e-12));
    CHECK(mean_reciprocal_rank({1u, 1u, 1u, 1u}) == 1.0);
    CHECK(mean_reciprocal_rank({1u, 7u}) == 0.5);
    CHECK_THROWS_AS(mean_reciprocal_rank({}), Error);
}

TEST_CASE("leave-one-out admissibility") {
    CHECK(loo_admissible(QuerySource::D1, IndexConfig::parse("SC")));
    CHECK(loo_admissible(QuerySource::D1, IndexConfig::parse("SC+D2&3")));
    CHECK_FALSE(loo_admissible(QuerySource::D1, IndexConfig::parse("SC+D1&3")));
    CHECK_FALSE(loo_admissible(QuerySource::D2, IndexConfig::parse("SC+D1&2&3")));
    CHECK(loo_admissible(QuerySource::D3, IndexConfig::parse("SC+D1&2")));
    for (const auto& config : IndexConfig::all()) CHECK(loo_admissible(QuerySource::External, config));
}

TEST_CASE("rule reproduces the published dash layout") {
    CHECK(published_layout_divergences().empty());
    std::size_t admissible = 0;
    for (auto row : kRows) {
        for (const auto& config : IndexConfig::all()) admissible += loo_admissible(row, config) ? 1 : 0;
    }
    CHECK(admissible == 20);
}

TEST_CASE("external query file") {
    const auto set = fixture_queries();
    CHECK(set.source == QuerySource::External);
    CHECK(set.name == "Human");
    REQUIRE(set.queries.size() == 11);
    CHECK(set.queries[0].truth_id == std::optional<std::string>("knapsack"));
    CHECK_FALSE(set.queries.back().truth_id.has_value());

    CHECK_THROWS_AS(external_queries_from_json(nlohmann::json{{"name", "x"}, {"queries", {{{"text", " "}}}}}),
                    Error);
    CHECK_THROWS_AS(external_queries_from_json(nlohmann::json::array()), Error);
}

TEST_CASE("self retrieval gives MRR 1 in every configuration") {
    const auto corpus = testing::synthetic_corpus(12);
    FallbackEmbedder embedder;
    for (const auto& config : IndexConfig::all()) {
        QuerySet set;
        set.name = "self";
        for (const auto& e : corpus.entries()) set.queries.push_back({build_embedding_input(e, config), e.id});
        const auto cell = run_cell(corpus, set, config, embedder);
        CHECK(cell.status == CellStatus::Ok);
        CHECK(cell.n_queries == 12);
        CHECK(cell.mrr == 1.0);
    }
}

TEST_CASE("generated queries refuse their own level") {
    const auto corpus = testing::fixture_corpus();
    FallbackEmbedder embedder;
    const auto d2 = generated_query_set(corpus, ExpertiseLevel::Intermediate);
    CHECK(d2.source == QuerySource::D2);
    CHECK(d2.queries.size() == 10);
    try {
        run_cell(corpus, d2, IndexConfig::parse("SC+D2&3"), embedder);
        FAIL("expected failure");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::LooViolation);
    }
    CHECK(run_cell(corpus, d2, IndexConfig::parse("SC+D1&3"), embedder).mrr == 1.0);
}

TEST_CASE("queries without a scorable truth are kept aside") {
    const auto corpus = testing::fixture_corpus();
    FallbackEmbedder embedder;
    const auto built = build_index(corpus, IndexConfig(), embedder);
    const auto without_golomb = RetrievalIndex(
        built.index.config(), built.index.provider_id(), built.index.dimension(),
        [&] {
            std::vector<IndexItem> items;
            for (const auto& item : built.index.items()) {
                if (item.entry_id != "golomb") items.push_back(item);
            }
            return items;
        }());
    const auto cell = run_cell(without_golomb, fixture_queries(), embedder, {3, {}});
    CHECK(cell.n_queries == 9);
    REQUIRE(cell.unresolved.size() == 2);
    CHECK(cell.mrr == 1.0);
    for (const auto& u : cell.unresolved) CHECK(u.top_k.size() == 3);
    const auto golomb = std::find_if(cell.unresolved.begin(), cell.unresolved.end(),
                                     [](const UnresolvedQuery& u) { return u.truth_id == "golomb"; });
    REQUIRE(golomb != cell.unresolved.end());
    CHECK(golomb->reason.find("not in the index") != std::string::npos);
}

TEST_CASE("full table on the paraphrase fixture") {
    const auto corpus = testing::fixture_corpus();
    FallbackEmbedder embedder;
    const auto report = run_table(corpus, kRows, fixture_queries(), embedder);
    REQUIRE(report.cells.size() == 20);
    for (const auto& cell : report.cells) {
        INFO(query_source_name(cell.source), " x ", cell.config);
        CHECK(loo_admissible(cell.source, IndexConfig::parse(cell.config)));
        CHECK(cell.status == CellStatus::Ok);
        CHECK(cell.mrr == 1.0);
    }
    CHECK(report.cell(QuerySource::External, "SC")->unresolved.size() == 1);
    CHECK(report.cell(QuerySource::D1, "SC+D1") == nullptr);

    const auto j = report_to_json(report);
    CHECK(j["metadata"]["k"] == 5);
    CHECK(j["metadata"]["provider_id"] == "fallback-fnv1a");
    CHECK(j["metadata"]["excluded_cells"].size() == 12);
    CHECK(j["metadata"]["published_layout_divergences"].empty());
    CHECK(j["metadata"]["reciprocal_rank_convention"].get<std::string>().find("otherwise 0") != std::string::npos);
    CHECK(j["cells"].size() == 20);

    const auto text = render_report_table(report);
    const auto lines = [&] {
        std::vector<std::string> out;
        std::istringstream in(text);
        for (std::string line; std::getline(in, line);) out.push_back(line);
        return out;
    }();
    REQUIRE(lines.size() >= 5);
    CHECK(lines[0].find("SC+D1&2&3") != std::string::npos);
    CHECK(lines[1].rfind("D1", 0) == 0);
    CHECK(lines[4].rfind("Human", 0) == 0);
    std::size_t dashes = 0, ones = 0;
    for (std::size_t i = 1; i <= 4; ++i) {
        std::istringstream in(lines[i]);
        for (std::string tok; in >> tok;) {
            dashes += tok == "-";
            ones += tok == "1.0000";
        }
    }
    CHECK(dashes == 12);
    CHECK(ones == 20);
}

TEST_CASE("k is honoured and recorded") {
    const auto corpus = testing::fixture_corpus();
    FallbackEmbedder embedder;
    const auto report = run_table(corpus, {QuerySource::D3}, std::nullopt, embedder, {1, {}});
    CHECK(report.k == 1);
    CHECK(report.cells.size() == 4);
    CHECK(report_to_json(report)["metadata"]["k"] == 1);
    CHECK(render_report_table(report).find("top 1") != std::string::npos);
}

TEST_CASE("missing levels and query sets give unavailable cells") {
    testing::quiet_logs();
    auto entries = testing::fixture_corpus().entries();
    entries[0].descriptions.erase(ExpertiseLevel::Expert);
    const Corpus corpus(entries, 1);
    FallbackEmbedder embedder;
    const auto report = run_table(corpus, kRows, std::nullopt, embedder);
    REQUIRE(report.cells.size() == 20);

    // every config with D3 lacks an entry
    CHECK(report.cell(QuerySource::D1, "SC+D3")->status == CellStatus::Unavailable);
    CHECK(report.cell(QuerySource::D1, "SC+D3")->reason.find("D3") != std::string::npos);
    CHECK(report.cell(QuerySource::D1, "SC+D2")->status == CellStatus::Ok);
    // the D3 row has one query fewer than there are entries
    CHECK(report.cell(QuerySource::D3, "SC")->status == CellStatus::Partial);
    CHECK(report.cell(QuerySource::D3, "SC")->n_queries == 9);
    CHECK(report.cell(QuerySource::External, "SC")->status == CellStatus::Unavailable);

    const auto text = render_report_table(report);
    CHECK(text.find("n/a") != std::string::npos);
    CHECK(text.find("*") != std::string::npos);
}
