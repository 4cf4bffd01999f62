#include <doctest.h>

#include <httplib.h>

#include "cpretrieve/error.hpp"
#include "cpretrieve/service.hpp"
#include "test_support.hpp"

using namespace cpretrieve;
using nlohmann::json;

namespace {

// Fallback embeddings that can be switched to a transport failure.
class SwitchableEmbedder : public EmbeddingProvider {
public:
    std::string id() const override { return inner_.id(); }
    std::size_t dimension() const override { return inner_.dimension(); }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
        if (down) throw ProviderError("embedding service down", 1);
        return inner_.embed_batch(texts);
    }
    std::atomic<bool> down{false};

private:
    FallbackEmbedder inner_;
};

ServiceOptions fast_options() {
    ServiceOptions o;
    o.embedding.retry = {1, std::chrono::milliseconds(0), 2.0};
    o.generation_retry = o.embedding.retry;
    return o;
}

json new_model(const std::string& id) {
    return {{"id", id},
            {"name", "Warehouse location"},
            {"source_files",
             {{{"filename", "warehouse.mzn"},
               {"content", "% open warehouses to supply stores at minimum cost\nint: n_stores;\nsolve minimize cost;\n"}},
              {{"filename", "warehouse.dzn"}, {"content", "n_stores = 5;\n"}}}}};
}

std::unique_ptr<Service> make_service(std::shared_ptr<EmbeddingProvider> embedder,
                                      std::shared_ptr<TextGenerationProvider> generator,
                                      ServiceOptions options = fast_options()) {
    return Service::from_corpus(testing::fixture_corpus(), IndexConfig::parse("SC+D2"), std::move(embedder),
                                std::move(generator), std::move(options));
}

}  // namespace

TEST_CASE("query returns min(k, N) results in score order") {
    auto service = make_service(std::make_shared<FallbackEmbedder>(), std::make_shared<StubTextProvider>());
    for (int k : {1, 3, 5, 10, 50}) {
        const auto r = service->query(json{{"text", "queens on a chessboard"}, {"k", k}}.dump());
        REQUIRE(r.status == 200);
        const auto& results = r.body["results"];
        CHECK(results.size() == std::min<std::size_t>(k, 10));
        for (std::size_t i = 1; i < results.size(); ++i) {
            CHECK(results[i - 1]["score"].get<double>() >= results[i]["score"].get<double>());
            CHECK(results[i]["rank"] == i + 1);
        }
        CHECK(results[0]["entry_id"] == "nqueens");
        CHECK(results[0]["name"] == "N-Queens");
        CHECK(r.body["k"] == k);
    }
    const auto def = service->query(R"({"text": "pack items in bins"})");
    CHECK(def.body["results"].size() == 5);
    CHECK(def.body["config"] == "SC+D2");
    CHECK(def.body["provider"] == "fallback-fnv1a");
}

TEST_CASE("query validation") {
    auto service = make_service(std::make_shared<FallbackEmbedder>(), nullptr);
    CHECK(service->query("not json").status == 400);
    CHECK(service->query(R"({"text": "   "})").status == 400);
    CHECK(service->query(R"({"k": 3})").status == 400);
    CHECK(service->query(R"({"text": "x", "k": 0})").status == 400);
    CHECK(service->query(R"({"text": "x", "k": "3"})").status == 400);
    const auto no_tokens = service->query(R"({"text": "?!"})");
    CHECK(no_tokens.status == 400);
    CHECK(no_tokens.body["error"].contains("message"));
}

TEST_CASE("get_model") {
    auto service = make_service(std::make_shared<FallbackEmbedder>(), nullptr);
    const auto mill = service->get_model("steel_mill");
    REQUIRE(mill.status == 200);
    CHECK(mill.body["entry_id"] == "steel_mill");
    REQUIRE(mill.body["source_files"].size() == 2);
    CHECK(mill.body["source_files"][0]["filename"] == "a.mzn");
    CHECK(mill.body["source_files"][1]["filename"] == "b.mzn");
    CHECK(mill.body["descriptions"].contains("D3"));
    CHECK(service->get_model("unknown").status == 404);
}

TEST_CASE("adding a model makes it retrievable") {
    testing::TempDir dir;
    auto options = fast_options();
    options.corpus_path = dir / "corpus.json";
    options.index_path = dir / "index.json";
    auto service = make_service(std::make_shared<FallbackEmbedder>(), std::make_shared<StubTextProvider>(), options);
    const auto before = service->snapshot();

    const auto added = service->add_model(new_model("warehouse").dump());
    REQUIRE(added.status == 201);
    CHECK(added.body["n"] == 11);
    CHECK(added.body["corpus_version"] == before->corpus.version() + 1);
    CHECK(added.body["generated_levels"] == json::array({"D2"}));

    const auto after = service->snapshot();
    CHECK(before->corpus.size() == 10);  // old snapshot untouched
    CHECK(after->index.size() == 11);
    const auto* stored = after->corpus.find("warehouse");
    REQUIRE(stored != nullptr);
    CHECK(stored->description(ExpertiseLevel::Intermediate) != nullptr);

    const auto q = service->query(json{{"text", build_embedding_input(*stored, IndexConfig::parse("SC+D2"))}}.dump());
    CHECK(q.body["results"][0]["entry_id"] == "warehouse");
    CHECK(service->health().body["n"] == 11);

    CHECK(load_corpus(dir / "corpus.json") == after->corpus);
    CHECK(load_index(dir / "index.json") == after->index);

    const auto dup = service->add_model(new_model("warehouse").dump());
    CHECK(dup.status == 409);
    CHECK(service->snapshot() == after);
}

TEST_CASE("additions that cannot complete leave the state unchanged") {
    testing::quiet_logs();
    SUBCASE("embedding provider down") {
        auto embedder = std::make_shared<SwitchableEmbedder>();
        auto service = make_service(embedder, std::make_shared<StubTextProvider>());
        const auto before = service->snapshot();
        embedder->down = true;
        const auto r = service->add_model(new_model("warehouse").dump());
        CHECK(r.status == 503);
        CHECK(service->snapshot() == before);
        CHECK(service->health().body["corpus_version"] == before->corpus.version());
        CHECK(service->query(R"({"text": "queens"})").status == 503);
    }
    SUBCASE("no generator for a missing description") {
        auto service = make_service(std::make_shared<FallbackEmbedder>(), nullptr);
        const auto before = service->snapshot();
        CHECK(service->add_model(new_model("warehouse").dump()).status == 503);
        CHECK(service->snapshot() == before);

        auto with_d2 = new_model("warehouse");
        with_d2["descriptions"] = {{"D2", "Choose warehouses to open and assign stores to them."}};
        const auto ok = service->add_model(with_d2.dump());
        CHECK(ok.status == 201);
        CHECK(ok.body["generated_levels"].empty());
    }
    SUBCASE("generator failure") {
        auto stub = std::make_shared<StubTextProvider>();
        stub->fail_for("warehouse");
        auto service = make_service(std::make_shared<FallbackEmbedder>(), stub);
        CHECK(service->add_model(new_model("warehouse").dump()).status == 503);
        CHECK(service->snapshot()->corpus.size() == 10);
    }
    SUBCASE("invalid entries") {
        auto service = make_service(std::make_shared<FallbackEmbedder>(), std::make_shared<StubTextProvider>());
        CHECK(service->add_model("{").status == 422);
        CHECK(service->add_model(R"({"id": "x"})").status == 422);
        auto bad_id = new_model("Bad Id");
        CHECK(service->add_model(bad_id.dump()).status == 422);
        CHECK(service->snapshot()->corpus.size() == 10);
    }
    SUBCASE("admin token") {
        auto options = fast_options();
        options.admin_token = "s3cret";
        auto service = make_service(std::make_shared<FallbackEmbedder>(), std::make_shared<StubTextProvider>(), options);
        CHECK(service->add_model(new_model("warehouse").dump()).status == 401);
        CHECK(service->add_model(new_model("warehouse").dump(), "Bearer wrong").status == 401);
        CHECK(service->add_model(new_model("warehouse").dump(), "Bearer s3cret").status == 201);
    }
}

TEST_CASE("queries do not change state") {
    auto service = make_service(std::make_shared<FallbackEmbedder>(), nullptr);
    const auto before = service->snapshot();
    const auto first = service->query(R"({"text": "magic sum of rows"})");
    for (int i = 0; i < 20; ++i) service->query(R"({"text": "magic sum of rows"})");
    CHECK(service->query(R"({"text": "magic sum of rows"})").body == first.body);
    CHECK(service->snapshot() == before);
}

TEST_CASE("health reports a provider mismatch") {
    testing::quiet_logs();
    FallbackEmbedder small(16);
    auto built = build_index(testing::fixture_corpus(), IndexConfig(), small);
    Service service(testing::fixture_corpus(), built.index, std::make_shared<FallbackEmbedder>(16), nullptr);
    CHECK_FALSE(service.health().body.contains("warning"));

    Service mismatched(testing::fixture_corpus(), built.index, std::make_shared<FallbackEmbedder>(32), nullptr);
    REQUIRE(mismatched.provider_warning().has_value());
    CHECK(mismatched.health().body.contains("warning"));
    CHECK(mismatched.query(R"({"text": "queens"})").status == 500);
}

TEST_CASE("http routes") {
    testing::TempDir dir;
    testing::write_text(dir / "index.html", "<html>ui</html>");
    auto options = fast_options();
    options.static_dir = dir.path();
    std::vector<json> log;
    std::mutex log_mutex;
    options.request_log = [&](const json& record) {
        std::lock_guard lock(log_mutex);
        log.push_back(record);
    };
    auto service = make_service(std::make_shared<FallbackEmbedder>(), std::make_shared<StubTextProvider>(), options);

    testing::MockServer server;
    service->mount(server.server());
    server.start();
    httplib::Client client("127.0.0.1", server.port());

    auto res = client.Post("/api/query", R"({"text": "colour the vertices of a graph", "k": 2})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
    const auto body = json::parse(res->body);
    CHECK(body["results"].size() == 2);
    CHECK(body["results"][0]["entry_id"] == "graph_coloring");

    res = client.Get("/api/health");
    REQUIRE(res);
    CHECK(json::parse(res->body)["n"] == 10);

    res = client.Get("/api/models/golomb");
    REQUIRE(res);
    CHECK(json::parse(res->body)["name"] == "Golomb Ruler");
    res = client.Get("/api/models/none");
    REQUIRE(res);
    CHECK(res->status == 404);

    res = client.Post("/api/models", new_model("warehouse").dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 201);

    res = client.Options("/api/query");
    REQUIRE(res);
    CHECK(res->status == 204);
    CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

    res = client.Get("/api/nothing/here");
    REQUIRE(res);
    CHECK(res->status == 404);
    CHECK(json::parse(res->body)["error"]["code"] == "not_found");

    res = client.Get("/index.html");
    REQUIRE(res);
    CHECK(res->body == "<html>ui</html>");

    server.stop();
    std::lock_guard lock(log_mutex);
    REQUIRE(log.size() == 5);
    CHECK(log[0]["method"] == "POST");
    CHECK(log[0]["path"] == "/api/query");
    CHECK(log[0]["status"] == 200);
    CHECK(log[0].contains("duration_ms"));
    CHECK(log[3]["status"] == 404);
    CHECK(log[4]["status"] == 201);
}
