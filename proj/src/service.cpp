#include "cpretrieve/service.hpp"

#include <chrono>
#include <iostream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cpretrieve/error.hpp"

namespace cpretrieve {

using nlohmann::json;

namespace {

Service::Response error_response(int status, std::string_view code, const std::string& message) {
    return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

int status_for_provider_error(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Validation: return 400;
        case ErrorKind::DimensionMismatch: return 500;
        case ErrorKind::Provider:
        case ErrorKind::ProviderContract:
        case ErrorKind::Generation:
        case ErrorKind::Configuration: return 503;
        default: return 500;
    }
}

std::string bearer(const std::string& header) {
    constexpr std::string_view prefix = "Bearer ";
    if (header.rfind(prefix, 0) == 0) return header.substr(prefix.size());
    return header;
}

}  // namespace

std::function<void(const json&)> stdout_request_log() {
    auto mutex = std::make_shared<std::mutex>();
    return [mutex](const json& record) {
        std::lock_guard lock(*mutex);
        std::cout << record.dump() << std::endl;
    };
}

Service::Service(Corpus corpus, RetrievalIndex index, std::shared_ptr<EmbeddingProvider> embedder,
                 std::shared_ptr<TextGenerationProvider> generator, ServiceOptions options)
    : embedder_(std::move(embedder)), generator_(std::move(generator)), options_(std::move(options)) {
    if (!embedder_) fail(ErrorKind::Configuration, "service needs an embedding provider");
    if (options_.k_default == 0) fail(ErrorKind::Configuration, "default k must be at least 1");
    provider_warning_ = check_provider(index, *embedder_);
    for (const auto& item : index.items()) {
        if (corpus.find(item.entry_id) == nullptr) {
            spdlog::warn("index item '{}' has no corpus entry; it will be served without a name", item.entry_id);
        }
    }
    snapshot_ = std::make_shared<const ServiceSnapshot>(ServiceSnapshot{std::move(corpus), std::move(index)});
}

std::unique_ptr<Service> Service::from_corpus(Corpus corpus, const IndexConfig& config,
                                              std::shared_ptr<EmbeddingProvider> embedder,
                                              std::shared_ptr<TextGenerationProvider> generator,
                                              ServiceOptions options) {
    if (!embedder) fail(ErrorKind::Configuration, "service needs an embedding provider");
    auto built = build_index(corpus, config, *embedder, options.embedding);
    if (!built.failures.empty()) {
        fail(ErrorKind::Configuration, "cannot build " + config.name() + " index for '" +
                                           built.failures.front().entry_id + "': " + built.failures.front().message);
    }
    return std::make_unique<Service>(std::move(corpus), std::move(built.index), std::move(embedder),
                                     std::move(generator), std::move(options));
}

std::shared_ptr<const ServiceSnapshot> Service::snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
}

void Service::publish(std::shared_ptr<const ServiceSnapshot> next) {
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(next);
}

Service::Response Service::query(const std::string& request_body) const {
    json request;
    try {
        request = json::parse(request_body);
    } catch (const json::exception&) {
        return error_response(400, "bad_request", "request body is not valid JSON");
    }
    if (!request.is_object() || !request.contains("text") || !request["text"].is_string()) {
        return error_response(400, "bad_request", "field 'text' (string) is required");
    }
    const auto text = request["text"].get<std::string>();
    if (trim(text).empty()) return error_response(400, "bad_request", "query text is empty");

    std::size_t k = options_.k_default;
    if (request.contains("k") && !request["k"].is_null()) {
        if (!request["k"].is_number_integer() || request["k"].get<long long>() < 1) {
            return error_response(400, "bad_request", "k must be a positive integer");
        }
        k = request["k"].get<std::size_t>();
    }

    const auto snap = snapshot();
    std::vector<RankedResult> results;
    try {
        const auto vec = embed(text, *embedder_, options_.embedding);
        results = query_top_k(snap->index, vec, k);
    } catch (const ProviderError& e) {
        return error_response(503, "provider_unavailable", e.what());
    } catch (const Error& e) {
        return error_response(status_for_provider_error(e), to_string(e.kind()), e.what());
    }

    json items = json::array();
    for (const auto& r : results) {
        const auto* entry = snap->corpus.find(r.entry_id);
        items.push_back({{"entry_id", r.entry_id},
                         {"name", entry ? entry->name : r.entry_id},
                         {"score", r.score},
                         {"rank", r.rank}});
    }
    return {200,
            {{"results", std::move(items)},
             {"config", snap->index.config().name()},
             {"provider", embedder_->id()},
             {"k", k}}};
}

Service::Response Service::get_model(const std::string& id) const {
    const auto snap = snapshot();
    const auto* entry = snap->corpus.find(id);
    if (entry == nullptr) return error_response(404, "not_found", "no model with id '" + id + "'");
    auto body = entry_to_json(*entry);
    body["entry_id"] = entry->id;
    return {200, std::move(body)};
}

Service::Response Service::add_model(const std::string& request_body, const std::string& auth) {
    if (!options_.admin_token.empty() && bearer(auth) != options_.admin_token) {
        return error_response(401, "unauthorized", "a valid admin token is required to add models");
    }
    ModelEntry entry;
    try {
        entry = entry_from_json(json::parse(request_body));
        validate_entry(entry);
    } catch (const json::exception& e) {
        return error_response(422, "invalid_entry", std::string("request body is not valid JSON: ") + e.what());
    } catch (const Error& e) {
        return error_response(422, "invalid_entry", e.what());
    }

    std::lock_guard writer(writer_mutex_);
    const auto current = snapshot();
    if (current->corpus.find(entry.id) != nullptr) {
        return error_response(409, "conflict", "model '" + entry.id + "' already exists");
    }

    const auto& config = current->index.config();
    json generated = json::array();
    for (ExpertiseLevel level : config.levels()) {
        if (entry.description(level) != nullptr) continue;
        if (!generator_) {
            return error_response(503, "generation_unavailable",
                                  "no text-generation provider configured to produce the " +
                                      std::string(level_code(level)) + " description");
        }
        try {
            entry.descriptions[level] =
                generate_description(entry, level, *generator_, generation_cache_, options_.generation_retry).text;
            generated.push_back(level_code(level));
        } catch (const Error& e) {
            return error_response(503, "generation_failed", e.what());
        }
    }

    std::shared_ptr<const ServiceSnapshot> next;
    try {
        const auto input = build_embedding_input(entry, config);
        auto vec = embed(input, *embedder_, options_.embedding);
        if (vec.dimension() != current->index.dimension()) {
            return error_response(500, "dimension_mismatch", "embedding provider dimension " +
                                                                 std::to_string(vec.dimension()) +
                                                                 " does not match index dimension " +
                                                                 std::to_string(current->index.dimension()));
        }
        auto index = current->index.with_item({entry.id, vec.normalized()});
        auto corpus = add_entry(current->corpus, entry);
        next = std::make_shared<const ServiceSnapshot>(ServiceSnapshot{std::move(corpus), std::move(index)});
    } catch (const ProviderError& e) {
        return error_response(503, "provider_unavailable", e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Conflict) return error_response(409, "conflict", e.what());
        if (e.kind() == ErrorKind::Validation) return error_response(422, "invalid_entry", e.what());
        return error_response(status_for_provider_error(e), to_string(e.kind()), e.what());
    }

    try {
        if (options_.corpus_path) save_corpus(next->corpus, *options_.corpus_path);
        if (options_.index_path) save_index(next->index, *options_.index_path);
    } catch (const Error& e) {
        // roll the corpus file back so disk and memory stay in agreement
        try {
            if (options_.corpus_path) save_corpus(current->corpus, *options_.corpus_path);
        } catch (const Error& rollback) {
            spdlog::error("rollback of {} failed: {}", options_.corpus_path->string(), rollback.what());
        }
        return error_response(500, "persistence_failed", e.what());
    }

    publish(next);
    spdlog::info("added model '{}' (corpus version {}, n = {})", entry.id, next->corpus.version(), next->corpus.size());
    return {201,
            {{"entry_id", entry.id},
             {"n", next->corpus.size()},
             {"corpus_version", next->corpus.version()},
             {"config", config.name()},
             {"generated_levels", std::move(generated)}}};
}

Service::Response Service::health() const {
    const auto snap = snapshot();
    json body = {{"status", "ok"},
                 {"n", snap->corpus.size()},
                 {"indexed", snap->index.size()},
                 {"config", snap->index.config().name()},
                 {"provider", embedder_->id()},
                 {"index_provider", snap->index.provider_id()},
                 {"dimension", snap->index.dimension()},
                 {"corpus_version", snap->corpus.version()},
                 {"k_default", options_.k_default}};
    if (provider_warning_) body["warning"] = *provider_warning_;
    return {200, std::move(body)};
}

void Service::mount(httplib::Server& server) {
    const auto origin = options_.cors_origin;
    if (!origin.empty()) {
        server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                    {"Access-Control-Allow-Headers", "Content-Type, Authorization, X-Admin-Token"}});
    }

    const auto send = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    auto logged = [this, send](auto handler) {
        return [this, send, handler](const httplib::Request& req, httplib::Response& res) {
            const auto start = std::chrono::steady_clock::now();
            Response r;
            try {
                r = handler(req);
            } catch (const std::exception& e) {
                r = error_response(500, "internal", e.what());
            }
            send(res, r);
            if (options_.request_log) {
                const auto us = std::chrono::duration_cast<std::chrono::microseconds>(
                                    std::chrono::steady_clock::now() - start)
                                    .count();
                options_.request_log({{"ts", utc_timestamp()},
                                      {"method", req.method},
                                      {"path", req.path},
                                      {"status", r.status},
                                      {"duration_ms", static_cast<double>(us) / 1000.0}});
            }
        };
    };

    server.Post("/api/query", logged([this](const httplib::Request& req) { return query(req.body); }));
    server.Get("/api/health", logged([this](const httplib::Request&) { return health(); }));
    server.Get(R"(/api/models/([^/]+))",
               logged([this](const httplib::Request& req) { return get_model(req.matches[1].str()); }));
    server.Post("/api/models", logged([this](const httplib::Request& req) {
                    auto auth = req.get_header_value("Authorization");
                    if (auth.empty()) auth = req.get_header_value("X-Admin-Token");
                    return add_model(req.body, auth);
                }));
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    if (options_.static_dir && !server.set_mount_point("/", options_.static_dir->string())) {
        spdlog::warn("static directory {} does not exist; UI files will not be served", options_.static_dir->string());
    }

    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (res.body.empty() && req.path.rfind("/api/", 0) == 0) {
            res.set_content(json{{"error", {{"code", "not_found"}, {"message", "no route for " + req.path}}}}.dump(),
                            "application/json");
        }
    });
}

}  // namespace cpretrieve
