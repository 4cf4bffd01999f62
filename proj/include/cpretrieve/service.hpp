#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cpretrieve/corpus.hpp"
#include "cpretrieve/embedding.hpp"
#include "cpretrieve/generation.hpp"
#include "cpretrieve/retrieval_index.hpp"

namespace httplib {
class Server;
}

namespace cpretrieve {

struct ServiceOptions {
    std::size_t k_default = kDefaultTopK;
    std::optional<std::filesystem::path> corpus_path;  // persisted on add when set
    std::optional<std::filesystem::path> index_path;   // persisted on add when set
    std::string admin_token;                           // empty = additions unauthenticated
    std::string cors_origin = "*";
    std::optional<std::filesystem::path> static_dir;
    EmbeddingOptions embedding;
    RetryPolicy generation_retry;
    /// Receives one JSON object per handled request. Null = no request log.
    std::function<void(const nlohmann::json&)> request_log;
};

/// Writes each record as one line on standard output.
std::function<void(const nlohmann::json&)> stdout_request_log();

/// Corpus and matching index served together; replaced as a unit.
struct ServiceSnapshot {
    Corpus corpus;
    RetrievalIndex index;
};

/// Backend of the search UI. Queries read an immutable snapshot; additions
/// are serialized and publish a new snapshot atomically.
class Service {
public:
    struct Response {
        int status = 200;
        nlohmann::json body;
    };

    Service(Corpus corpus, RetrievalIndex index, std::shared_ptr<EmbeddingProvider> embedder,
            std::shared_ptr<TextGenerationProvider> generator, ServiceOptions options = {});

    /// Builds the index for config from corpus with embedder first.
    static std::unique_ptr<Service> from_corpus(Corpus corpus, const IndexConfig& config,
                                                std::shared_ptr<EmbeddingProvider> embedder,
                                                std::shared_ptr<TextGenerationProvider> generator,
                                                ServiceOptions options = {});

    Response query(const std::string& request_body) const;
    Response get_model(const std::string& id) const;
    /// auth is the raw Authorization / X-Admin-Token header value, may be empty.
    Response add_model(const std::string& request_body, const std::string& auth = {});
    Response health() const;

    std::shared_ptr<const ServiceSnapshot> snapshot() const;
    /// Non-empty when the loaded index was built by a different provider.
    const std::optional<std::string>& provider_warning() const noexcept { return provider_warning_; }

    /// Registers the /api routes, CORS headers, static files and request logging.
    void mount(httplib::Server& server);

private:
    void publish(std::shared_ptr<const ServiceSnapshot> next);

    std::shared_ptr<EmbeddingProvider> embedder_;
    std::shared_ptr<TextGenerationProvider> generator_;
    ServiceOptions options_;
    GenerationCache generation_cache_;
    std::optional<std::string> provider_warning_;

    mutable std::mutex snapshot_mutex_;  // guards the pointer swap only
    std::shared_ptr<const ServiceSnapshot> snapshot_;
    std::mutex writer_mutex_;
};

}  // namespace cpretrieve
