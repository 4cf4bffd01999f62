#include "cpretrieve/settings.hpp"

#include "cpretrieve/error.hpp"

namespace cpretrieve {

using nlohmann::json;

Settings settings_from_json(const json& j) {
    Settings s;
    try {
        if (j.contains("embedding")) {
            const auto& e = j["embedding"];
            s.embedding_provider = e.value("provider", s.embedding_provider);
            s.remote_embedding.endpoint.url = e.value("endpoint", std::string());
            s.remote_embedding.endpoint.api_key_env = e.value("api_key_env", std::string());
            s.remote_embedding.endpoint.timeout = std::chrono::seconds(e.value("timeout_s", 60));
            s.remote_embedding.model = e.value("model", std::string());
            s.remote_embedding.dimension = e.value("dimension", kDefaultDimension);
            s.remote_embedding.max_in_flight = e.value("max_in_flight", 4);
            s.embedding.parallelism = s.remote_embedding.max_in_flight;
            s.embedding.batch_size = e.value("batch_size", s.embedding.batch_size);
            s.embedding.max_input_chars = e.value("max_input_chars", s.embedding.max_input_chars);
        }
        if (j.contains("generation")) {
            const auto& g = j["generation"];
            s.generation_provider = g.value("provider", s.generation_provider);
            s.remote_generation.endpoint.url = g.value("endpoint", std::string());
            s.remote_generation.endpoint.api_key_env = g.value("api_key_env", std::string());
            s.remote_generation.endpoint.timeout = std::chrono::seconds(g.value("timeout_s", 120));
            s.remote_generation.model = g.value("model", std::string());
            s.remote_generation.temperature = g.value("temperature", 0.0);
            s.remote_generation.max_in_flight = g.value("max_in_flight", 4);
            if (g.contains("canned")) s.canned_descriptions = g["canned"].get<std::string>();
        }
        if (j.contains("retry")) {
            const auto& r = j["retry"];
            s.retry.attempts = r.value("attempts", s.retry.attempts);
            s.retry.initial_backoff = std::chrono::milliseconds(r.value("initial_backoff_ms", 1000));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Configuration, std::string("malformed settings: ") + e.what());
    }
    s.embedding.retry = s.retry;
    return s;
}

Settings load_settings(const std::filesystem::path& path) {
    json j;
    const auto text = read_file(path);
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Configuration, "cannot parse settings " + path.string() + ": " + e.what());
    }
    return settings_from_json(j);
}

std::shared_ptr<EmbeddingProvider> make_embedder(const Settings& settings, const std::string& kind,
                                                 std::size_t dimension) {
    const auto& which = kind.empty() ? settings.embedding_provider : kind;
    if (which == "fallback") {
        return std::make_shared<FallbackEmbedder>(dimension != 0 ? dimension : kDefaultDimension);
    }
    if (which == "remote") {
        auto config = settings.remote_embedding;
        if (dimension != 0) config.dimension = dimension;
        return std::make_shared<RemoteEmbedder>(std::move(config));
    }
    fail(ErrorKind::Configuration, "unknown embedding provider '" + which + "' (expected fallback or remote)");
}

std::shared_ptr<TextGenerationProvider> make_generator(const Settings& settings, const std::string& kind) {
    const auto& which = kind.empty() ? settings.generation_provider : kind;
    if (which == "none") return nullptr;
    if (which == "stub") {
        if (settings.canned_descriptions) {
            return std::make_shared<StubTextProvider>(StubTextProvider::load_canned(*settings.canned_descriptions));
        }
        return std::make_shared<StubTextProvider>();
    }
    if (which == "remote") return std::make_shared<RemoteChatProvider>(settings.remote_generation);
    fail(ErrorKind::Configuration, "unknown generation provider '" + which + "' (expected stub, remote or none)");
}

}  // namespace cpretrieve
