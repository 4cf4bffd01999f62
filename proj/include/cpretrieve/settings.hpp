#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "cpretrieve/embedding.hpp"
#include "cpretrieve/generation.hpp"

namespace cpretrieve {

/// Provider settings, optionally read from a JSON document:
///
///   {
///     "embedding":  {"provider": "fallback" | "remote", "endpoint": "...", "model": "...",
///                    "dimension": 768, "api_key_env": "...", "max_in_flight": 4,
///                    "timeout_s": 60, "batch_size": 16, "max_input_chars": 32000},
///     "generation": {"provider": "stub" | "remote", "endpoint": "...", "model": "...",
///                    "temperature": 0, "api_key_env": "...", "max_in_flight": 4,
///                    "timeout_s": 120, "canned": "descriptions.json"},
///     "retry":      {"attempts": 3, "initial_backoff_ms": 1000}
///   }
struct Settings {
    std::string embedding_provider = "fallback";
    RemoteEmbeddingConfig remote_embedding;
    EmbeddingOptions embedding;

    std::string generation_provider = "stub";
    ChatProviderConfig remote_generation;
    std::optional<std::filesystem::path> canned_descriptions;

    RetryPolicy retry;
};

Settings load_settings(const std::filesystem::path& path);
Settings settings_from_json(const nlohmann::json& j);

/// kind overrides settings.embedding_provider when non-empty; dimension
/// overrides the configured dimension when non-zero.
std::shared_ptr<EmbeddingProvider> make_embedder(const Settings& settings, const std::string& kind = {},
                                                 std::size_t dimension = 0);
/// kind: "stub", "remote" or "none" (returns null).
std::shared_ptr<TextGenerationProvider> make_generator(const Settings& settings, const std::string& kind = {});

}  // namespace cpretrieve
