#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cpretrieve/corpus.hpp"
#include "cpretrieve/http_json.hpp"
#include "cpretrieve/prompts.hpp"
#include "cpretrieve/retry.hpp"

namespace cpretrieve {

struct GenerationRequest {
    std::string entry_id;
    ExpertiseLevel level;
    std::string prompt;
    std::string provider_id;
};

struct GenerationResult {
    std::string text;
    std::string provider_id;
    std::string timestamp;  // UTC, ISO 8601
    std::string prompt_digest;

    bool operator==(const GenerationResult&) const = default;
};

/// Text-generation backend. Implementations must be safe to call from
/// several threads at once.
class TextGenerationProvider {
public:
    virtual ~TextGenerationProvider() = default;
    virtual std::string id() const = 0;
    /// Raw completion for request.prompt. Throws ProviderError on transport failure.
    virtual std::string generate(const GenerationRequest& request) = 0;
};

/// Deterministic offline provider. Returns canned text for (entry id, level)
/// when present, otherwise a line derived from the prompt digest.
class StubTextProvider : public TextGenerationProvider {
public:
    using Key = std::pair<std::string, ExpertiseLevel>;

    StubTextProvider() = default;
    explicit StubTextProvider(std::map<Key, std::string> canned) : canned_(std::move(canned)) {}

    /// Reads {"<entry id>": {"D1": "...", ...}, ...}.
    static std::map<Key, std::string> load_canned(const std::filesystem::path& path);

    std::string id() const override { return "stub"; }
    std::string generate(const GenerationRequest& request) override;

    /// Requests for these entries fail with a transport error.
    void fail_for(std::string entry_id);

    std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::map<Key, std::string> canned_;
    std::set<std::string> failing_;
    mutable std::mutex mutex_;
    std::atomic<std::size_t> calls_{0};
};

struct ChatProviderConfig {
    HttpEndpoint endpoint;
    std::string model;
    double temperature = 0.0;
    int max_in_flight = 4;
};

/// Chat-completion client: POST {model, messages:[{role:"user", content}], temperature},
/// reads choices[0].message.content.
class RemoteChatProvider : public TextGenerationProvider {
public:
    explicit RemoteChatProvider(ChatProviderConfig config);

    std::string id() const override { return "remote:" + config_.model; }
    std::string generate(const GenerationRequest& request) override;

    const ChatProviderConfig& config() const noexcept { return config_; }

private:
    ChatProviderConfig config_;
    std::counting_semaphore<> in_flight_;
};

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string utc_timestamp();

/// Generation results keyed by (entry id, level, prompt digest). Thread-safe.
class GenerationCache {
public:
    GenerationCache() = default;

    std::optional<GenerationResult> get(const std::string& entry_id, ExpertiseLevel level,
                                        const std::string& digest) const;
    void put(const std::string& entry_id, ExpertiseLevel level, GenerationResult result);
    std::size_t size() const;

    void load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    using Key = std::tuple<std::string, ExpertiseLevel, std::string>;
    mutable std::mutex mutex_;
    std::map<Key, GenerationResult> results_;
};

struct GenerationOptions {
    RetryPolicy retry;
    int parallelism = 4;
    bool force = false;
};

/// Renders the builtin prompt for (entry, level), consults the cache, and
/// calls the provider only on a miss. Output is whitespace-trimmed.
GenerationResult generate_description(const ModelEntry& entry, ExpertiseLevel level,
                                      TextGenerationProvider& provider, GenerationCache& cache,
                                      const RetryPolicy& retry = {});

struct GenerationFailure {
    std::string entry_id;
    ExpertiseLevel level;
    std::string message;
};

struct GenerateAllResult {
    Corpus corpus;
    std::size_t generated = 0;  // descriptions written into the corpus
    std::vector<GenerationFailure> failures;
};

/// Fills every requested level of every entry. Existing descriptions are kept
/// unless options.force. Successful generations are committed even when
/// others fail; the version is bumped only if something changed.
GenerateAllResult generate_all(const Corpus& corpus, const std::vector<ExpertiseLevel>& levels,
                               TextGenerationProvider& provider, GenerationCache& cache,
                               const GenerationOptions& options = {});

}  // namespace cpretrieve
