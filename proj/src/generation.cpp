#include "cpretrieve/generation.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "cpretrieve/error.hpp"
#include "parallel.hpp"

namespace cpretrieve {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        fail(ErrorKind::Io, "SHA-256 computation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xF];
    }
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

// ---- StubTextProvider ------------------------------------------------------

std::map<StubTextProvider::Key, std::string> StubTextProvider::load_canned(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, "cannot parse canned descriptions " + path.string() + ": " + e.what());
    }
    std::map<Key, std::string> canned;
    for (const auto& [id, levels] : j.items()) {
        for (const auto& [code, text] : levels.items()) {
            canned[{id, parse_level(code)}] = text.get<std::string>();
        }
    }
    return canned;
}

void StubTextProvider::fail_for(std::string entry_id) {
    std::lock_guard lock(mutex_);
    failing_.insert(std::move(entry_id));
}

std::string StubTextProvider::generate(const GenerationRequest& request) {
    ++calls_;
    {
        std::lock_guard lock(mutex_);
        if (failing_.count(request.entry_id) != 0) {
            throw ProviderError("stub provider configured to fail for '" + request.entry_id + "'", 1);
        }
    }
    if (const auto it = canned_.find({request.entry_id, request.level}); it != canned_.end()) {
        return it->second;
    }
    return "stub " + std::string(level_code(request.level)) + " description " +
           sha256_hex(request.prompt).substr(0, 16);
}

// ---- RemoteChatProvider ----------------------------------------------------

RemoteChatProvider::RemoteChatProvider(ChatProviderConfig config)
    : config_(std::move(config)), in_flight_(std::max(config_.max_in_flight, 1)) {
    if (config_.endpoint.url.empty() || config_.model.empty()) {
        fail(ErrorKind::Configuration, "chat provider needs an endpoint URL and a model name");
    }
}

std::string RemoteChatProvider::generate(const GenerationRequest& request) {
    const json body = {{"model", config_.model},
                       {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
                       {"temperature", config_.temperature}};
    in_flight_.acquire();
    json reply;
    try {
        reply = post_json(config_.endpoint, body);
    } catch (...) {
        in_flight_.release();
        throw;
    }
    in_flight_.release();

    const auto* content = reply.contains("choices") && reply["choices"].is_array() && !reply["choices"].empty()
                              ? &reply["choices"][0]
                              : nullptr;
    if (content == nullptr || !content->contains("message") || !(*content)["message"].contains("content") ||
        !(*content)["message"]["content"].is_string()) {
        fail(ErrorKind::ProviderContract, "chat completion reply has no choices[0].message.content");
    }
    return (*content)["message"]["content"].get<std::string>();
}

// ---- GenerationCache -------------------------------------------------------

std::optional<GenerationResult> GenerationCache::get(const std::string& entry_id, ExpertiseLevel level,
                                                     const std::string& digest) const {
    std::lock_guard lock(mutex_);
    const auto it = results_.find({entry_id, level, digest});
    if (it == results_.end()) return std::nullopt;
    return it->second;
}

void GenerationCache::put(const std::string& entry_id, ExpertiseLevel level, GenerationResult result) {
    std::lock_guard lock(mutex_);
    auto digest = result.prompt_digest;
    results_.insert_or_assign({entry_id, level, std::move(digest)}, std::move(result));
}

std::size_t GenerationCache::size() const {
    std::lock_guard lock(mutex_);
    return results_.size();
}

void GenerationCache::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return;
    json j;
    try {
        j = json::parse(read_file(path));
        if (j.at("schema_version").get<int>() != 1) {
            fail(ErrorKind::VersionedFormat, "unsupported generation cache schema_version in " + path.string());
        }
        std::lock_guard lock(mutex_);
        for (const auto& r : j.at("results")) {
            GenerationResult result{r.at("text").get<std::string>(), r.at("provider_id").get<std::string>(),
                                    r.at("timestamp").get<std::string>(),
                                    r.at("prompt_digest").get<std::string>()};
            results_.insert_or_assign(
                {r.at("entry_id").get<std::string>(), parse_level(r.at("level").get<std::string>()),
                 result.prompt_digest},
                std::move(result));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, "malformed generation cache " + path.string() + ": " + e.what());
    }
}

void GenerationCache::save(const std::filesystem::path& path) const {
    json results = json::array();
    {
        std::lock_guard lock(mutex_);
        for (const auto& [key, r] : results_) {
            results.push_back({{"entry_id", std::get<0>(key)},
                               {"level", std::string(level_code(std::get<1>(key)))},
                               {"prompt_digest", r.prompt_digest},
                               {"text", r.text},
                               {"provider_id", r.provider_id},
                               {"timestamp", r.timestamp}});
        }
    }
    write_file_atomic(path, json{{"schema_version", 1}, {"results", std::move(results)}}.dump(2) + "\n");
}

// ---- operations ------------------------------------------------------------

GenerationResult generate_description(const ModelEntry& entry, ExpertiseLevel level,
                                      TextGenerationProvider& provider, GenerationCache& cache,
                                      const RetryPolicy& retry) {
    GenerationRequest request{entry.id, level, render_prompt(entry, level), provider.id()};
    const auto digest = sha256_hex(request.prompt);
    if (auto hit = cache.get(entry.id, level, digest)) return *std::move(hit);

    const auto raw = with_retries(retry, [&] { return provider.generate(request); });
    const auto text = trim(raw);
    if (text.empty()) {
        fail(ErrorKind::Generation, "provider " + provider.id() + " returned an empty " +
                                        std::string(level_code(level)) + " description for '" + entry.id + "'");
    }
    GenerationResult result{std::string(text), provider.id(), utc_timestamp(), digest};
    cache.put(entry.id, level, result);
    return result;
}

GenerateAllResult generate_all(const Corpus& corpus, const std::vector<ExpertiseLevel>& levels,
                               TextGenerationProvider& provider, GenerationCache& cache,
                               const GenerationOptions& options) {
    struct Task {
        std::size_t entry_index;
        ExpertiseLevel level;
        std::optional<std::string> text;
        std::optional<std::string> error;
    };
    std::vector<Task> tasks;
    const auto& entries = corpus.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        for (ExpertiseLevel level : levels) {
            if (!options.force && entries[i].description(level) != nullptr) continue;
            tasks.push_back({i, level, std::nullopt, std::nullopt});
        }
    }

    detail::parallel_for(tasks.size(), options.parallelism, [&](std::size_t t) {
        auto& task = tasks[t];
        try {
            task.text = generate_description(entries[task.entry_index], task.level, provider, cache, options.retry).text;
        } catch (const std::exception& e) {
            task.error = e.what();
        }
    });

    GenerateAllResult result;
    auto updated = entries;
    for (const auto& task : tasks) {
        if (task.text) {
            updated[task.entry_index].descriptions[task.level] = *task.text;
            ++result.generated;
        } else {
            spdlog::warn("description {} for '{}' failed: {}", level_code(task.level),
                         entries[task.entry_index].id, *task.error);
            result.failures.push_back({entries[task.entry_index].id, task.level, *task.error});
        }
    }
    result.corpus = updated == entries ? corpus : corpus.with_entries(std::move(updated));
    return result;
}

}  // namespace cpretrieve
