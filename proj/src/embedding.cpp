#include "cpretrieve/embedding.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

#include "cpretrieve/error.hpp"
#include "cpretrieve/prompts.hpp"
#include "parallel.hpp"

namespace cpretrieve {

using nlohmann::json;

// ---- EmbeddingVector -------------------------------------------------------

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) fail(ErrorKind::Validation, "embedding vector must have positive dimension");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            fail(ErrorKind::Validation, "embedding component " + std::to_string(i) + " is not finite");
        }
    }
}

double EmbeddingVector::norm() const {
    double sum = 0.0;
    for (double v : values_) sum += v * v;
    return std::sqrt(sum);
}

EmbeddingVector EmbeddingVector::normalized() const {
    const double n = norm();
    if (!(n > 0.0)) fail(ErrorKind::Validation, "cannot normalize a zero vector");
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = values_[i] / n;
    return EmbeddingVector(std::move(out));
}

EmbeddingVector EmbeddingVector::scaled(double factor) const {
    std::vector<double> out(values_);
    for (double& v : out) v *= factor;
    return EmbeddingVector(std::move(out));
}

// ---- IndexConfig -----------------------------------------------------------

IndexConfig::IndexConfig(std::vector<ExpertiseLevel> levels) : levels_(std::move(levels)) {
    std::sort(levels_.begin(), levels_.end());
    levels_.erase(std::unique(levels_.begin(), levels_.end()), levels_.end());
}

std::string IndexConfig::name() const {
    std::string out = "SC";
    for (std::size_t i = 0; i < levels_.size(); ++i) {
        out += i == 0 ? "+D" : "&";
        out += std::to_string(static_cast<int>(levels_[i]));
    }
    return out;
}

IndexConfig IndexConfig::parse(std::string_view name) {
    std::string compact;
    for (char c : name) {
        if (c != ' ') compact += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    const auto bad = [&] {
        fail(ErrorKind::Validation, "invalid index configuration '" + std::string(name) +
                                        "' (expected SC, SC+D2, SC+D1&3, ...)");
    };
    if (compact.rfind("SC", 0) != 0) bad();
    std::vector<ExpertiseLevel> levels;
    if (compact.size() > 2) {
        if (compact.compare(2, 2, "+D") != 0 || compact.size() == 4) bad();
        int previous = 0;
        for (std::size_t i = 4; i < compact.size(); ++i) {
            const char c = compact[i];
            if (c < '1' || c > '3') bad();
            const int code = c - '0';
            if (code <= previous) bad();  // canonical: ascending, no repeats
            previous = code;
            levels.push_back(static_cast<ExpertiseLevel>(code));
            if (i + 1 < compact.size()) {
                if (compact[i + 1] != '&' || i + 2 >= compact.size()) bad();
                ++i;
            }
        }
    }
    return IndexConfig(std::move(levels));
}

const std::vector<IndexConfig>& IndexConfig::all() {
    using L = ExpertiseLevel;
    static const std::vector<IndexConfig> configs = {
        IndexConfig(),
        IndexConfig({L::Novice}),
        IndexConfig({L::Intermediate}),
        IndexConfig({L::Expert}),
        IndexConfig({L::Novice, L::Intermediate}),
        IndexConfig({L::Novice, L::Expert}),
        IndexConfig({L::Intermediate, L::Expert}),
        IndexConfig({L::Novice, L::Intermediate, L::Expert}),
    };
    return configs;
}

bool IndexConfig::contains(ExpertiseLevel level) const {
    return std::find(levels_.begin(), levels_.end(), level) != levels_.end();
}

std::string build_embedding_input(const ModelEntry& entry, const IndexConfig& config) {
    std::string out = concatenate_sources(entry);
    for (ExpertiseLevel level : config.levels()) {
        const auto* text = entry.description(level);
        if (text == nullptr) {
            fail(ErrorKind::Configuration, "entry '" + entry.id + "' has no " + std::string(level_code(level)) +
                                               " (" + std::string(level_name(level)) +
                                               ") description required by " + config.name());
        }
        out += "\n\n--- DESCRIPTION (";
        out += level_name(level);
        out += ") ---\n";
        out += *text;
    }
    return out;
}

// ---- fallback embedder -----------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t hash = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        const bool token_byte = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80;
        if (c >= 'A' && c <= 'Z') {
            current += static_cast<char>(c - 'A' + 'a');
        } else if (token_byte) {
            current += ch;
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

EmbeddingVector fallback_embed(std::string_view text, std::size_t dimension) {
    if (dimension < 2) fail(ErrorKind::Validation, "fallback embedding dimension must be at least 2");
    if (trim(text).empty()) fail(ErrorKind::Validation, "cannot embed empty text");
    const auto tokens = tokenize(text);
    if (tokens.empty()) fail(ErrorKind::Validation, "text contains no tokens to embed");

    std::vector<double> counts(dimension, 0.0);
    for (const auto& token : tokens) counts[fnv1a64(token) % dimension] += 1.0;
    return EmbeddingVector(std::move(counts)).normalized();
}

FallbackEmbedder::FallbackEmbedder(std::size_t dimension) : dimension_(dimension) {
    if (dimension_ < 2) fail(ErrorKind::Configuration, "fallback embedding dimension must be at least 2");
}

std::vector<EmbeddingVector> FallbackEmbedder::embed_batch(std::span<const std::string> texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(fallback_embed(t, dimension_));
    return out;
}

// ---- remote embedder -------------------------------------------------------

RemoteEmbedder::RemoteEmbedder(RemoteEmbeddingConfig config)
    : config_(std::move(config)), in_flight_(std::max(config_.max_in_flight, 1)) {
    if (config_.endpoint.url.empty() || config_.model.empty()) {
        fail(ErrorKind::Configuration, "embedding provider needs an endpoint URL and a model name");
    }
    if (config_.dimension == 0) fail(ErrorKind::Configuration, "embedding dimension must be positive");
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(std::span<const std::string> texts) {
    const json body = {{"model", config_.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    in_flight_.acquire();
    json reply;
    try {
        reply = post_json(config_.endpoint, body);
    } catch (...) {
        in_flight_.release();
        throw;
    }
    in_flight_.release();

    if (!reply.contains("data") || !reply["data"].is_array() || reply["data"].size() != texts.size()) {
        fail(ErrorKind::ProviderContract, "embedding reply must carry one data item per input (" +
                                              std::to_string(texts.size()) + " expected)");
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& item : reply["data"]) {
        if (!item.contains("embedding") || !item["embedding"].is_array()) {
            fail(ErrorKind::ProviderContract, "embedding reply item has no embedding array");
        }
        try {
            out.emplace_back(item["embedding"].get<std::vector<double>>());
        } catch (const json::exception& e) {
            fail(ErrorKind::ProviderContract, std::string("embedding reply is not numeric: ") + e.what());
        } catch (const Error& e) {
            fail(ErrorKind::ProviderContract, e.what());
        }
    }
    return out;
}

// ---- operations ------------------------------------------------------------

std::string truncate_chars(std::string_view text, std::size_t max_chars, bool* truncated) {
    std::size_t chars = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        // count lead bytes only
        if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
            if (chars == max_chars) {
                if (truncated) *truncated = true;
                return std::string(text.substr(0, i));
            }
            ++chars;
        }
    }
    if (truncated) *truncated = false;
    return std::string(text);
}

namespace {

std::vector<EmbeddingVector> embed_one_batch(std::span<const std::string> texts, EmbeddingProvider& provider,
                                             const EmbeddingOptions& options) {
    std::vector<std::string> prepared;
    prepared.reserve(texts.size());
    for (const auto& text : texts) {
        if (trim(text).empty()) fail(ErrorKind::Validation, "cannot embed empty text");
        bool cut = false;
        prepared.push_back(truncate_chars(text, options.max_input_chars, &cut));
        if (cut) {
            spdlog::warn("embedding input of {} bytes truncated to {} characters", text.size(),
                         options.max_input_chars);
        }
    }
    auto vectors = with_retries(options.retry, [&] { return provider.embed_batch(prepared); });
    if (vectors.size() != prepared.size()) {
        fail(ErrorKind::ProviderContract, "provider " + provider.id() + " returned " +
                                              std::to_string(vectors.size()) + " vectors for " +
                                              std::to_string(prepared.size()) + " inputs");
    }
    for (const auto& v : vectors) {
        if (v.dimension() != provider.dimension()) {
            fail(ErrorKind::ProviderContract, "provider " + provider.id() + " returned dimension " +
                                                  std::to_string(v.dimension()) + ", expected " +
                                                  std::to_string(provider.dimension()));
        }
    }
    return vectors;
}

}  // namespace

EmbeddingVector embed(std::string_view text, EmbeddingProvider& provider, const EmbeddingOptions& options) {
    const std::string owned(text);
    return std::move(embed_one_batch(std::span(&owned, 1), provider, options).front());
}

std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts, EmbeddingProvider& provider,
                                         const EmbeddingOptions& options) {
    const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);
    const std::size_t n_batches = (texts.size() + batch - 1) / batch;
    std::vector<std::vector<EmbeddingVector>> results(n_batches);
    std::vector<std::exception_ptr> errors(n_batches);
    detail::parallel_for(n_batches, options.parallelism, [&](std::size_t b) {
        const auto begin = b * batch;
        const auto count = std::min(batch, texts.size() - begin);
        try {
            results[b] = embed_one_batch(texts.subspan(begin, count), provider, options);
        } catch (...) {
            errors[b] = std::current_exception();
        }
    });
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (auto& r : results) {
        for (auto& v : r) out.push_back(std::move(v));
    }
    return out;
}

CorpusEmbeddings embed_corpus(const Corpus& corpus, const IndexConfig& config, EmbeddingProvider& provider,
                              const EmbeddingOptions& options) {
    CorpusEmbeddings result;
    std::vector<std::string> ids;
    std::vector<std::string> inputs;
    for (const auto& entry : corpus.entries()) {
        try {
            inputs.push_back(build_embedding_input(entry, config));
            ids.push_back(entry.id);
        } catch (const Error& e) {
            result.failures.push_back({entry.id, e.what()});
        }
    }

    const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);
    const std::size_t n_batches = (inputs.size() + batch - 1) / batch;
    std::vector<std::vector<EmbeddingVector>> vectors(n_batches);
    std::vector<std::string> errors(n_batches);
    detail::parallel_for(n_batches, options.parallelism, [&](std::size_t b) {
        const auto begin = b * batch;
        const auto count = std::min(batch, inputs.size() - begin);
        try {
            auto raw = embed_one_batch(std::span(inputs).subspan(begin, count), provider, options);
            for (auto& v : raw) vectors[b].push_back(v.normalized());
        } catch (const std::exception& e) {
            errors[b] = e.what();
            if (errors[b].empty()) errors[b] = "embedding failed";
        }
    });

    for (std::size_t b = 0; b < n_batches; ++b) {
        const auto begin = b * batch;
        const auto count = std::min(batch, inputs.size() - begin);
        for (std::size_t i = 0; i < count; ++i) {
            if (errors[b].empty()) {
                result.items.emplace_back(ids[begin + i], std::move(vectors[b][i]));
            } else {
                result.failures.push_back({ids[begin + i], errors[b]});
            }
        }
    }
    std::sort(result.failures.begin(), result.failures.end(),
              [](const EntryFailure& a, const EntryFailure& b) { return a.entry_id < b.entry_id; });
    return result;
}

}  // namespace cpretrieve
