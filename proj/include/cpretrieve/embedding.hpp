#pragma once

#include <cstdint>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cpretrieve/corpus.hpp"
#include "cpretrieve/http_json.hpp"
#include "cpretrieve/retry.hpp"

namespace cpretrieve {

inline constexpr std::size_t kDefaultDimension = 768;
inline constexpr std::size_t kDefaultMaxInputChars = 32000;

/// Fixed-length real vector with finite components.
class EmbeddingVector {
public:
    EmbeddingVector() = default;
    /// Throws Error{Validation} on an empty or non-finite vector.
    explicit EmbeddingVector(std::vector<double> values);

    std::size_t dimension() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    double norm() const;
    /// Unit-length copy. Throws Error{Validation} for the zero vector.
    EmbeddingVector normalized() const;
    EmbeddingVector scaled(double factor) const;

    bool operator==(const EmbeddingVector&) const = default;

private:
    std::vector<double> values_;
};

/// Which description levels are appended to the source code to form a
/// document's embedding input. Source code is always included.
class IndexConfig {
public:
    IndexConfig() = default;
    explicit IndexConfig(std::vector<ExpertiseLevel> levels);

    /// "SC", "SC+D2", "SC+D1&3", ...
    std::string name() const;
    /// Inverse of name(). Accepts the canonical form only, plus optional spaces.
    static IndexConfig parse(std::string_view name);
    /// The eight configurations in column order:
    /// SC, SC+D1, SC+D2, SC+D3, SC+D1&2, SC+D1&3, SC+D2&3, SC+D1&2&3.
    static const std::vector<IndexConfig>& all();

    const std::vector<ExpertiseLevel>& levels() const noexcept { return levels_; }
    bool contains(ExpertiseLevel level) const;

    bool operator==(const IndexConfig&) const = default;

private:
    std::vector<ExpertiseLevel> levels_;  // sorted, unique
};

/// Source block followed by one `--- DESCRIPTION (<Level>) ---` block per
/// configured level, blocks separated by a blank line.
/// Throws Error{Configuration} naming entry and level when a description is missing.
std::string build_embedding_input(const ModelEntry& entry, const IndexConfig& config);

/// String-to-vector backend. Must tolerate concurrent embed_batch calls.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Lowercased tokens, split at every byte that is neither an ASCII letter,
/// an ASCII digit, nor part of a multi-byte UTF-8 sequence.
std::vector<std::string> tokenize(std::string_view text);

/// Hashed bag of tokens: component (fnv1a64(token) mod d) counts token
/// occurrences, then the vector is L2-normalized.
EmbeddingVector fallback_embed(std::string_view text, std::size_t dimension);

class FallbackEmbedder : public EmbeddingProvider {
public:
    explicit FallbackEmbedder(std::size_t dimension = kDefaultDimension);

    std::string id() const override { return "fallback-fnv1a"; }
    std::size_t dimension() const override { return dimension_; }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

private:
    std::size_t dimension_;
};

struct RemoteEmbeddingConfig {
    HttpEndpoint endpoint;
    std::string model;
    std::size_t dimension = kDefaultDimension;
    int max_in_flight = 4;
};

/// POST {model, input:[texts]} -> {data:[{embedding:[...]}]}.
class RemoteEmbedder : public EmbeddingProvider {
public:
    explicit RemoteEmbedder(RemoteEmbeddingConfig config);

    std::string id() const override { return "remote:" + config_.model; }
    std::size_t dimension() const override { return config_.dimension; }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

private:
    RemoteEmbeddingConfig config_;
    std::counting_semaphore<> in_flight_;
};

struct EmbeddingOptions {
    std::size_t max_input_chars = kDefaultMaxInputChars;
    std::size_t batch_size = 16;
    int parallelism = 4;
    RetryPolicy retry;
};

/// Cuts text after max_chars UTF-8 code points.
std::string truncate_chars(std::string_view text, std::size_t max_chars, bool* truncated = nullptr);

/// Embeds a single text. Empty text is a validation error; a vector of the
/// wrong length is a provider-contract error. Not normalized.
EmbeddingVector embed(std::string_view text, EmbeddingProvider& provider, const EmbeddingOptions& options = {});

/// Embeds many texts in provider batches; output order matches input order.
/// Throws on the first failed batch.
std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts, EmbeddingProvider& provider,
                                         const EmbeddingOptions& options = {});

struct EntryFailure {
    std::string entry_id;
    std::string message;
};

struct CorpusEmbeddings {
    std::vector<std::pair<std::string, EmbeddingVector>> items;  // normalized, ordered by entry id
    std::vector<EntryFailure> failures;
};

CorpusEmbeddings embed_corpus(const Corpus& corpus, const IndexConfig& config, EmbeddingProvider& provider,
                              const EmbeddingOptions& options = {});

}  // namespace cpretrieve
