#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpretrieve/embedding.hpp"

namespace cpretrieve {

inline constexpr int kIndexSchemaVersion = 1;
inline constexpr std::size_t kDefaultTopK = 5;
inline constexpr double kUnitNormTolerance = 1e-9;

struct IndexItem {
    std::string entry_id;
    EmbeddingVector vector;  // unit length

    bool operator==(const IndexItem&) const = default;
};

struct RankedResult {
    std::string entry_id;
    double score = 0.0;  // cosine similarity, clamped to [-1, 1]
    std::size_t rank = 0;  // 1-based

    bool operator==(const RankedResult&) const = default;
};

/// Precomputed unit vectors for one IndexConfig. Immutable once built; queries
/// are an exact scan over every item.
class RetrievalIndex {
public:
    /// Validates dimensions, unit norms and id uniqueness; sorts items by id.
    RetrievalIndex(IndexConfig config, std::string provider_id, std::size_t dimension,
                   std::vector<IndexItem> items);

    const IndexConfig& config() const noexcept { return config_; }
    const std::string& provider_id() const noexcept { return provider_id_; }
    std::size_t dimension() const noexcept { return dimension_; }
    const std::vector<IndexItem>& items() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }

    const IndexItem* find(std::string_view entry_id) const;

    /// Copy with one more item (append-and-resort).
    RetrievalIndex with_item(IndexItem item) const;

    bool operator==(const RetrievalIndex&) const = default;

private:
    IndexConfig config_;
    std::string provider_id_;
    std::size_t dimension_;
    std::vector<IndexItem> items_;
};

/// (a . b) / (|a| |b|), clamped to [-1, 1]. Exactly symmetric.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// The min(k, N) best items, scores non-increasing, exact ties by ascending id.
std::vector<RankedResult> query_top_k(const RetrievalIndex& index, const EmbeddingVector& query,
                                      std::size_t k = kDefaultTopK);

/// 1-based position of target in the full ordering, or nullopt if absent.
std::optional<std::size_t> rank_of(const RetrievalIndex& index, const EmbeddingVector& query,
                                   std::string_view target_entry_id);

struct IndexBuild {
    RetrievalIndex index;
    std::vector<EntryFailure> failures;
};

/// Embeds every entry of corpus under config. Entries that fail are left out
/// of the index and reported.
IndexBuild build_index(const Corpus& corpus, const IndexConfig& config, EmbeddingProvider& provider,
                       const EmbeddingOptions& options = {});

nlohmann::json index_to_json(const RetrievalIndex& index);
RetrievalIndex index_from_json(const nlohmann::json& j);
std::string serialize_index(const RetrievalIndex& index);

void save_index(const RetrievalIndex& index, const std::filesystem::path& path);
RetrievalIndex load_index(const std::filesystem::path& path);

/// Warning text (also logged) when an index built by one provider is served
/// with another; nullopt when they agree.
std::optional<std::string> check_provider(const RetrievalIndex& index, const EmbeddingProvider& provider);

}  // namespace cpretrieve
