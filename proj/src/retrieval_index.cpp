#include "cpretrieve/retrieval_index.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "cpretrieve/error.hpp"

namespace cpretrieve {

using nlohmann::json;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

// Shared by cosine_similarity and the scan so both produce identical bits.
double cosine_with_norms(const EmbeddingVector& a, double norm_a, const EmbeddingVector& b, double norm_b) {
    return clamp_unit(dot(a.values(), b.values()) / (norm_a * norm_b));
}

void check_query(const RetrievalIndex& index, const EmbeddingVector& query) {
    if (query.dimension() != index.dimension()) {
        fail(ErrorKind::DimensionMismatch, "query has dimension " + std::to_string(query.dimension()) +
                                               " but the index has dimension " + std::to_string(index.dimension()));
    }
}

struct Scored {
    const IndexItem* item;
    double score;
};

// Higher score first; equal scores by ascending id.
bool ranks_before(const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item->entry_id < b.item->entry_id;
}

std::vector<Scored> score_all(const RetrievalIndex& index, const EmbeddingVector& query) {
    check_query(index, query);
    const double qn = query.norm();
    if (!(qn > 0.0)) fail(ErrorKind::Validation, "query vector has zero norm");
    std::vector<Scored> scored;
    scored.reserve(index.size());
    for (const auto& item : index.items()) {
        scored.push_back({&item, cosine_with_norms(query, qn, item.vector, item.vector.norm())});
    }
    return scored;
}

}  // namespace

RetrievalIndex::RetrievalIndex(IndexConfig config, std::string provider_id, std::size_t dimension,
                               std::vector<IndexItem> items)
    : config_(std::move(config)), provider_id_(std::move(provider_id)), dimension_(dimension),
      items_(std::move(items)) {
    if (dimension_ == 0) fail(ErrorKind::Validation, "index dimension must be positive");
    for (const auto& item : items_) {
        if (item.vector.dimension() != dimension_) {
            fail(ErrorKind::DimensionMismatch, "index item '" + item.entry_id + "' has dimension " +
                                                   std::to_string(item.vector.dimension()) + ", expected " +
                                                   std::to_string(dimension_));
        }
        if (std::abs(item.vector.norm() - 1.0) > kUnitNormTolerance) {
            fail(ErrorKind::Validation, "index item '" + item.entry_id + "' is not unit length");
        }
    }
    std::sort(items_.begin(), items_.end(),
              [](const IndexItem& a, const IndexItem& b) { return a.entry_id < b.entry_id; });
    const auto dup = std::adjacent_find(items_.begin(), items_.end(), [](const IndexItem& a, const IndexItem& b) {
        return a.entry_id == b.entry_id;
    });
    if (dup != items_.end()) fail(ErrorKind::Conflict, "duplicate index item '" + dup->entry_id + "'");
}

const IndexItem* RetrievalIndex::find(std::string_view entry_id) const {
    const auto it = std::lower_bound(items_.begin(), items_.end(), entry_id,
                                     [](const IndexItem& item, std::string_view key) { return item.entry_id < key; });
    return (it != items_.end() && it->entry_id == entry_id) ? &*it : nullptr;
}

RetrievalIndex RetrievalIndex::with_item(IndexItem item) const {
    auto items = items_;
    items.push_back(std::move(item));
    return RetrievalIndex(config_, provider_id_, dimension_, std::move(items));
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension()) {
        fail(ErrorKind::DimensionMismatch, "cosine similarity of vectors with dimensions " +
                                               std::to_string(a.dimension()) + " and " + std::to_string(b.dimension()));
    }
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) fail(ErrorKind::Validation, "cosine similarity of a zero-norm vector");
    return cosine_with_norms(a, na, b, nb);
}

std::vector<RankedResult> query_top_k(const RetrievalIndex& index, const EmbeddingVector& query, std::size_t k) {
    if (k == 0) fail(ErrorKind::Validation, "k must be at least 1");
    auto scored = score_all(index, query);
    const auto take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                      ranks_before);
    std::vector<RankedResult> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back({scored[i].item->entry_id, scored[i].score, i + 1});
    return out;
}

std::optional<std::size_t> rank_of(const RetrievalIndex& index, const EmbeddingVector& query,
                                   std::string_view target_entry_id) {
    const auto scored = score_all(index, query);
    const auto target = std::find_if(scored.begin(), scored.end(),
                                     [&](const Scored& s) { return s.item->entry_id == target_entry_id; });
    if (target == scored.end()) return std::nullopt;
    const auto ahead = std::count_if(scored.begin(), scored.end(),
                                     [&](const Scored& s) { return ranks_before(s, *target); });
    return static_cast<std::size_t>(ahead) + 1;
}

IndexBuild build_index(const Corpus& corpus, const IndexConfig& config, EmbeddingProvider& provider,
                       const EmbeddingOptions& options) {
    auto embeddings = embed_corpus(corpus, config, provider, options);
    std::vector<IndexItem> items;
    items.reserve(embeddings.items.size());
    for (auto& [id, vec] : embeddings.items) items.push_back({std::move(id), std::move(vec)});
    return {RetrievalIndex(config, provider.id(), provider.dimension(), std::move(items)),
            std::move(embeddings.failures)};
}

json index_to_json(const RetrievalIndex& index) {
    json items = json::array();
    for (const auto& item : index.items()) {
        items.push_back({{"entry_id", item.entry_id},
                         {"vector", std::vector<double>(item.vector.values().begin(), item.vector.values().end())}});
    }
    return {{"schema_version", kIndexSchemaVersion},
            {"config_name", index.config().name()},
            {"provider_id", index.provider_id()},
            {"dimension", index.dimension()},
            {"items", std::move(items)}};
}

RetrievalIndex index_from_json(const json& j) {
    if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
        j["schema_version"].get<int>() != kIndexSchemaVersion) {
        fail(ErrorKind::VersionedFormat, "unsupported index schema_version " +
                                             (j.is_object() && j.contains("schema_version") ? j["schema_version"].dump()
                                                                                            : std::string("(missing)")));
    }
    try {
        const auto dimension = j.at("dimension").get<std::size_t>();
        std::vector<IndexItem> items;
        for (const auto& item : j.at("items")) {
            const auto id = item.at("entry_id").get<std::string>();
            auto values = item.at("vector").get<std::vector<double>>();
            if (values.size() != dimension) {
                fail(ErrorKind::DimensionMismatch, "index item '" + id + "' has " + std::to_string(values.size()) +
                                                       " components, expected " + std::to_string(dimension));
            }
            items.push_back({id, EmbeddingVector(std::move(values))});
        }
        return RetrievalIndex(IndexConfig::parse(j.at("config_name").get<std::string>()),
                              j.at("provider_id").get<std::string>(), dimension, std::move(items));
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, std::string("malformed index document: ") + e.what());
    }
}

std::string serialize_index(const RetrievalIndex& index) { return index_to_json(index).dump() + "\n"; }

void save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_index(index));
}

RetrievalIndex load_index(const std::filesystem::path& path) {
    json j;
    const auto text = read_file(path);
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, "cannot parse " + path.string() + ": " + e.what());
    }
    return index_from_json(j);
}

std::optional<std::string> check_provider(const RetrievalIndex& index, const EmbeddingProvider& provider) {
    if (index.provider_id() == provider.id() && index.dimension() == provider.dimension()) return std::nullopt;
    auto message = "index was built with provider '" + index.provider_id() + "' (dimension " +
                   std::to_string(index.dimension()) + ") but the active provider is '" + provider.id() +
                   "' (dimension " + std::to_string(provider.dimension()) +
                   "); queries must use the provider that built the index";
    spdlog::warn("{}", message);
    return message;
}

}  // namespace cpretrieve
