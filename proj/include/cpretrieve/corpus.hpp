#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace cpretrieve {

/// Audience level of a generated description. Declaration order is the
/// canonical concatenation order (Novice < Intermediate < Expert).
enum class ExpertiseLevel { Novice = 1, Intermediate = 2, Expert = 3 };

inline constexpr std::array<ExpertiseLevel, 3> kAllLevels = {
    ExpertiseLevel::Novice, ExpertiseLevel::Intermediate, ExpertiseLevel::Expert};

/// "D1", "D2", "D3".
std::string_view level_code(ExpertiseLevel level) noexcept;
/// "Novice", "Intermediate", "Expert".
std::string_view level_name(ExpertiseLevel level) noexcept;
/// Accepts the short code ("D2") or the name, case-insensitively.
ExpertiseLevel parse_level(std::string_view text);
/// Comma-separated list, e.g. "D1,D3". Result is sorted and deduplicated.
std::vector<ExpertiseLevel> parse_level_list(std::string_view text);

struct SourceFile {
    std::string filename;
    std::string content;

    bool operator==(const SourceFile&) const = default;
};

struct ModelEntry {
    std::string id;
    std::string name;
    std::vector<SourceFile> source_files;
    std::map<ExpertiseLevel, std::string> descriptions;
    std::string provenance;

    const std::string* description(ExpertiseLevel level) const;

    bool operator==(const ModelEntry&) const = default;
};

bool is_valid_id(std::string_view id);

/// Throws Error{Validation} naming the offending field.
void validate_entry(const ModelEntry& entry);

/// Immutable snapshot of the problem corpus. Mutation goes through
/// add_entry / with_entries, which return a new snapshot with a bumped version.
class Corpus {
public:
    Corpus() = default;
    Corpus(std::vector<ModelEntry> entries, std::int64_t version);

    const std::vector<ModelEntry>& entries() const noexcept { return entries_; }
    std::int64_t version() const noexcept { return version_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    const ModelEntry* find(std::string_view id) const;

    /// Same entries replaced wholesale (e.g. after description generation); version + 1.
    Corpus with_entries(std::vector<ModelEntry> entries) const;

    bool operator==(const Corpus&) const = default;

private:
    std::vector<ModelEntry> entries_;  // sorted by id
    std::int64_t version_ = 1;
};

/// One entry per subdirectory of root. Model files are the `*.mzn` files of
/// each subdirectory, sorted by filename. An optional meta.json supplies
/// {"name", "provenance"}.
Corpus ingest_directory(const std::filesystem::path& root);

/// Returns a new corpus containing entry. Conflict on duplicate id.
Corpus add_entry(const Corpus& corpus, ModelEntry entry);

inline constexpr int kCorpusSchemaVersion = 1;

nlohmann::json entry_to_json(const ModelEntry& entry);
ModelEntry entry_from_json(const nlohmann::json& j);

nlohmann::json corpus_to_json(const Corpus& corpus);
Corpus corpus_from_json(const nlohmann::json& j);

/// Serialized form written by save_corpus, byte-stable for a given corpus.
std::string serialize_corpus(const Corpus& corpus);

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames over path.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);
std::string read_file(const std::filesystem::path& path);

bool is_valid_utf8(std::string_view text);
std::string_view trim(std::string_view text);

}  // namespace cpretrieve
