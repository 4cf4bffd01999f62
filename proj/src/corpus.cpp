#include "cpretrieve/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "cpretrieve/error.hpp"

namespace cpretrieve {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Conflict: return "conflict";
        case ErrorKind::NotFound: return "not_found";
        case ErrorKind::Io: return "io";
        case ErrorKind::VersionedFormat: return "versioned_format";
        case ErrorKind::Configuration: return "configuration";
        case ErrorKind::Provider: return "provider";
        case ErrorKind::ProviderContract: return "provider_contract";
        case ErrorKind::Generation: return "generation";
        case ErrorKind::LooViolation: return "loo_violation";
        case ErrorKind::DimensionMismatch: return "dimension_mismatch";
    }
    return "unknown";
}

std::string_view level_code(ExpertiseLevel level) noexcept {
    switch (level) {
        case ExpertiseLevel::Novice: return "D1";
        case ExpertiseLevel::Intermediate: return "D2";
        case ExpertiseLevel::Expert: return "D3";
    }
    return "D?";
}

std::string_view level_name(ExpertiseLevel level) noexcept {
    switch (level) {
        case ExpertiseLevel::Novice: return "Novice";
        case ExpertiseLevel::Intermediate: return "Intermediate";
        case ExpertiseLevel::Expert: return "Expert";
    }
    return "?";
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

ExpertiseLevel parse_level(std::string_view text) {
    const std::string t = lower(trim(text));
    for (ExpertiseLevel level : kAllLevels) {
        if (t == lower(level_code(level)) || t == lower(level_name(level))) return level;
    }
    fail(ErrorKind::Validation, "unknown expertise level '" + std::string(text) + "'");
}

std::vector<ExpertiseLevel> parse_level_list(std::string_view text) {
    std::vector<ExpertiseLevel> levels;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = std::min(text.find(',', start), text.size());
        const auto piece = trim(text.substr(start, comma - start));
        if (!piece.empty()) levels.push_back(parse_level(piece));
        start = comma + 1;
    }
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    return levels;
}

const std::string* ModelEntry::description(ExpertiseLevel level) const {
    const auto it = descriptions.find(level);
    return it == descriptions.end() ? nullptr : &it->second;
}

std::string_view trim(std::string_view text) {
    const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
    while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
    return text;
}

bool is_valid_id(std::string_view id) {
    if (id.empty()) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    });
}

bool is_valid_utf8(std::string_view text) {
    std::size_t i = 0;
    const auto n = text.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(text[i]);
        std::size_t len = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + len > n) return false;
        for (std::size_t k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(text[i + k]);
            if ((cc & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        // overlong encodings, surrogates, out of range
        if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
            (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
            return false;
        }
        i += len;
    }
    return true;
}

void validate_entry(const ModelEntry& entry) {
    if (!is_valid_id(entry.id)) {
        fail(ErrorKind::Validation,
             "invalid entry id '" + entry.id + "': must be non-empty and match [a-z0-9_-]+");
    }
    if (entry.source_files.empty()) {
        fail(ErrorKind::Validation, "entry '" + entry.id + "' has no source files");
    }
    for (const auto& file : entry.source_files) {
        if (file.filename.empty()) {
            fail(ErrorKind::Validation, "entry '" + entry.id + "' has a source file without a name");
        }
        if (trim(file.content).empty()) {
            fail(ErrorKind::Validation,
                 "entry '" + entry.id + "': source file '" + file.filename + "' is empty");
        }
        if (!is_valid_utf8(file.content)) {
            fail(ErrorKind::Validation,
                 "entry '" + entry.id + "': source file '" + file.filename + "' is not valid UTF-8");
        }
    }
    for (const auto& [level, text] : entry.descriptions) {
        if (trim(text).empty()) {
            fail(ErrorKind::Validation, "entry '" + entry.id + "': description " +
                                            std::string(level_code(level)) + " is empty");
        }
    }
}

namespace {

void sort_entries(std::vector<ModelEntry>& entries) {
    std::sort(entries.begin(), entries.end(),
              [](const ModelEntry& a, const ModelEntry& b) { return a.id < b.id; });
}

void check_unique(const std::vector<ModelEntry>& sorted) {
    const auto dup = std::adjacent_find(
        sorted.begin(), sorted.end(),
        [](const ModelEntry& a, const ModelEntry& b) { return a.id == b.id; });
    if (dup != sorted.end()) {
        fail(ErrorKind::Conflict, "duplicate entry id '" + dup->id + "'");
    }
}

}  // namespace

Corpus::Corpus(std::vector<ModelEntry> entries, std::int64_t version)
    : entries_(std::move(entries)), version_(version) {
    sort_entries(entries_);
    check_unique(entries_);
    for (const auto& e : entries_) validate_entry(e);
}

const ModelEntry* Corpus::find(std::string_view id) const {
    const auto it = std::lower_bound(
        entries_.begin(), entries_.end(), id,
        [](const ModelEntry& e, std::string_view key) { return e.id < key; });
    return (it != entries_.end() && it->id == id) ? &*it : nullptr;
}

Corpus Corpus::with_entries(std::vector<ModelEntry> entries) const {
    return Corpus(std::move(entries), version_ + 1);
}

Corpus add_entry(const Corpus& corpus, ModelEntry entry) {
    validate_entry(entry);
    if (corpus.find(entry.id) != nullptr) {
        fail(ErrorKind::Conflict, "entry '" + entry.id + "' already exists");
    }
    auto entries = corpus.entries();
    entries.push_back(std::move(entry));
    return corpus.with_entries(std::move(entries));
}

std::string read_file(const fs::path& path) {
    std::error_code ec;
    if (!fs::exists(path, ec)) {
        fail(ErrorKind::NotFound, "file not found: " + path.string());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(ErrorKind::Io, "read failure on " + path.string());
    return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view data) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        out.flush();
        if (!out) fail(ErrorKind::Io, "write failure on " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        fail(ErrorKind::Io, "cannot replace " + path.string());
    }
}

Corpus ingest_directory(const fs::path& root) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        fail(ErrorKind::Io, "cannot read corpus directory " + root.string());
    }

    std::vector<fs::path> problem_dirs;
    for (fs::directory_iterator it(root, ec), end; !ec && it != end; it.increment(ec)) {
        if (it->is_directory()) problem_dirs.push_back(it->path());
    }
    if (ec) fail(ErrorKind::Io, "cannot read corpus directory " + root.string() + ": " + ec.message());

    std::vector<ModelEntry> entries;
    entries.reserve(problem_dirs.size());
    for (const auto& dir : problem_dirs) {
        ModelEntry entry;
        entry.id = dir.filename().string();
        if (!is_valid_id(entry.id)) {
            fail(ErrorKind::Validation,
                 "directory '" + dir.string() + "' is not a valid problem id ([a-z0-9_-]+)");
        }

        std::vector<fs::path> model_files;
        for (const auto& f : fs::directory_iterator(dir)) {
            if (f.is_regular_file() && f.path().extension() == ".mzn") model_files.push_back(f.path());
        }
        if (model_files.empty()) {
            fail(ErrorKind::Validation, "directory '" + dir.string() + "' contains no model files");
        }
        std::sort(model_files.begin(), model_files.end(),
                  [](const fs::path& a, const fs::path& b) {
                      return a.filename().string() < b.filename().string();
                  });
        for (const auto& f : model_files) {
            auto content = read_file(f);
            if (!is_valid_utf8(content)) {
                fail(ErrorKind::Validation, "file '" + f.string() + "' is not valid UTF-8");
            }
            entry.source_files.push_back({f.filename().string(), std::move(content)});
        }

        entry.name = entry.id;
        entry.provenance = "unknown";
        const auto meta_path = dir / "meta.json";
        if (fs::exists(meta_path)) {
            json meta;
            try {
                meta = json::parse(read_file(meta_path));
            } catch (const json::exception& e) {
                fail(ErrorKind::Validation, "malformed " + meta_path.string() + ": " + e.what());
            }
            if (meta.contains("name")) entry.name = meta.at("name").get<std::string>();
            if (meta.contains("provenance")) entry.provenance = meta.at("provenance").get<std::string>();
        }
        validate_entry(entry);
        entries.push_back(std::move(entry));
    }
    return Corpus(std::move(entries), 1);
}

json entry_to_json(const ModelEntry& entry) {
    json files = json::array();
    for (const auto& f : entry.source_files) {
        files.push_back({{"filename", f.filename}, {"content", f.content}});
    }
    json descriptions = json::object();
    for (const auto& [level, text] : entry.descriptions) {
        descriptions[std::string(level_code(level))] = text;
    }
    return {{"id", entry.id},
            {"name", entry.name},
            {"provenance", entry.provenance},
            {"source_files", std::move(files)},
            {"descriptions", std::move(descriptions)}};
}

ModelEntry entry_from_json(const json& j) {
    ModelEntry entry;
    try {
        entry.id = j.at("id").get<std::string>();
        entry.name = j.value("name", entry.id);
        entry.provenance = j.value("provenance", std::string("unknown"));
        for (const auto& f : j.at("source_files")) {
            entry.source_files.push_back(
                {f.at("filename").get<std::string>(), f.at("content").get<std::string>()});
        }
        if (j.contains("descriptions") && !j.at("descriptions").is_null()) {
            for (const auto& [code, text] : j.at("descriptions").items()) {
                if (text.is_null()) continue;
                entry.descriptions[parse_level(code)] = text.get<std::string>();
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, std::string("malformed model entry: ") + e.what());
    }
    return entry;
}

json corpus_to_json(const Corpus& corpus) {
    json entries = json::array();
    for (const auto& e : corpus.entries()) entries.push_back(entry_to_json(e));
    return {{"schema_version", kCorpusSchemaVersion},
            {"version", corpus.version()},
            {"entries", std::move(entries)}};
}

Corpus corpus_from_json(const json& j) {
    if (!j.is_object() || !j.contains("schema_version")) {
        fail(ErrorKind::VersionedFormat, "corpus document has no schema_version");
    }
    const auto schema = j.at("schema_version");
    if (!schema.is_number_integer() || schema.get<int>() != kCorpusSchemaVersion) {
        fail(ErrorKind::VersionedFormat, "unsupported corpus schema_version " + schema.dump() +
                                             " (expected " + std::to_string(kCorpusSchemaVersion) + ")");
    }
    std::vector<ModelEntry> entries;
    std::int64_t version = 1;
    try {
        version = j.at("version").get<std::int64_t>();
        for (const auto& e : j.at("entries")) entries.push_back(entry_from_json(e));
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, std::string("malformed corpus document: ") + e.what());
    }
    return Corpus(std::move(entries), version);
}

std::string serialize_corpus(const Corpus& corpus) {
    return corpus_to_json(corpus).dump(2) + "\n";
}

void save_corpus(const Corpus& corpus, const fs::path& path) {
    write_file_atomic(path, serialize_corpus(corpus));
}

Corpus load_corpus(const fs::path& path) {
    const auto text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, "cannot parse " + path.string() + ": " + e.what());
    }
    return corpus_from_json(j);
}

}  // namespace cpretrieve
