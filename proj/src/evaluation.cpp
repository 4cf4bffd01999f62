#include "cpretrieve/evaluation.hpp"

#include <cstdio>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cpretrieve/error.hpp"
#include "cpretrieve/generation.hpp"
#include "parallel.hpp"

namespace cpretrieve {

using nlohmann::json;

std::string_view query_source_name(QuerySource source) noexcept {
    switch (source) {
        case QuerySource::D1: return "D1";
        case QuerySource::D2: return "D2";
        case QuerySource::D3: return "D3";
        case QuerySource::External: return "External";
    }
    return "?";
}

QuerySource parse_query_source(std::string_view text) {
    const auto t = trim(text);
    for (auto s : {QuerySource::D1, QuerySource::D2, QuerySource::D3, QuerySource::External}) {
        const auto name = query_source_name(s);
        if (t.size() == name.size() &&
            std::equal(t.begin(), t.end(), name.begin(), [](char a, char b) { return std::tolower(a) == std::tolower(b); })) {
            return s;
        }
    }
    fail(ErrorKind::Validation, "unknown query set '" + std::string(text) + "' (expected D1, D2, D3 or External)");
}

std::optional<ExpertiseLevel> query_level(QuerySource source) noexcept {
    switch (source) {
        case QuerySource::D1: return ExpertiseLevel::Novice;
        case QuerySource::D2: return ExpertiseLevel::Intermediate;
        case QuerySource::D3: return ExpertiseLevel::Expert;
        case QuerySource::External: return std::nullopt;
    }
    return std::nullopt;
}

namespace {

QuerySource source_for(ExpertiseLevel level) {
    switch (level) {
        case ExpertiseLevel::Novice: return QuerySource::D1;
        case ExpertiseLevel::Intermediate: return QuerySource::D2;
        case ExpertiseLevel::Expert: return QuerySource::D3;
    }
    return QuerySource::External;
}

constexpr std::array<QuerySource, 4> kAllRows = {QuerySource::D1, QuerySource::D2, QuerySource::D3,
                                                 QuerySource::External};

}  // namespace

QuerySet generated_query_set(const Corpus& corpus, ExpertiseLevel level) {
    QuerySet set{source_for(level), std::string(level_code(level)), {}};
    for (const auto& entry : corpus.entries()) {
        if (const auto* text = entry.description(level)) set.queries.push_back({*text, entry.id});
    }
    return set;
}

QuerySet external_queries_from_json(const json& j) {
    QuerySet set;
    set.source = QuerySource::External;
    try {
        set.name = j.value("name", std::string("External"));
        for (const auto& q : j.at("queries")) {
            Query query{q.at("text").get<std::string>(), std::nullopt};
            if (q.contains("truth_id") && !q["truth_id"].is_null()) query.truth_id = q["truth_id"].get<std::string>();
            if (trim(query.text).empty()) fail(ErrorKind::Validation, "external query with empty text");
            set.queries.push_back(std::move(query));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, std::string("malformed external query set: ") + e.what());
    }
    return set;
}

QuerySet load_external_queries(const std::filesystem::path& path) {
    json j;
    const auto text = read_file(path);
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, "cannot parse " + path.string() + ": " + e.what());
    }
    return external_queries_from_json(j);
}

double reciprocal_rank(std::optional<std::size_t> rank, std::size_t k) {
    if (!rank || *rank == 0 || *rank > k) return 0.0;
    return 1.0 / static_cast<double>(*rank);
}

double mean_reciprocal_rank(const std::vector<std::optional<std::size_t>>& ranks, std::size_t k) {
    if (ranks.empty()) fail(ErrorKind::Validation, "MRR of an empty query list is undefined");
    double sum = 0.0;
    for (const auto& r : ranks) sum += reciprocal_rank(r, k);
    return sum / static_cast<double>(ranks.size());
}

bool loo_admissible(QuerySource source, const IndexConfig& config) {
    const auto level = query_level(source);
    return !level || !config.contains(*level);
}

const std::array<std::array<bool, 8>, 4>& published_dash_layout() {
    // columns: SC, SC+D1, SC+D2, SC+D3, SC+D1&2, SC+D1&3, SC+D2&3, SC+D1&2&3
    static constexpr std::array<std::array<bool, 8>, 4> layout = {{
        {false, true, false, false, true, true, false, true},     // D1
        {false, false, true, false, true, false, true, true},     // D2
        {false, false, false, true, false, true, true, true},     // D3
        {false, false, false, false, false, false, false, false},  // External
    }};
    return layout;
}

std::vector<std::string> published_layout_divergences() {
    std::vector<std::string> out;
    const auto& configs = IndexConfig::all();
    for (std::size_t r = 0; r < kAllRows.size(); ++r) {
        for (std::size_t c = 0; c < configs.size(); ++c) {
            const bool dash = published_dash_layout()[r][c];
            if (dash == loo_admissible(kAllRows[r], configs[c])) {
                out.push_back(std::string(query_source_name(kAllRows[r])) + " x " + configs[c].name() +
                              (dash ? ": published dash, rule admits" : ": published value, rule excludes"));
            }
        }
    }
    return out;
}

std::string_view cell_status_name(CellStatus status) noexcept {
    switch (status) {
        case CellStatus::Ok: return "ok";
        case CellStatus::Partial: return "partial";
        case CellStatus::Unavailable: return "unavailable";
    }
    return "?";
}

namespace {

struct EmbeddedQueries {
    std::vector<std::optional<EmbeddingVector>> vectors;
    std::vector<std::string> errors;
};

EmbeddedQueries embed_queries(const QuerySet& set, EmbeddingProvider& provider, const EmbeddingOptions& options) {
    EmbeddedQueries out;
    out.vectors.resize(set.queries.size());
    out.errors.resize(set.queries.size());
    detail::parallel_for(set.queries.size(), options.parallelism, [&](std::size_t i) {
        try {
            out.vectors[i] = embed(set.queries[i].text, provider, options);
        } catch (const std::exception& e) {
            out.errors[i] = e.what();
        }
    });
    return out;
}

EvaluationCell score_cell(const RetrievalIndex& index, const QuerySet& set, const EmbeddedQueries& embedded,
                          std::size_t k) {
    EvaluationCell cell;
    cell.source = set.source;
    cell.query_set = set.name;
    cell.config = index.config().name();
    for (std::size_t i = 0; i < set.queries.size(); ++i) {
        const auto& query = set.queries[i];
        if (!embedded.vectors[i]) {
            cell.failures.push_back({query.text, embedded.errors[i]});
            continue;
        }
        const auto& vec = *embedded.vectors[i];
        if (query.truth_id && index.find(*query.truth_id) != nullptr) {
            cell.ranks.push_back(rank_of(index, vec, *query.truth_id));
        } else {
            cell.unresolved.push_back({query.text, query.truth_id,
                                       query.truth_id ? "truth '" + *query.truth_id + "' is not in the index"
                                                      : "no truth id",
                                       query_top_k(index, vec, k)});
        }
    }
    cell.n_queries = cell.ranks.size();
    if (!cell.ranks.empty()) cell.mrr = mean_reciprocal_rank(cell.ranks, k);
    if (!cell.failures.empty()) {
        cell.status = CellStatus::Partial;
        cell.reason = std::to_string(cell.failures.size()) + " of " + std::to_string(set.queries.size()) +
                      " queries failed to embed";
    }
    return cell;
}

void require_admissible(QuerySource source, const IndexConfig& config) {
    if (!loo_admissible(source, config)) {
        fail(ErrorKind::LooViolation, "leave-one-out violation: " + std::string(query_source_name(source)) +
                                          " queries cannot be evaluated against " + config.name());
    }
}

}  // namespace

EvaluationCell run_cell(const RetrievalIndex& index, const QuerySet& query_set, EmbeddingProvider& provider,
                        const EvaluationOptions& options) {
    require_admissible(query_set.source, index.config());
    return score_cell(index, query_set, embed_queries(query_set, provider, options.embedding), options.k);
}

EvaluationCell run_cell(const Corpus& corpus, const QuerySet& query_set, const IndexConfig& config,
                        EmbeddingProvider& provider, const EvaluationOptions& options) {
    require_admissible(query_set.source, config);
    auto built = build_index(corpus, config, provider, options.embedding);
    if (!built.failures.empty()) {
        EvaluationCell cell;
        cell.source = query_set.source;
        cell.query_set = query_set.name;
        cell.config = config.name();
        cell.status = CellStatus::Unavailable;
        cell.reason = "index " + config.name() + " could not be built: " + built.failures.front().message +
                      (built.failures.size() > 1 ? " (+" + std::to_string(built.failures.size() - 1) + " more)" : "");
        return cell;
    }
    return run_cell(built.index, query_set, provider, options);
}

const EvaluationCell* EvaluationReport::cell(QuerySource row, const std::string& config) const {
    for (const auto& c : cells) {
        if (c.source == row && c.config == config) return &c;
    }
    return nullptr;
}

EvaluationReport run_table(const Corpus& corpus, const std::vector<QuerySource>& rows,
                           const std::optional<QuerySet>& external, EmbeddingProvider& provider,
                           const EvaluationOptions& options) {
    EvaluationReport report;
    report.provider_id = provider.id();
    report.k = options.k;
    report.timestamp = utc_timestamp();
    report.rows = rows;
    const auto& configs = IndexConfig::all();

    // Query sets per row, or the reason the whole row is unavailable.
    std::map<QuerySource, QuerySet> sets;
    std::map<QuerySource, std::string> row_problems;
    std::map<QuerySource, std::string> row_notes;
    for (QuerySource row : rows) {
        if (const auto level = query_level(row)) {
            auto set = generated_query_set(corpus, *level);
            report.row_labels[row] = set.name;
            const auto missing = corpus.size() - set.queries.size();
            if (set.queries.empty()) {
                row_problems[row] = "no entry has a " + std::string(level_code(*level)) + " description";
            } else if (missing > 0) {
                row_notes[row] = std::to_string(missing) + " entries lack a " + std::string(level_code(*level)) +
                                 " description";
            }
            sets.emplace(row, std::move(set));
        } else {
            report.row_labels[row] = external ? external->name : std::string("External");
            if (external) {
                sets.emplace(row, *external);
            } else {
                row_problems[row] = "no external query set supplied";
            }
        }
    }

    // Indices for every config some requested row needs.
    std::map<std::string, std::optional<RetrievalIndex>> indices;
    std::map<std::string, std::string> index_problems;
    for (const auto& config : configs) {
        const bool needed = std::any_of(rows.begin(), rows.end(), [&](QuerySource r) {
            return loo_admissible(r, config) && row_problems.count(r) == 0;
        });
        if (!needed) continue;
        auto built = build_index(corpus, config, provider, options.embedding);
        if (built.failures.empty()) {
            indices[config.name()] = std::move(built.index);
        } else {
            index_problems[config.name()] =
                "index " + config.name() + " unavailable: " + built.failures.front().message +
                (built.failures.size() > 1 ? " (+" + std::to_string(built.failures.size() - 1) + " more)" : "");
        }
    }

    std::map<QuerySource, EmbeddedQueries> embedded;
    for (const auto& [row, set] : sets) {
        if (row_problems.count(row) == 0) embedded[row] = embed_queries(set, provider, options.embedding);
    }

    for (QuerySource row : rows) {
        for (const auto& config : configs) {
            if (!loo_admissible(row, config)) continue;
            const auto name = config.name();
            EvaluationCell cell;
            if (const auto it = row_problems.find(row); it != row_problems.end()) {
                cell.status = CellStatus::Unavailable;
                cell.reason = it->second;
            } else if (const auto ip = index_problems.find(name); ip != index_problems.end()) {
                cell.status = CellStatus::Unavailable;
                cell.reason = ip->second;
            } else {
                cell = score_cell(*indices.at(name), sets.at(row), embedded.at(row), options.k);
                if (const auto note = row_notes.find(row); note != row_notes.end()) {
                    cell.status = CellStatus::Partial;
                    cell.reason = cell.reason.empty() ? note->second : cell.reason + "; " + note->second;
                }
            }
            cell.source = row;
            cell.query_set = report.row_labels[row];
            cell.config = name;
            if (cell.status == CellStatus::Unavailable) {
                spdlog::warn("cell {} x {} unavailable: {}", query_source_name(row), name, cell.reason);
            }
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

namespace {

json ranked_to_json(const std::vector<RankedResult>& results) {
    json out = json::array();
    for (const auto& r : results) out.push_back({{"rank", r.rank}, {"entry_id", r.entry_id}, {"score", r.score}});
    return out;
}

}  // namespace

json report_to_json(const EvaluationReport& report) {
    json excluded = json::array();
    json rows = json::array();
    for (QuerySource row : report.rows) {
        rows.push_back({{"id", query_source_name(row)}, {"label", report.row_labels.at(row)}});
        for (const auto& config : IndexConfig::all()) {
            if (!loo_admissible(row, config)) {
                excluded.push_back({{"query_set", query_source_name(row)}, {"config", config.name()}});
            }
        }
    }

    json cells = json::array();
    for (const auto& c : report.cells) {
        json ranks = json::array();
        for (const auto& r : c.ranks) ranks.push_back(r ? json(*r) : json(nullptr));
        json unresolved = json::array();
        for (const auto& u : c.unresolved) {
            unresolved.push_back({{"text", u.text},
                                  {"truth_id", u.truth_id ? json(*u.truth_id) : json(nullptr)},
                                  {"reason", u.reason},
                                  {"top_k", ranked_to_json(u.top_k)}});
        }
        json failures = json::array();
        for (const auto& f : c.failures) failures.push_back({{"text", f.text}, {"error", f.message}});
        cells.push_back({{"query_set", query_source_name(c.source)},
                         {"label", c.query_set},
                         {"config", c.config},
                         {"status", cell_status_name(c.status)},
                         {"reason", c.reason},
                         {"mrr", c.mrr ? json(*c.mrr) : json(nullptr)},
                         {"n_queries", c.n_queries},
                         {"ranks", std::move(ranks)},
                         {"unresolved", std::move(unresolved)},
                         {"failures", std::move(failures)}});
    }

    json metadata = {
        {"provider_id", report.provider_id},
        {"k", report.k},
        {"timestamp", report.timestamp},
        {"reciprocal_rank_convention",
         "reciprocal rank is 1/rank when the truth entry ranks within the top k, otherwise 0"},
        {"rows", std::move(rows)},
        {"excluded_cells", std::move(excluded)},
        {"published_layout_divergences", published_layout_divergences()},
    };
    return {{"metadata", std::move(metadata)}, {"cells", std::move(cells)}};
}

std::string render_report_table(const EvaluationReport& report) {
    const auto& configs = IndexConfig::all();
    std::vector<std::vector<std::string>> table;
    std::vector<std::string> header = {""};
    for (const auto& c : configs) header.push_back(c.name());
    table.push_back(header);
    for (QuerySource row : report.rows) {
        std::vector<std::string> line = {report.row_labels.at(row)};
        for (const auto& config : configs) {
            if (!loo_admissible(row, config)) {
                line.emplace_back("-");
                continue;
            }
            const auto* cell = report.cell(row, config.name());
            if (cell == nullptr || cell->status == CellStatus::Unavailable || !cell->mrr) {
                line.emplace_back("n/a");
                continue;
            }
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.4f%s", *cell->mrr, cell->status == CellStatus::Partial ? "*" : "");
            line.emplace_back(buf);
        }
        table.push_back(std::move(line));
    }

    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& line : table) {
        for (std::size_t i = 0; i < line.size(); ++i) widths[i] = std::max(widths[i], line[i].size());
    }
    std::ostringstream out;
    for (const auto& line : table) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (i > 0) out << "  ";
            const auto pad = widths[i] - line[i].size();
            if (i == 0) {
                out << line[i] << std::string(pad, ' ');
            } else {
                out << std::string(pad, ' ') << line[i];
            }
        }
        out << '\n';
    }
    out << "MRR over the top " << report.k << " (reciprocal rank 0 beyond rank " << report.k
        << "); '-' = leave-one-out exclusion";
    if (std::any_of(report.cells.begin(), report.cells.end(),
                    [](const EvaluationCell& c) { return c.status == CellStatus::Partial; })) {
        out << "; '*' = partial cell";
    }
    out << '\n';
    const auto divergences = published_layout_divergences();
    for (const auto& d : divergences) out << "layout divergence from published table: " << d << '\n';
    return out.str();
}

}  // namespace cpretrieve
