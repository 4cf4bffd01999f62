#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cpretrieve/corpus.hpp"
#include "cpretrieve/embedding.hpp"
#include "cpretrieve/retrieval_index.hpp"

namespace cpretrieve {

/// Rows of the evaluation table: the three generated description levels
/// used as queries, plus a user-supplied set of human-written queries.
enum class QuerySource { D1, D2, D3, External };

std::string_view query_source_name(QuerySource source) noexcept;
QuerySource parse_query_source(std::string_view text);
/// The level a generated row draws its queries from; nullopt for External.
std::optional<ExpertiseLevel> query_level(QuerySource source) noexcept;

struct Query {
    std::string text;
    std::optional<std::string> truth_id;
};

struct QuerySet {
    QuerySource source = QuerySource::External;
    std::string name;  // display label, e.g. the external file's "name"
    std::vector<Query> queries;
};

/// One query per entry that has a description at level; truth = that entry.
QuerySet generated_query_set(const Corpus& corpus, ExpertiseLevel level);

/// {"name": "...", "queries": [{"text": "...", "truth_id": "id" | null}]}
QuerySet load_external_queries(const std::filesystem::path& path);
QuerySet external_queries_from_json(const nlohmann::json& j);

/// 1/rank when rank is present and <= k, else 0.
double reciprocal_rank(std::optional<std::size_t> rank, std::size_t k = kDefaultTopK);

/// Mean of reciprocal_rank over ranks. Throws Error{Validation} when empty.
double mean_reciprocal_rank(const std::vector<std::optional<std::size_t>>& ranks, std::size_t k = kDefaultTopK);

/// Leave-one-out rule: a generated row may not query an index that embeds
/// its own level. External queries are admissible everywhere.
bool loo_admissible(QuerySource source, const IndexConfig& config);

/// Dash layout of the published results table, row-major over
/// {D1, D2, D3, External} x IndexConfig::all(); true = dash.
const std::array<std::array<bool, 8>, 4>& published_dash_layout();

/// Cells where loo_admissible disagrees with published_dash_layout(), as
/// "<row> x <config>" strings. Empty when the rule reproduces the table.
std::vector<std::string> published_layout_divergences();

enum class CellStatus { Ok, Partial, Unavailable };
std::string_view cell_status_name(CellStatus status) noexcept;

/// Query that does not contribute to MRR: no truth id, or a truth id missing
/// from the index. Its top-k list is kept for inspection.
struct UnresolvedQuery {
    std::string text;
    std::optional<std::string> truth_id;
    std::string reason;
    std::vector<RankedResult> top_k;
};

struct QueryFailure {
    std::string text;
    std::string message;
};

struct EvaluationCell {
    QuerySource source = QuerySource::External;
    std::string query_set;  // display name
    std::string config;
    CellStatus status = CellStatus::Ok;
    std::string reason;               // for Unavailable / Partial
    std::optional<double> mrr;        // nullopt when no query was scorable
    std::size_t n_queries = 0;        // queries contributing to MRR
    std::vector<std::optional<std::size_t>> ranks;  // full-ranking position per scored query
    std::vector<UnresolvedQuery> unresolved;
    std::vector<QueryFailure> failures;
};

struct EvaluationOptions {
    std::size_t k = kDefaultTopK;
    EmbeddingOptions embedding;
};

/// Scores query_set against a prebuilt index. Throws Error{LooViolation}
/// for an inadmissible (row, config) pair.
EvaluationCell run_cell(const RetrievalIndex& index, const QuerySet& query_set, EmbeddingProvider& provider,
                        const EvaluationOptions& options = {});

/// Builds the index for config from corpus, then scores query_set.
EvaluationCell run_cell(const Corpus& corpus, const QuerySet& query_set, const IndexConfig& config,
                        EmbeddingProvider& provider, const EvaluationOptions& options = {});

struct EvaluationReport {
    std::string provider_id;
    std::size_t k = kDefaultTopK;
    std::string timestamp;
    std::vector<QuerySource> rows;
    std::map<QuerySource, std::string> row_labels;
    std::vector<EvaluationCell> cells;  // admissible cells only, row-major

    const EvaluationCell* cell(QuerySource row, const std::string& config) const;
};

/// Every admissible (row, config) cell. Rows whose generated level is
/// missing in some entries, and configs that cannot be built, give
/// Unavailable cells with a reason rather than aborting the run.
EvaluationReport run_table(const Corpus& corpus, const std::vector<QuerySource>& rows,
                           const std::optional<QuerySet>& external, EmbeddingProvider& provider,
                           const EvaluationOptions& options = {});

nlohmann::json report_to_json(const EvaluationReport& report);
/// Aligned text table, "-" at excluded cells, "n/a" at unavailable ones.
std::string render_report_table(const EvaluationReport& report);

}  // namespace cpretrieve
