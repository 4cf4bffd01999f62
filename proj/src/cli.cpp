#include "cpretrieve/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cpretrieve/corpus.hpp"
#include "cpretrieve/embedding.hpp"
#include "cpretrieve/error.hpp"
#include "cpretrieve/evaluation.hpp"
#include "cpretrieve/generation.hpp"
#include "cpretrieve/retrieval_index.hpp"
#include "cpretrieve/service.hpp"
#include "cpretrieve/settings.hpp"

namespace cpretrieve::cli {

using nlohmann::json;

namespace {

struct Common {
    std::string settings_path;
    bool json_output = false;
};

Settings load_common(const Common& common) {
    return common.settings_path.empty() ? Settings{} : load_settings(common.settings_path);
}

std::string format_score(double score) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", score);
    return buf;
}

// ---- ingest ----------------------------------------------------------------

struct IngestArgs {
    std::string root;
    std::string out;
};

int do_ingest(const IngestArgs& a, const Common& common, std::ostream& out) {
    const auto corpus = ingest_directory(a.root);
    save_corpus(corpus, a.out);
    if (common.json_output) {
        out << json{{"entries", corpus.size()}, {"version", corpus.version()}, {"out", a.out}}.dump() << '\n';
    } else {
        out << "ingested " << corpus.size() << " entries\n";
    }
    return kOk;
}

// ---- describe --------------------------------------------------------------

struct DescribeArgs {
    std::string corpus;
    std::string out;
    std::string levels = "D1,D2,D3";
    bool force = false;
    std::string provider;
    std::string canned;
    std::string cache;
    int parallel = 4;
};

int do_describe(const DescribeArgs& a, const Common& common, std::ostream& out, std::ostream& err) {
    auto settings = load_common(common);
    if (!a.canned.empty()) settings.canned_descriptions = a.canned;
    auto generator = make_generator(settings, a.provider);
    if (!generator) fail(ErrorKind::Configuration, "describe needs a generation provider (stub or remote)");

    const auto corpus = load_corpus(a.corpus);
    GenerationCache cache;
    if (!a.cache.empty()) cache.load(a.cache);
    GenerationOptions options;
    options.force = a.force;
    options.parallelism = a.parallel;
    options.retry = settings.retry;
    const auto result = generate_all(corpus, parse_level_list(a.levels), *generator, cache, options);

    const std::string target = a.out.empty() ? a.corpus : a.out;
    save_corpus(result.corpus, target);
    if (!a.cache.empty()) cache.save(a.cache);

    if (common.json_output) {
        json failures = json::array();
        for (const auto& f : result.failures) {
            failures.push_back({{"entry_id", f.entry_id}, {"level", level_code(f.level)}, {"error", f.message}});
        }
        out << json{{"generated", result.generated},
                    {"version", result.corpus.version()},
                    {"failures", std::move(failures)}}
                   .dump()
            << '\n';
    } else {
        out << "generated " << result.generated << " descriptions (" << result.failures.size() << " failed)\n";
    }
    for (const auto& f : result.failures) {
        err << "error: " << f.entry_id << " " << level_code(f.level) << ": " << f.message << '\n';
    }
    return result.failures.empty() ? kOk : kPartialFailure;
}

// ---- embed -----------------------------------------------------------------

struct EmbedArgs {
    std::string corpus;
    std::string config = "SC+D2";
    std::string provider;
    std::size_t dimension = 0;
    std::string out;
};

int do_embed(const EmbedArgs& a, const Common& common, std::ostream& out, std::ostream& err) {
    const auto settings = load_common(common);
    const auto config = IndexConfig::parse(a.config);
    auto embedder = make_embedder(settings, a.provider, a.dimension);
    const auto corpus = load_corpus(a.corpus);
    const auto built = build_index(corpus, config, *embedder, settings.embedding);
    save_index(built.index, a.out);

    if (common.json_output) {
        json failures = json::array();
        for (const auto& f : built.failures) failures.push_back({{"entry_id", f.entry_id}, {"error", f.message}});
        out << json{{"config", config.name()},
                    {"provider", embedder->id()},
                    {"dimension", embedder->dimension()},
                    {"items", built.index.size()},
                    {"failures", std::move(failures)}}
                   .dump()
            << '\n';
    } else {
        out << "embedded " << built.index.size() << " entries with " << embedder->id() << " ("
            << config.name() << ", d=" << embedder->dimension() << ")\n";
    }
    for (const auto& f : built.failures) err << "error: " << f.entry_id << ": " << f.message << '\n';
    return built.failures.empty() ? kOk : kPartialFailure;
}

// ---- query -----------------------------------------------------------------

struct QueryArgs {
    std::string text;
    std::string index;
    std::string corpus;
    std::string provider;
    std::size_t k = kDefaultTopK;
};

int do_query(const QueryArgs& a, const Common& common, std::ostream& out, std::ostream& err) {
    const auto settings = load_common(common);
    const auto index = load_index(a.index);
    // fallback dimension follows the index unless the settings say otherwise
    auto embedder = make_embedder(settings, a.provider,
                                  (a.provider == "fallback" || (a.provider.empty() && settings.embedding_provider == "fallback"))
                                      ? index.dimension()
                                      : 0);
    if (const auto warning = check_provider(index, *embedder)) err << "warning: " << *warning << '\n';

    std::optional<Corpus> corpus;
    if (!a.corpus.empty()) corpus = load_corpus(a.corpus);

    const auto results = query_top_k(index, embed(a.text, *embedder, settings.embedding), a.k);
    if (common.json_output) {
        json items = json::array();
        for (const auto& r : results) {
            const auto* entry = corpus ? corpus->find(r.entry_id) : nullptr;
            items.push_back({{"rank", r.rank},
                             {"entry_id", r.entry_id},
                             {"name", entry ? entry->name : r.entry_id},
                             {"score", r.score}});
        }
        out << json{{"query", a.text}, {"config", index.config().name()}, {"provider", embedder->id()},
                    {"results", std::move(items)}}
                   .dump()
            << '\n';
    } else {
        for (const auto& r : results) out << r.rank << ". " << r.entry_id << " (" << format_score(r.score) << ")\n";
    }
    return kOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string corpus;
    std::string provider;
    std::size_t dimension = 0;
    std::string rows;
    std::string external;
    std::size_t k = kDefaultTopK;
    std::string out;
};

int do_eval(const EvalArgs& a, const Common& common, std::ostream& out) {
    const auto settings = load_common(common);
    auto embedder = make_embedder(settings, a.provider, a.dimension);
    const auto corpus = load_corpus(a.corpus);

    std::optional<QuerySet> external;
    if (!a.external.empty()) external = load_external_queries(a.external);

    std::vector<QuerySource> rows;
    const std::string row_spec = !a.rows.empty() ? a.rows : (external ? "D1,D2,D3,External" : "D1,D2,D3");
    for (std::size_t start = 0; start <= row_spec.size();) {
        const auto comma = std::min(row_spec.find(',', start), row_spec.size());
        const auto piece = trim(std::string_view(row_spec).substr(start, comma - start));
        if (!piece.empty()) {
            const auto source = parse_query_source(piece);
            if (std::find(rows.begin(), rows.end(), source) == rows.end()) rows.push_back(source);
        }
        start = comma + 1;
    }
    if (std::find(rows.begin(), rows.end(), QuerySource::External) != rows.end() && !external) {
        fail(ErrorKind::Validation, "row External requires --external <queries.json>");
    }

    EvaluationOptions options;
    options.k = a.k;
    options.embedding = settings.embedding;
    const auto report = run_table(corpus, rows, external, *embedder, options);
    const auto report_json = report_to_json(report);
    if (!a.out.empty()) write_file_atomic(a.out, report_json.dump(2) + "\n");

    if (common.json_output) {
        out << report_json.dump(2) << '\n';
    } else {
        out << render_report_table(report);
    }
    const bool degraded = std::any_of(report.cells.begin(), report.cells.end(),
                                      [](const EvaluationCell& c) { return c.status != CellStatus::Ok; });
    return degraded ? kPartialFailure : kOk;
}

// ---- serve -----------------------------------------------------------------

struct ServeArgs {
    std::string host = "0.0.0.0";
    int port = 8080;
    std::string corpus;
    std::string index;
    std::string config;
    std::string provider;
    std::size_t dimension = 0;
    std::size_t k_default = kDefaultTopK;
    std::string generator;
    std::string canned;
    std::string admin_token_env;
    std::string static_dir;
    std::string cors_origin = "*";
};

int do_serve(const ServeArgs& a, const Common& common, std::ostream& out) {
    auto settings = load_common(common);
    if (!a.canned.empty()) settings.canned_descriptions = a.canned;

    auto corpus = load_corpus(a.corpus);
    std::optional<RetrievalIndex> index;
    if (!a.index.empty()) index = load_index(a.index);
    const auto config = !a.config.empty() ? IndexConfig::parse(a.config)
                                          : (index ? index->config() : IndexConfig::parse("SC+D2"));
    if (index && !(index->config() == config)) {
        fail(ErrorKind::Validation, "index " + a.index + " holds " + index->config().name() + " but --config is " +
                                        config.name());
    }

    const bool fallback = a.provider == "fallback" || (a.provider.empty() && settings.embedding_provider == "fallback");
    const std::size_t dimension = a.dimension != 0 ? a.dimension : (fallback && index ? index->dimension() : 0);
    auto embedder = make_embedder(settings, a.provider, dimension);
    auto generator = make_generator(settings, a.generator);

    ServiceOptions options;
    options.k_default = a.k_default;
    options.corpus_path = a.corpus;
    if (!a.index.empty()) options.index_path = a.index;
    options.embedding = settings.embedding;
    options.generation_retry = settings.retry;
    options.cors_origin = a.cors_origin;
    options.request_log = stdout_request_log();
    if (!a.static_dir.empty()) options.static_dir = a.static_dir;
    if (!a.admin_token_env.empty()) {
        const char* token = std::getenv(a.admin_token_env.c_str());
        if (token == nullptr || *token == '\0') {
            fail(ErrorKind::Configuration, "environment variable " + a.admin_token_env + " is not set");
        }
        options.admin_token = token;
    }

    std::unique_ptr<Service> service;
    if (index) {
        service = std::make_unique<Service>(std::move(corpus), std::move(*index), embedder, generator, options);
    } else {
        service = Service::from_corpus(std::move(corpus), config, embedder, generator, options);
    }

    httplib::Server server;
    service->mount(server);
    const auto snap = service->snapshot();
    out << "serving " << snap->corpus.size() << " models (" << snap->index.config().name() << ", "
        << embedder->id() << ") on http://" << a.host << ":" << a.port << std::endl;
    if (!server.listen(a.host, a.port)) {
        fail(ErrorKind::Io, "cannot listen on " + a.host + ":" + std::to_string(a.port));
    }
    return kOk;
}

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Provider:
        case ErrorKind::ProviderContract: return kProviderError;
        default: return kValidationError;
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Retrieve constraint-programming models from natural-language problem descriptions", "cpretrieve"};
    app.require_subcommand(1, 1);
    Common common;
    app.add_option("--provider-config", common.settings_path, "JSON document describing providers")
        ->check(CLI::ExistingFile);
    app.add_flag("--json", common.json_output, "Machine-readable output");

    IngestArgs ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Build a corpus file from a directory of problems");
    ingest_cmd->add_option("root", ingest.root, "Directory with one subdirectory per problem")->required();
    ingest_cmd->add_option("--out", ingest.out, "Corpus file to write")->required();

    DescribeArgs describe;
    auto* describe_cmd = app.add_subcommand("describe", "Generate Novice/Intermediate/Expert descriptions");
    describe_cmd->add_option("--corpus", describe.corpus, "Corpus file")->required()->check(CLI::ExistingFile);
    describe_cmd->add_option("--out", describe.out, "Output corpus file (default: rewrite --corpus)");
    describe_cmd->add_option("--levels", describe.levels, "Comma-separated levels, e.g. D1,D2,D3");
    describe_cmd->add_flag("--force", describe.force, "Regenerate descriptions that already exist");
    describe_cmd->add_option("--provider", describe.provider, "stub or remote")
        ->check(CLI::IsMember({"stub", "remote"}));
    describe_cmd->add_option("--canned", describe.canned, "Canned descriptions for the stub provider")
        ->check(CLI::ExistingFile);
    describe_cmd->add_option("--cache", describe.cache, "Generation cache file");
    describe_cmd->add_option("--parallel", describe.parallel, "Requests in flight")->check(CLI::PositiveNumber);

    EmbedArgs embed_args;
    auto* embed_cmd = app.add_subcommand("embed", "Embed every corpus entry and write an index");
    embed_cmd->add_option("--corpus", embed_args.corpus, "Corpus file")->required()->check(CLI::ExistingFile);
    embed_cmd->add_option("--config", embed_args.config, "Index configuration, e.g. SC+D2");
    embed_cmd->add_option("--provider", embed_args.provider, "fallback or remote")
        ->check(CLI::IsMember({"fallback", "remote"}));
    embed_cmd->add_option("--dimension", embed_args.dimension, "Embedding dimension")->check(CLI::PositiveNumber);
    embed_cmd->add_option("--out", embed_args.out, "Index file to write")->required();

    QueryArgs query;
    auto* query_cmd = app.add_subcommand("query", "Rank corpus entries against a problem description");
    query_cmd->add_option("text", query.text, "Problem description")->required();
    query_cmd->add_option("--index", query.index, "Index file")->required()->check(CLI::ExistingFile);
    query_cmd->add_option("--corpus", query.corpus, "Corpus file, for display names")->check(CLI::ExistingFile);
    query_cmd->add_option("--provider", query.provider, "fallback or remote")
        ->check(CLI::IsMember({"fallback", "remote"}));
    query_cmd->add_option("-k,--k", query.k, "Number of results")->check(CLI::PositiveNumber);

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Leave-one-out MRR table over all index configurations");
    eval_cmd->add_option("--corpus", eval.corpus, "Corpus file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--provider", eval.provider, "fallback or remote")
        ->check(CLI::IsMember({"fallback", "remote"}));
    eval_cmd->add_option("--dimension", eval.dimension, "Embedding dimension")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--rows", eval.rows, "Query sets, e.g. D1,D2,D3,External");
    eval_cmd->add_option("--external", eval.external, "External query set file")->check(CLI::ExistingFile);
    eval_cmd->add_option("-k,--k", eval.k, "Rank cutoff for reciprocal rank")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--out", eval.out, "Also write the JSON report here");

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP query service");
    serve_cmd->add_option("--host", serve.host, "Bind address");
    serve_cmd->add_option("--port", serve.port, "Port")->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--corpus", serve.corpus, "Corpus file")->required()->check(CLI::ExistingFile);
    serve_cmd->add_option("--index", serve.index, "Index file (built from the corpus when omitted)")
        ->check(CLI::ExistingFile);
    serve_cmd->add_option("--config", serve.config, "Index configuration (default SC+D2)");
    serve_cmd->add_option("--provider", serve.provider, "fallback or remote")
        ->check(CLI::IsMember({"fallback", "remote"}));
    serve_cmd->add_option("--dimension", serve.dimension, "Embedding dimension")->check(CLI::PositiveNumber);
    serve_cmd->add_option("--k-default", serve.k_default, "Default number of results")->check(CLI::PositiveNumber);
    serve_cmd->add_option("--generator", serve.generator, "none, stub or remote")
        ->check(CLI::IsMember({"none", "stub", "remote"}));
    serve_cmd->add_option("--canned", serve.canned, "Canned descriptions for the stub generator")
        ->check(CLI::ExistingFile);
    serve_cmd->add_option("--admin-token-env", serve.admin_token_env, "Env var holding the admin token for additions");
    serve_cmd->add_option("--static-dir", serve.static_dir, "Directory of UI files served at /");
    serve_cmd->add_option("--cors-origin", serve.cors_origin, "Access-Control-Allow-Origin value");

    std::vector<std::string> argv_storage;
    argv_storage.reserve(args.size() + 1);
    argv_storage.emplace_back("cpretrieve");
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_storage) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kValidationError;
    }

    try {
        if (*ingest_cmd) return do_ingest(ingest, common, out);
        if (*describe_cmd) return do_describe(describe, common, out, err);
        if (*embed_cmd) return do_embed(embed_args, common, out, err);
        if (*query_cmd) return do_query(query, common, out, err);
        if (*eval_cmd) return do_eval(eval, common, out);
        if (*serve_cmd) return do_serve(serve, common, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kValidationError;
    }
    return kValidationError;
}

}  // namespace cpretrieve::cli
