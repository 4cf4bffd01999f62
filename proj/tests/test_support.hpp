#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cpretrieve/corpus.hpp"
#include "cpretrieve/generation.hpp"

namespace testing {

namespace fs = std::filesystem;

inline fs::path fixture_dir() { return fs::path(CPRETRIEVE_FIXTURE_DIR) / "zoo"; }
inline fs::path source_dir() { return fs::path(CPRETRIEVE_SOURCE_DIR); }

/// Removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("cpretrieve_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
}

/// The ten-problem fixture with D1-D3 filled from descriptions.json.
inline cpretrieve::Corpus fixture_corpus() {
    auto corpus = cpretrieve::ingest_directory(fixture_dir() / "models");
    cpretrieve::StubTextProvider stub(cpretrieve::StubTextProvider::load_canned(fixture_dir() / "descriptions.json"));
    cpretrieve::GenerationCache cache;
    std::vector<cpretrieve::ExpertiseLevel> levels(cpretrieve::kAllLevels.begin(), cpretrieve::kAllLevels.end());
    return cpretrieve::generate_all(corpus, levels, stub, cache).corpus;
}

inline cpretrieve::ModelEntry make_entry(const std::string& id, const std::string& source,
                                         const std::string& d1 = {}, const std::string& d2 = {},
                                         const std::string& d3 = {}) {
    cpretrieve::ModelEntry e;
    e.id = id;
    e.name = id;
    e.provenance = "test";
    e.source_files.push_back({id + ".mzn", source});
    if (!d1.empty()) e.descriptions[cpretrieve::ExpertiseLevel::Novice] = d1;
    if (!d2.empty()) e.descriptions[cpretrieve::ExpertiseLevel::Intermediate] = d2;
    if (!d3.empty()) e.descriptions[cpretrieve::ExpertiseLevel::Expert] = d3;
    return e;
}

/// n entries with distinct vocabularies and all three descriptions.
inline cpretrieve::Corpus synthetic_corpus(std::size_t n) {
    std::vector<cpretrieve::ModelEntry> entries;
    for (std::size_t i = 0; i < n; ++i) {
        const auto tag = "p" + std::to_string(i);
        entries.push_back(make_entry("entry" + std::to_string(100 + i),
                                     "var int: " + tag + "x;\nconstraint " + tag + "x > " + std::to_string(i) +
                                         ";\nsolve satisfy;\n",
                                     "novice text about " + tag + "alpha",
                                     "intermediate text about " + tag + "beta",
                                     "expert text about " + tag + "gamma"));
    }
    return cpretrieve::Corpus(std::move(entries), 1);
}

/// httplib server on an ephemeral localhost port, run on a background thread.
class MockServer {
public:
    MockServer() = default;
    ~MockServer() { stop(); }

    httplib::Server& server() { return server_; }

    int start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }
    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }
    std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }
    int port() const { return port_; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

inline void quiet_logs() { spdlog::set_level(spdlog::level::off); }

}  // namespace testing
