#include "cpretrieve/http_json.hpp"

#include <cstdlib>

#include <httplib.h>

#include "cpretrieve/error.hpp"

namespace cpretrieve {

std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        fail(ErrorKind::Configuration, "endpoint URL '" + url + "' has no scheme");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body) {
    const auto [base, path] = split_url(endpoint.url);
    httplib::Client client(base);
    const auto secs = static_cast<time_t>(endpoint.timeout.count());
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);

    httplib::Headers headers;
    if (!endpoint.api_key_env.empty()) {
        const char* token = std::getenv(endpoint.api_key_env.c_str());
        if (token == nullptr || *token == '\0') {
            fail(ErrorKind::Configuration,
                 "environment variable " + endpoint.api_key_env + " is not set");
        }
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    const auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        throw ProviderError("request to " + endpoint.url + " failed: " + httplib::to_string(res.error()), 1);
    }
    if (res->status == 429 || res->status >= 500) {
        throw ProviderError("provider at " + endpoint.url + " answered HTTP " + std::to_string(res->status), 1);
    }
    if (res->status < 200 || res->status >= 300) {
        fail(ErrorKind::ProviderContract,
             "provider at " + endpoint.url + " answered HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::ProviderContract, "provider at " + endpoint.url + " sent invalid JSON: " + e.what());
    }
}

}  // namespace cpretrieve
