#pragma once

#include <chrono>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace cpretrieve {

/// Where a remote provider lives and how to authenticate against it.
struct HttpEndpoint {
    std::string url;          // e.g. http://localhost:8080/v1/embeddings
    std::string api_key_env;  // environment variable holding a bearer token; empty = no auth
    std::chrono::seconds timeout{60};
};

/// POSTs body as JSON and parses the JSON reply.
///
/// Connection failures, 429 and 5xx raise ProviderError (retriable). Any other
/// non-2xx status or an unparsable body raises Error{ProviderContract}.
nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body);

/// Splits "scheme://host[:port]/path" into ("scheme://host[:port]", "/path").
std::pair<std::string, std::string> split_url(const std::string& url);

}  // namespace cpretrieve
