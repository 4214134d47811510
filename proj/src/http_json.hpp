#pragma once

#include <chrono>
#include <string>

#include <nlohmann/json.hpp>

namespace sievefl::detail {

struct HttpReply {
    int status = 0;
    std::string body;
};

/// POSTs a JSON body to base_url + route. Connection-level failures throw
/// TransportError; any HTTP status is returned to the caller.
HttpReply post_json(const std::string& base_url, const std::string& route,
                    const nlohmann::json& body, std::chrono::milliseconds timeout);

/// First `limit` bytes of a response body, for error messages.
std::string excerpt(const std::string& body, std::size_t limit = 200);

}  // namespace sievefl::detail
