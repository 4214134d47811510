#include "http_json.hpp"

#include "sievefl/errors.hpp"

#include <httplib.h>

namespace sievefl::detail {

namespace {

// "http://host:port/prefix" -> ("http://host:port", "/prefix")
std::pair<std::string, std::string> split_base(const std::string& base_url) {
    const auto scheme = base_url.find("://");
    const auto start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto slash = base_url.find('/', start);
    if (slash == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, slash), prefix};
}

}  // namespace

HttpReply post_json(const std::string& base_url, const std::string& route,
                    const nlohmann::json& body, std::chrono::milliseconds timeout) {
    const auto [host, prefix] = split_base(base_url);
    httplib::Client client(host);
    if (!client.is_valid()) throw TransportError("invalid backend URL '" + base_url + "'");
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    auto res = client.Post(prefix + route, body.dump(), "application/json");
    if (!res) {
        throw TransportError("request to " + base_url + route +
                             " failed: " + httplib::to_string(res.error()));
    }
    return {res->status, res->body};
}

std::string excerpt(const std::string& body, std::size_t limit) {
    if (body.size() <= limit) return body;
    return body.substr(0, limit) + "...";
}

}  // namespace sievefl::detail
