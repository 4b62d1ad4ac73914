#include <cstdlib>
#include <regex>

#include "httplib.h"
#include "scale_scribe/errors.hpp"
#include "scale_scribe/gateway.hpp"

namespace scale_scribe {

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Endpoint split_url(const std::string& url) {
    static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch match;
    if (!std::regex_match(url, match, pattern)) throw TransportError("unsupported endpoint URL '" + url + "'");
    return {match[1].str(), match[2].matched ? match[2].str() : "/"};
}

std::optional<std::chrono::milliseconds> retry_after(const httplib::Result& res) {
    if (!res->has_header("Retry-After")) return std::nullopt;
    try {
        const double seconds = std::stod(res->get_header_value("Retry-After"));
        if (seconds >= 0) return std::chrono::milliseconds(static_cast<std::int64_t>(seconds * 1000));
    } catch (const std::exception&) {
    }
    return std::nullopt;
}

}  // namespace

HttpBackend::HttpBackend(std::optional<std::string> api_key) {
    if (api_key) {
        api_key_ = std::move(*api_key);
    } else if (const char* env = std::getenv(kApiKeyEnv); env && *env) {
        api_key_ = env;
    } else {
        throw Error(std::string("live backend needs an API key in ") + kApiKeyEnv);
    }
}

CompletionResult HttpBackend::complete(const PromptBundle& bundle, const ModelConfig& config) {
    const Endpoint endpoint = split_url(config.endpoint_url);
    httplib::Client client(endpoint.origin);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
    client.set_connection_timeout(std::min<std::chrono::seconds>(seconds, std::chrono::seconds(30)));
    client.set_read_timeout(config.timeout);
    client.set_write_timeout(config.timeout);

    const httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
    const std::string body = build_request_body(bundle, config).dump();

    ++requests_;
    const auto res = client.Post(endpoint.path, headers, body, "application/json");
    if (!res) throw TransportError("request to " + endpoint.origin + " failed: " + httplib::to_string(res.error()));
    if (res->status == 429) throw RateLimited("rate limited (HTTP 429)", retry_after(res));
    if (res->status < 200 || res->status >= 300)
        throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));

    const auto doc = nlohmann::json::parse(res->body, nullptr, false);
    if (doc.is_discarded()) throw TransportError("response body is not JSON");
    const auto* content = [&]() -> const nlohmann::json* {
        if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) return nullptr;
        const auto& choice = doc["choices"][0];
        if (!choice.contains("message") || !choice["message"].contains("content")) return nullptr;
        return &choice["message"]["content"];
    }();
    if (!content || !content->is_string()) throw TransportError("response has no message content");

    CompletionResult result;
    result.raw_text = content->get<std::string>();
    result.request_fingerprint = request_fingerprint(bundle, config);
    result.backend = BackendKind::live;
    return result;
}

}  // namespace scale_scribe
