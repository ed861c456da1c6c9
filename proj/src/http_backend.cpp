#include <rearrange/backend.hpp>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <thread>

namespace rearrange {

using nlohmann::json;

std::string_view agent_role_name(AgentRole role)
{
    switch (role) {
    case AgentRole::Selection: return "selection";
    case AgentRole::Evaluator: return "evaluator";
    case AgentRole::Proposer: return "proposer";
    }
    return "?";
}

EncodedImage EncodedImage::jpeg(const Image& image, int quality)
{
    EncodedImage out;
    out.mime = "image/jpeg";
    out.bytes = encode_jpeg(image, quality);
    out.sha256 = sha256_hex(out.bytes);
    return out;
}

namespace {

struct ParsedUrl {
    std::string scheme_host_port;
    std::string path;
};

ParsedUrl split_url(const std::string& url)
{
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, fmt::format("endpoint '{}' has no scheme", url));
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpTransport make_httplib_transport(const HttpBackendConfig& config)
{
    const auto url = split_url(config.endpoint);
    const auto timeout = config.timeout;
    return [url, timeout](const std::string& body, const HttpHeaders& headers) -> std::optional<HttpResponse> {
        httplib::Client client(url.scheme_host_port);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        httplib::Headers h(headers.begin(), headers.end());
        auto res = client.Post(url.path, h, body, "application/json");
        if (!res) return std::nullopt;
        return HttpResponse{res->status, res->body};
    };
}

HttpBackend::HttpBackend(HttpBackendConfig config, Sleeper sleeper, HttpTransport transport)
    : config_(std::move(config)), sleeper_(std::move(sleeper)), transport_(std::move(transport))
{
    if (config_.endpoint.empty()) throw Error(ErrorCode::InvalidArgument, "http backend needs an endpoint");
    if (config_.max_attempts < 1) throw Error(ErrorCode::InvalidArgument, "max_attempts must be >= 1");
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    if (!transport_) transport_ = make_httplib_transport(config_);
}

std::string HttpBackend::build_payload(const AgentRequest& request) const
{
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", request.prompt}});
    for (const auto& img : request.images) {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", fmt::format("data:{};base64,{}", img.mime, base64_encode(img.bytes))}}}});
    }
    json payload = {{"model", config_.model},
                    {"temperature", config_.temperature},
                    {"max_tokens", config_.max_tokens},
                    {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
    return payload.dump();
}

std::string HttpBackend::extract_content(const std::string& body)
{
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::parse_error&) {
        throw Error(ErrorCode::ProtocolViolation, "endpoint returned a non-JSON body");
    }
    try {
        const auto& content = doc.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        if (content.is_array()) {
            std::string text;
            for (const auto& part : content) {
                if (part.value("type", "") == "text") text += part.at("text").get<std::string>();
            }
            return text;
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProtocolViolation, fmt::format("unexpected response shape: {}", e.what()));
    }
    throw Error(ErrorCode::ProtocolViolation, "response message has no text content");
}

std::string HttpBackend::complete(const AgentRequest& request)
{
    const std::string body = build_payload(request);
    HttpHeaders headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", fmt::format("Bearer {}", key));
        }
    }

    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        const auto response = transport_(body, headers);
        if (response && response->status >= 200 && response->status < 300) {
            return extract_content(response->body);
        }
        const bool retryable = !response || response->status == 429 || response->status >= 500;
        last_error = response ? fmt::format("HTTP {}", response->status) : std::string("transport failure");
        if (!retryable) {
            throw Error(ErrorCode::BackendUnavailable, fmt::format("{} from {}", last_error, config_.endpoint));
        }
        if (attempt < config_.max_attempts) {
            const auto delay = std::chrono::milliseconds(static_cast<std::int64_t>(
                static_cast<double>(config_.backoff_base.count()) * std::pow(config_.backoff_factor, attempt - 1)));
            spdlog::warn("{} from {}; retrying in {} ms ({}/{})", last_error, config_.endpoint, delay.count(), attempt,
                         config_.max_attempts);
            sleeper_(delay);
        }
    }
    throw Error(ErrorCode::BackendUnavailable,
                fmt::format("{} after {} attempts to {}", last_error, config_.max_attempts, config_.endpoint));
}

}  // namespace rearrange
