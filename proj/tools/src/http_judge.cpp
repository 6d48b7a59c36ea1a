#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "hallu_cli/http_judge.hpp"

#include <nlohmann/json.hpp>

#include "hallu/error.hpp"

namespace hallu::cli {

HttpJudgeClient::HttpJudgeClient(std::string endpoint, std::string model, std::string token, double timeout_seconds)
    : model_(std::move(model)), token_(std::move(token)), timeout_seconds_(timeout_seconds) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) throw ValidationError("judge endpoint must be an http(s) URL: " + endpoint);
    const auto path_start = endpoint.find('/', scheme_end + 3);
    scheme_host_ = endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
    if (model_.empty()) throw ValidationError("judge model name is empty");
}

std::string HttpJudgeClient::send(const std::string& prompt) {
    httplib::Client client(scheme_host_);
    const auto secs = static_cast<time_t>(timeout_seconds_);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_bearer_token_auth(token_);

    nlohmann::json body{{"model", model_},
                        {"temperature", 0},
                        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) throw TransportError("judge request failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
        throw TransportError("judge returned HTTP " + std::to_string(res->status));
    }
    auto doc = nlohmann::json::parse(res->body, nullptr, false);
    if (doc.is_discarded()) throw TransportError("judge response is not JSON");
    try {
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw TransportError("judge response lacks choices[0].message.content");
    }
}

}  // namespace hallu::cli
