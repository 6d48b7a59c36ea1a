#pragma once

// JudgeClient for OpenAI-compatible chat-completions endpoints.

#include <string>

#include "hallu/judge.hpp"

namespace hallu::cli {

class HttpJudgeClient final : public JudgeClient {
public:
    /// `endpoint` is the full URL, e.g. https://host/v1/chat/completions.
    HttpJudgeClient(std::string endpoint, std::string model, std::string token, double timeout_seconds = 60.0);

    /// One POST per call. Network failures, 429 and 5xx raise TransportError;
    /// other non-2xx statuses and malformed bodies also raise it.
    std::string send(const std::string& prompt) override;
    std::string id() const override { return model_; }

private:
    std::string scheme_host_;
    std::string path_;
    std::string model_;
    std::string token_;
    double timeout_seconds_;
};

}  // namespace hallu::cli
