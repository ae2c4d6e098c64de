#pragma once

#include <chrono>
#include <string>

#include "looptool/backend.hpp"

namespace looptool {

struct HttpEndpoint {
    std::string url;  // e.g. http://127.0.0.1:8000/v1/chat/completions
    std::string model;
    std::string api_key_env = "LOOPTOOL_API_KEY";  // bearer token source; unset env -> no auth header
    std::chrono::seconds timeout{120};
    bool logprobs_supported = true;
};

// Chat-completion client. Request body:
//   {"model", "messages": [{"role", "content"}], "temperature", "max_tokens", "logprobs"}
// Accepted replies: the OpenAI-style
//   {"choices": [{"message": {"content"}, "logprobs": {"content": [{"token", "logprob"}]}}]}
// or the flat {"text", "logprobs": [{"token", "logprob"}]}.
// 408/429/5xx and connection failures are transient; other 4xx are not.
class HttpTransport : public Transport {
public:
    explicit HttpTransport(HttpEndpoint endpoint);

    ChatReply send(const ChatRequest& request) override;
    bool supports_logprobs() const override { return endpoint_.logprobs_supported; }

    const HttpEndpoint& endpoint() const noexcept { return endpoint_; }

private:
    HttpEndpoint endpoint_;
    std::string origin_;  // scheme://host[:port]
    std::string path_;
};

// Exposed for tests: decodes a reply body in either accepted shape.
ChatReply decode_chat_reply(const std::string& body);

}  // namespace looptool
