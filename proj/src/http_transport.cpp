#include "looptool/http_transport.hpp"

#include <cstdlib>

#include <httplib.h>

#include "looptool/errors.hpp"

namespace looptool {

HttpTransport::HttpTransport(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    const auto scheme_end = endpoint_.url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint url must include a scheme: " + endpoint_.url);
    }
    const auto path_start = endpoint_.url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        origin_ = endpoint_.url;
        path_ = "/v1/chat/completions";
    } else {
        origin_ = endpoint_.url.substr(0, path_start);
        path_ = endpoint_.url.substr(path_start);
    }
}

ChatReply decode_chat_reply(const std::string& body) {
    Json doc;
    try {
        doc = Json::parse(body);
    } catch (const Json::parse_error& e) {
        throw TransportError(std::string("reply is not JSON: ") + e.what(), false);
    }

    ChatReply reply;
    const Json* logprob_list = nullptr;
    if (doc.contains("choices")) {
        const auto& choices = doc.at("choices");
        if (!choices.is_array() || choices.empty()) {
            throw TransportError("reply has no choices", false);
        }
        const auto& choice = choices.at(0);
        if (choice.contains("message")) {
            const auto& content = choice.at("message").value("content", Json());
            reply.text = content.is_string() ? content.get<std::string>() : std::string();
        } else {
            reply.text = choice.value("text", std::string());
        }
        if (choice.contains("logprobs") && choice.at("logprobs").is_object() &&
            choice.at("logprobs").contains("content") &&
            choice.at("logprobs").at("content").is_array()) {
            logprob_list = &choice.at("logprobs").at("content");
        }
    } else if (doc.contains("text")) {
        reply.text = doc.at("text").get<std::string>();
        if (doc.contains("logprobs") && doc.at("logprobs").is_array()) {
            logprob_list = &doc.at("logprobs");
        }
    } else {
        throw TransportError("reply has neither choices nor text", false);
    }

    if (logprob_list != nullptr) {
        TokenLogprobs lps;
        lps.reserve(logprob_list->size());
        for (const auto& t : *logprob_list) {
            lps.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
        }
        reply.logprobs = std::move(lps);
    }
    return reply;
}

ChatReply HttpTransport::send(const ChatRequest& request) {
    Json body{{"model", endpoint_.model},
              {"messages", to_json(request.messages)},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens},
              {"logprobs", request.logprobs}};

    httplib::Client client(origin_);
    const auto secs = static_cast<time_t>(endpoint_.timeout.count());
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);

    httplib::Headers headers;
    if (!endpoint_.api_key_env.empty()) {
        if (const char* key = std::getenv(endpoint_.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }

    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
        throw TransportError("request to " + origin_ + path_ + " failed: " +
                                 httplib::to_string(res.error()),
                             true);
    }
    const int status = res->status;
    if (status == 408 || status == 429 || status >= 500) {
        throw TransportError("endpoint returned HTTP " + std::to_string(status), true);
    }
    if (status < 200 || status >= 300) {
        throw TransportError("endpoint returned HTTP " + std::to_string(status) + ": " + res->body,
                             false);
    }
    return decode_chat_reply(res->body);
}

}  // namespace looptool
