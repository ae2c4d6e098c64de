#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "looptool/errors.hpp"
#include "looptool/http_transport.hpp"

using namespace looptool;

namespace {

// Local chat endpoint on an ephemeral port.
class FakeServer {
public:
    FakeServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const auto n = hits_++;
            last_body_ = req.body;
            last_auth_ = req.get_header_value("Authorization");
            if (n < fail_first_) {
                res.status = fail_status_;
                res.set_content("busy", "text/plain");
                return;
            }
            const auto body = Json::parse(req.body);
            const auto echo = body.at("messages").back().at("content").get<std::string>();
            Json reply{{"choices", Json::array({Json{{"message", {{"role", "assistant"}, {"content", "echo:" + echo}}}}})}};
            if (body.at("logprobs").get<bool>()) {
                reply["choices"][0]["logprobs"] = Json{{"content", Json::array({Json{{"token", "echo:"}, {"logprob", -0.25}},
                                                                                Json{{"token", echo}, {"logprob", -1.5}}})}};
            }
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

    std::atomic<int> hits_{0};
    int fail_first_ = 0;
    int fail_status_ = 503;
    std::string last_body_;
    std::string last_auth_;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

const MessageList kMessages{{ChatRole::System, "s"}, {ChatRole::User, "ping"}};

}  // namespace

TEST_SUITE("http") {

TEST_CASE("chat completion round trip with logprobs and auth") {
    FakeServer server;
    ::setenv("LOOPTOOL_TEST_KEY", "sekret", 1);
    auto t = std::make_shared<HttpTransport>(HttpEndpoint{server.url(), "toy-model", "LOOPTOOL_TEST_KEY",
                                                          std::chrono::seconds(5), true});
    BackendHandle policy(BackendRole::Policy, t, DecodingParams{0.9, 77, true});
    const auto ex = policy.greedy_complete(kMessages);
    CHECK(ex.response == "echo:ping");
    REQUIRE(ex.token_logprobs);
    CHECK(ex.token_logprobs->size() == 2);
    CHECK(server.last_auth_ == "Bearer sekret");
    const auto sent = Json::parse(server.last_body_);
    CHECK(sent.at("model") == "toy-model");
    CHECK(sent.at("temperature").get<double>() == 0.0);
    CHECK(sent.at("max_tokens") == 77);
    CHECK(sent.at("messages").size() == 2);
    ::unsetenv("LOOPTOOL_TEST_KEY");
}

TEST_CASE("503 is retried until success") {
    FakeServer server;
    server.fail_first_ = 2;
    auto t = std::make_shared<HttpTransport>(HttpEndpoint{server.url(), "m", "", std::chrono::seconds(5), true});
    BackendHandle gen(BackendRole::Generator, t, {}, RetryPolicy{3, std::chrono::milliseconds(1), 2.0});
    CHECK(gen.complete(kMessages).response == "echo:ping");
    CHECK(server.hits_ == 3);
}

TEST_CASE("400 is not retried") {
    FakeServer server;
    server.fail_first_ = 10;
    server.fail_status_ = 400;
    auto t = std::make_shared<HttpTransport>(HttpEndpoint{server.url(), "m", "", std::chrono::seconds(5), true});
    BackendHandle gen(BackendRole::Generator, t, {}, RetryPolicy{3, std::chrono::milliseconds(1), 2.0});
    CHECK_THROWS_AS(gen.complete(kMessages), TransportError);
    CHECK(server.hits_ == 1);
}

TEST_CASE("unreachable endpoint is a transient transport error") {
    auto t = std::make_shared<HttpTransport>(
        HttpEndpoint{"http://127.0.0.1:1/v1/chat/completions", "m", "", std::chrono::seconds(1), true});
    try {
        t->send(ChatRequest{kMessages, 0.0, 10, false});
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.transient());
    }
}

TEST_CASE("endpoint without logprobs support refuses logprob requests") {
    auto t = std::make_shared<HttpTransport>(HttpEndpoint{"http://127.0.0.1:1", "m", "", std::chrono::seconds(1), false});
    BackendHandle policy(BackendRole::Policy, t);
    CHECK_THROWS_AS(policy.greedy_complete(kMessages, true), UnsupportedLogprobsError);
    CHECK_THROWS_AS(HttpTransport(HttpEndpoint{"localhost:8000", "m"}), ConfigError);
}

TEST_CASE("both reply shapes decode") {
    const auto flat = decode_chat_reply(R"({"text": "hi", "logprobs": [{"token": "hi", "logprob": -0.1}]})");
    CHECK(flat.text == "hi");
    CHECK(flat.logprobs->size() == 1);
    const auto oa = decode_chat_reply(R"({"choices": [{"message": {"content": "yo"}}]})");
    CHECK(oa.text == "yo");
    CHECK_FALSE(oa.logprobs);
    CHECK_THROWS_AS(decode_chat_reply("not json"), TransportError);
    CHECK_THROWS_AS(decode_chat_reply(R"({"choices": []})"), TransportError);
}

}
