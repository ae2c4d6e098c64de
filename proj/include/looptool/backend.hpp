#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "looptool/message.hpp"

namespace looptool {

enum class BackendRole { Generator, Judge, Policy };

std::string_view to_string(BackendRole role);

struct DecodingParams {
    double temperature = 0.7;
    int max_tokens = 1024;
    bool greedy = false;

    // Greedy decoding is sent as temperature 0 regardless of `temperature`.
    double effective_temperature() const noexcept { return greedy ? 0.0 : temperature; }
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;

    bool operator==(const TokenLogprob&) const = default;
};

using TokenLogprobs = std::vector<TokenLogprob>;

struct ChatRequest {
    MessageList messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    bool logprobs = false;
};

struct ChatReply {
    std::string text;
    std::optional<TokenLogprobs> logprobs;
};

struct ChatExchange {
    MessageList messages;
    std::string response;
    std::optional<TokenLogprobs> token_logprobs;
};

// Stable hash of a message list (roles and texts only). Decoding parameters
// and backend configuration never enter the fingerprint.
std::string request_fingerprint(const MessageList& messages);

class Transport {
public:
    virtual ~Transport() = default;
    // Throws TransportError; `transient()` marks failures worth retrying.
    virtual ChatReply send(const ChatRequest& request) = 0;
    virtual bool supports_logprobs() const = 0;
};

// ---------------------------------------------------------------------------
// Mock backend

struct MockEntry {
    std::string response;
    std::optional<TokenLogprobs> logprobs;
};

// fingerprint -> canned response. Persisted as JSONL rows
// {"fingerprint", "response", "logprobs"?: [{"token", "logprob"}, ...]}.
class MockScript {
public:
    void add(const MessageList& messages, MockEntry entry);
    void add_fingerprint(std::string fingerprint, MockEntry entry);
    const MockEntry* find(const std::string& fingerprint) const;
    std::size_t size() const noexcept { return entries_.size(); }

    static MockScript load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::map<std::string, MockEntry> entries_;
};

struct MockCall {
    std::string fingerprint;
    std::size_t in_flight_at_start = 0;
};

// Serves requests from a MockScript (unmatched fingerprint -> LookupError),
// or from a responder function, optionally recording every response into a
// script so a later run can replay it hermetically.
class MockTransport : public Transport {
public:
    using Responder = std::function<MockEntry(const MessageList&)>;

    explicit MockTransport(MockScript script);
    explicit MockTransport(Responder responder);

    ChatReply send(const ChatRequest& request) override;
    bool supports_logprobs() const override { return true; }

    // Each call sleeps this long while counted as in flight.
    void set_latency(std::chrono::microseconds latency) { latency_ = latency; }
    // Called with the zero-based call index before answering; may throw.
    void set_fault(std::function<void(std::size_t)> fault) { fault_ = std::move(fault); }

    std::vector<MockCall> call_log() const;
    std::size_t max_in_flight() const;
    MockScript recorded() const;

private:
    std::optional<MockScript> script_;
    Responder responder_;
    std::chrono::microseconds latency_{0};
    std::function<void(std::size_t)> fault_;

    mutable std::mutex mu_;
    std::vector<MockCall> log_;
    std::size_t in_flight_ = 0;
    std::size_t max_in_flight_ = 0;
    MockScript recorded_;
};

// ---------------------------------------------------------------------------

// Counting gate bounding concurrent requests through one handle.
class InflightGate {
public:
    explicit InflightGate(std::size_t limit);

    class Slot {
    public:
        explicit Slot(InflightGate& gate);
        ~Slot();
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

    private:
        InflightGate& gate_;
    };

    std::size_t limit() const noexcept { return limit_; }
    std::size_t max_observed() const;

private:
    std::size_t limit_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::size_t active_ = 0;
    std::size_t max_observed_ = 0;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds base_delay{250};
    double multiplier = 2.0;
};

// A model role bound to a transport. Copies share the transport and the
// in-flight gate, so the bound holds across every copy of one handle.
class BackendHandle {
public:
    BackendHandle(BackendRole role, std::shared_ptr<Transport> transport,
                  DecodingParams params = {}, RetryPolicy retry = {},
                  std::size_t max_inflight = 8);

    BackendRole role() const noexcept { return role_; }
    const DecodingParams& params() const noexcept { return params_; }
    const RetryPolicy& retry() const noexcept { return retry_; }
    std::size_t max_inflight() const noexcept { return gate_->limit(); }
    const InflightGate& gate() const noexcept { return *gate_; }
    Transport& transport() const noexcept { return *transport_; }

    // Retries transient transport failures with exponential backoff. Logprobs
    // are returned iff requested; a transport that cannot supply them fails
    // with UnsupportedLogprobsError instead of silently dropping them.
    ChatExchange complete(const MessageList& messages, bool want_logprobs = false) const;

    // Argmax decoding. Only valid on a Policy handle.
    ChatExchange greedy_complete(const MessageList& messages, bool want_logprobs = true) const;

private:
    ChatExchange run(const MessageList& messages, double temperature, bool want_logprobs) const;

    BackendRole role_;
    std::shared_ptr<Transport> transport_;
    DecodingParams params_;
    RetryPolicy retry_;
    std::shared_ptr<InflightGate> gate_;
};

}  // namespace looptool
