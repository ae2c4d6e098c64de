#include "looptool/backend.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "looptool/errors.hpp"

namespace looptool {

std::string_view to_string(BackendRole role) {
    switch (role) {
        case BackendRole::Generator: return "generator";
        case BackendRole::Judge: return "judge";
        case BackendRole::Policy: return "policy";
    }
    return "generator";
}

std::string request_fingerprint(const MessageList& messages) {
    // Length-prefixed fields make the encoding injective.
    std::string buf;
    for (const auto& m : messages) {
        const auto role = to_string(m.role);
        buf += std::to_string(role.size());
        buf += ':';
        buf += role;
        buf += std::to_string(m.text.size());
        buf += ':';
        buf += m.text;
    }
    return fnv1a_hex(buf);
}

// ---------------------------------------------------------------------------

namespace {

void check_logprobs_cover(const MockEntry& entry) {
    if (!entry.logprobs) return;
    std::string joined;
    for (const auto& t : *entry.logprobs) joined += t.token;
    if (joined != entry.response) {
        throw DataError("mock logprob tokens do not spell out the scripted response");
    }
}

}  // namespace

void MockScript::add(const MessageList& messages, MockEntry entry) {
    add_fingerprint(request_fingerprint(messages), std::move(entry));
}

void MockScript::add_fingerprint(std::string fingerprint, MockEntry entry) {
    check_logprobs_cover(entry);
    entries_[std::move(fingerprint)] = std::move(entry);
}

const MockEntry* MockScript::find(const std::string& fingerprint) const {
    const auto it = entries_.find(fingerprint);
    return it == entries_.end() ? nullptr : &it->second;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    MockScript script;
    for (const auto& row : read_jsonl(path)) {
        MockEntry entry;
        entry.response = row.at("response").get<std::string>();
        if (row.contains("logprobs") && !row.at("logprobs").is_null()) {
            TokenLogprobs lps;
            for (const auto& t : row.at("logprobs")) {
                if (t.is_array()) {
                    lps.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
                } else {
                    lps.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
                }
            }
            entry.logprobs = std::move(lps);
        }
        script.add_fingerprint(row.at("fingerprint").get<std::string>(), std::move(entry));
    }
    return script;
}

void MockScript::save(const std::filesystem::path& path) const {
    std::vector<Json> rows;
    rows.reserve(entries_.size());
    for (const auto& [fp, entry] : entries_) {
        Json row{{"fingerprint", fp}, {"response", entry.response}};
        if (entry.logprobs) {
            Json lps = Json::array();
            for (const auto& t : *entry.logprobs) {
                lps.push_back(Json{{"token", t.token}, {"logprob", t.logprob}});
            }
            row["logprobs"] = std::move(lps);
        }
        rows.push_back(std::move(row));
    }
    write_jsonl(path, rows);
}

MockTransport::MockTransport(MockScript script) : script_(std::move(script)) {}

MockTransport::MockTransport(Responder responder) : responder_(std::move(responder)) {}

ChatReply MockTransport::send(const ChatRequest& request) {
    const auto fingerprint = request_fingerprint(request.messages);
    std::size_t index;
    {
        std::lock_guard lock(mu_);
        index = log_.size();
        ++in_flight_;
        max_in_flight_ = std::max(max_in_flight_, in_flight_);
        log_.push_back({fingerprint, in_flight_});
    }
    struct Leave {
        MockTransport& self;
        ~Leave() {
            std::lock_guard lock(self.mu_);
            --self.in_flight_;
        }
    } leave{*this};

    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
    if (fault_) fault_(index);

    MockEntry entry;
    if (script_) {
        const auto* found = script_->find(fingerprint);
        if (found == nullptr) {
            throw LookupError("mock script has no entry for request fingerprint " + fingerprint);
        }
        entry = *found;
    } else {
        entry = responder_(request.messages);
        std::lock_guard lock(mu_);
        recorded_.add_fingerprint(fingerprint, entry);
    }

    ChatReply reply{std::move(entry.response), std::nullopt};
    if (request.logprobs) reply.logprobs = std::move(entry.logprobs);
    return reply;
}

std::vector<MockCall> MockTransport::call_log() const {
    std::lock_guard lock(mu_);
    return log_;
}

std::size_t MockTransport::max_in_flight() const {
    std::lock_guard lock(mu_);
    return max_in_flight_;
}

MockScript MockTransport::recorded() const {
    std::lock_guard lock(mu_);
    return recorded_;
}

// ---------------------------------------------------------------------------

InflightGate::InflightGate(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}

InflightGate::Slot::Slot(InflightGate& gate) : gate_(gate) {
    std::unique_lock lock(gate_.mu_);
    gate_.cv_.wait(lock, [&] { return gate_.active_ < gate_.limit_; });
    ++gate_.active_;
    gate_.max_observed_ = std::max(gate_.max_observed_, gate_.active_);
}

InflightGate::Slot::~Slot() {
    {
        std::lock_guard lock(gate_.mu_);
        --gate_.active_;
    }
    gate_.cv_.notify_one();
}

std::size_t InflightGate::max_observed() const {
    std::lock_guard lock(mu_);
    return max_observed_;
}

// ---------------------------------------------------------------------------

BackendHandle::BackendHandle(BackendRole role, std::shared_ptr<Transport> transport,
                             DecodingParams params, RetryPolicy retry, std::size_t max_inflight)
    : role_(role),
      transport_(std::move(transport)),
      params_(params),
      retry_(retry),
      gate_(std::make_shared<InflightGate>(max_inflight)) {
    if (!transport_) throw PreconditionError("backend handle needs a transport");
}

ChatExchange BackendHandle::complete(const MessageList& messages, bool want_logprobs) const {
    return run(messages, params_.effective_temperature(), want_logprobs);
}

ChatExchange BackendHandle::greedy_complete(const MessageList& messages, bool want_logprobs) const {
    if (role_ != BackendRole::Policy) {
        throw PreconditionError("greedy_complete requires a policy handle, got " +
                                std::string(to_string(role_)));
    }
    return run(messages, 0.0, want_logprobs);
}

ChatExchange BackendHandle::run(const MessageList& messages, double temperature,
                                bool want_logprobs) const {
    if (messages.empty()) throw PreconditionError("cannot complete an empty message list");
    if (want_logprobs && !transport_->supports_logprobs()) {
        throw UnsupportedLogprobsError("backend does not provide token logprobs");
    }

    const ChatRequest request{messages, temperature, params_.max_tokens, want_logprobs};
    ChatReply reply;
    for (int attempt = 0;; ++attempt) {
        try {
            InflightGate::Slot slot(*gate_);
            reply = transport_->send(request);
            break;
        } catch (const TransportError& e) {
            if (!e.transient() || attempt >= retry_.max_retries) {
                if (attempt == 0) throw;
                throw TransportError(std::string(e.what()) + " (after " +
                                         std::to_string(attempt) + " retries)",
                                     false);
            }
        }
        const auto delay = std::chrono::duration<double, std::milli>(
            static_cast<double>(retry_.base_delay.count()) * std::pow(retry_.multiplier, attempt));
        std::this_thread::sleep_for(delay);
    }

    if (want_logprobs && !reply.logprobs) {
        throw UnsupportedLogprobsError("backend reply carried no token logprobs");
    }
    if (!want_logprobs) reply.logprobs.reset();
    return {messages, std::move(reply.text), std::move(reply.logprobs)};
}

}  // namespace looptool
