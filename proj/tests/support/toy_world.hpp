#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "looptool/backend.hpp"
#include "looptool/sample.hpp"

namespace toy {

using namespace looptool;

ToolSet tools();
ToolSet subset(std::initializer_list<const char*> names);

// 20 samples with ids toy-00 .. toy-19; distinct final user turns.
std::vector<TrainSample> corpus();

std::string extract_between(const std::string& text, const std::string& open, const std::string& close);

// Splits `text` into short tokens with deterministic negative logprobs.
MockEntry with_logprobs(const std::string& text, double scale);

// Behaviour of the policy and judge for one sample, keyed by its last user turn.
enum class Mode { Correct, PredWrong, LabelWrong, Malformed, BothCorrect };

// Plays policy, judge (pairwise and holistic) and generator (expansion) for
// the loop. Content-keyed, so answers never depend on request order.
class LoopWorld {
public:
    explicit LoopWorld(const std::vector<TrainSample>& corpus);

    MockEntry respond(const MessageList& messages);

    static Mode mode_for(const std::string& last_user, std::size_t index_hint);

private:
    struct Truth {
        std::vector<ToolCall> label;
        ToolSet tools;
        Mode mode;
    };
    MockEntry policy(const MessageList& messages);
    MockEntry pairwise(const MessageList& messages);
    MockEntry holistic(const MessageList& messages);
    MockEntry expand(const MessageList& messages);
    const Truth* find(const std::string& last_user);

    std::mutex mu_;
    std::map<std::string, Truth> truth_;
};

// Plays planner, user, assistant and tool for dialogue simulation. Choices are
// pseudo-random functions of the request, covering final answers, single and
// parallel calls and repeated call rounds.
class DialogWorld {
public:
    explicit DialogWorld(double call_rate = 0.6) : call_rate_(call_rate) {}
    MockEntry respond(const MessageList& messages) const;

private:
    double call_rate_;
};

std::string last_user_line(const std::string& rendered_context);

}  // namespace toy
