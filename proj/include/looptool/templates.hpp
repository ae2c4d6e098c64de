#pragma once

#include <string>
#include <string_view>

#include "looptool/message.hpp"
#include "looptool/prompt_template.hpp"
#include "looptool/schema.hpp"

namespace looptool {

namespace templates {

// Instruction prompt carried by every training sample. Slots: current_time, tool_sets.
inline constexpr std::string_view kInstruction =
    "You are an expert in composing function calls. You are given a question and a set of "
    "possible functions. Based on the question, you will need to make one or more function "
    "calls to achieve the purpose. If none of the functions can be used, point it out. If the "
    "given question lacks the parameters required by the function, also point it out.\n\n"
    "Current time: {{current_time}}\n\n"
    "Here is a list of functions in JSON format that you can invoke:\n"
    "{{tool_sets}}\n\n"
    "First reason step by step inside <think></think>. Then emit the function calls inside "
    "<tool_call></tool_call> as one JSON object per line, each of the form "
    "{\"name\": <function-name>, \"arguments\": <args-json-object>}.";

inline constexpr std::string_view kJudgeSystem =
    "You are a meticulous reviewer of function-calling data. You compare a reference tool call "
    "with a model prediction and decide which of them correctly serves the user.";

// Slots: tools, context, reference, prediction.
inline constexpr std::string_view kJudge =
    "Below are the available tools, a dialogue, the reference tool call recorded in the "
    "dataset and a tool call predicted by a model. The two calls differ.\n\n"
    "[Tools]\n{{tools}}\n\n"
    "[Dialogue]\n{{context}}\n\n"
    "[Reference call]\n{{reference}}\n\n"
    "[Predicted call]\n{{prediction}}\n\n"
    "Check function choice, parameter values, parameter types and agreement with the user's "
    "latest request. Then classify the pair with exactly one decision:\n"
    "- PRED_WRONG: the reference is correct and the prediction is wrong.\n"
    "- LABEL_WRONG: the prediction is correct and the reference is wrong.\n"
    "- BOTH_CORRECT: both calls satisfy the request.\n"
    "- BOTH_WRONG: neither call satisfies the request.\n\n"
    "Reply with one JSON object: {\"decision\": \"<PRED_WRONG|LABEL_WRONG|BOTH_CORRECT|"
    "BOTH_WRONG>\", \"error_analysis\": \"<which call is wrong, where, and why>\"}.";

inline constexpr std::string_view kExpandSystem =
    "You create new, challenging function-calling training samples from a verified failure "
    "case. Each new sample keeps the core difficulty of the failure (the kind of argument, the "
    "multi-step dependency, the confusable tool) but moves it into a fresh situation. Every "
    "sample must be self-consistent: the dialogue must contain all information needed for the "
    "reference call, and the call must follow the tool schemas exactly.";

// Slots: tools, context, correct_call, wrong_call, error_analysis, scenario_constraint.
inline constexpr std::string_view kExpandUser =
    "[Tools]\n{{tools}}\n\n"
    "[Original dialogue]\n{{context}}\n\n"
    "[Correct call]\n{{correct_call}}\n\n"
    "[Wrong call made by the model]\n{{wrong_call}}\n\n"
    "[Error analysis]\n{{error_analysis}}\n\n"
    "[Scenario constraint]\n{{scenario_constraint}}\n\n"
    "Write one new sample under the scenario constraint that would expose the same mistake. "
    "Reply with one JSON object: {\"tools\": [<optional modified tool schemas; omit to reuse "
    "the tools above>], \"context\": [{\"role\": \"user\"|\"assistant\"|\"tool\", \"content\": "
    "...}, ...], \"label_calls\": [{\"name\": ..., \"arguments\": {...}}, ...]}. The context "
    "must end with a user turn.";

inline constexpr std::string_view kHolisticSystem =
    "You audit function-calling training data for contextual appropriateness, logical "
    "consistency and alignment with the user's intent.";

// Slots: tools, context, label.
inline constexpr std::string_view kHolistic =
    "[Tools]\n{{tools}}\n\n"
    "[Dialogue]\n{{context}}\n\n"
    "[Labelled next step]\n{{label}}\n\n"
    "Is the labelled step the right next action for this dialogue, with argument values "
    "grounded in the dialogue? Reply with one JSON object: {\"verdict\": \"PASS\"|\"FAIL\", "
    "\"reason\": \"...\"}.";

inline constexpr std::string_view kPlannerSystem =
    "You plan realistic multi-turn conversations between a user and a tool-using assistant.";

// Slots: tools, target_turns.
inline constexpr std::string_view kPlanner =
    "Tools available to the assistant:\n{{tools}}\n\n"
    "Plan a conversation with exactly {{target_turns}} user turns. For each user turn give the "
    "user's intent and the tools the assistant should call for it (possibly none). Reply with "
    "one JSON object: {\"outline\": [{\"intent\": \"...\", \"tools\": [\"tool_name\", ...]}, "
    "...]}.";

inline constexpr std::string_view kUserAgentSystem =
    "You play the user in a conversation with an assistant that can call tools. Follow the "
    "plan, speak naturally, and supply missing details when the assistant asks for them.";

// Slots: intent, conversation.
inline constexpr std::string_view kUserAgent =
    "Conversation so far:\n{{conversation}}\n\n"
    "Your goal for this turn: {{intent}}\n\n"
    "Write only the user's next message.";

inline constexpr std::string_view kToolAgentSystem =
    "You simulate the execution of an API. Given its definition and a call, return a plausible "
    "result that is consistent with the definition.";

// Slots: api, call.
inline constexpr std::string_view kToolAgent =
    "[API definition]\n{{api}}\n\n"
    "[Call]\n{{call}}\n\n"
    "Reply with one JSON object: {\"status\": \"ok\"|\"error\", \"payload\": <result>}.";

}  // namespace templates

// The built-in prompt set. Each can be replaced from a file via the config.
struct PromptSet {
    PromptTemplate instruction{std::string(templates::kInstruction)};
    PromptTemplate judge{std::string(templates::kJudge)};
    PromptTemplate expand_user{std::string(templates::kExpandUser)};
    std::string expand_system{templates::kExpandSystem};
    PromptTemplate holistic{std::string(templates::kHolistic)};
    PromptTemplate planner{std::string(templates::kPlanner)};
    PromptTemplate user_agent{std::string(templates::kUserAgent)};
    PromptTemplate tool_agent{std::string(templates::kToolAgent)};
    PromptTemplate api{default_api_prompt_template()};
};

// "role: text" lines, one block per message; "(empty)" for no messages.
std::string render_context(const MessageList& context);

// System prompt for a training or probing request over `tools`.
std::string render_instruction(const PromptTemplate& tmpl, const ToolSet& tools,
                               const std::string& current_time);

}  // namespace looptool
