#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "looptool/json_util.hpp"
#include "looptool/schema.hpp"

namespace looptool {

struct ToolCall {
    std::string name;
    Json arguments = Json::object();

    bool operator==(const ToolCall&) const = default;
};

Json to_json(const ToolCall& call);
ToolCall tool_call_from_json(const Json& doc);
Json to_json(const std::vector<ToolCall>& calls);
std::vector<ToolCall> tool_calls_from_json(const Json& doc);

// A model turn: an optional <think>...</think> trace followed by exactly one
// <tool_call>...</tool_call> block. The block holds one {"name", "arguments"}
// object, a JSON array of them, or one object per line.
struct ModelOutput {
    std::optional<std::string> think;
    std::vector<ToolCall> calls;
    std::string raw;
};

// Throws ParseError; rule() is one of "unbalanced tags", "missing tool_call",
// "multiple tool_call blocks", "multiple think blocks", "think after tool_call",
// "invalid argument payload".
ModelOutput parse_output(std::string_view raw);

std::string serialize_output(const ModelOutput& output);

// The <tool_call> block alone, as it appears in assistant context turns.
std::string serialize_calls(const std::vector<ToolCall>& calls);

struct ArgDiff {
    std::string path;
    Json expected;  // null when absent on the reference side
    Json got;       // null when absent on the prediction side

    bool operator==(const ArgDiff&) const = default;
};

struct MatchVerdict {
    bool matched = false;
    std::vector<ArgDiff> diffs;
};

// Canonical form used by tool_match: strings trimmed, integral floats folded
// to integers, object keys sorted. Exposed for tests and audit logs.
nlohmann::json canonical_value(const Json& value);

// Multiset equality of canonicalized calls. Absent optional parameters that
// declare a default in `specs` are filled on both sides first. Lists compare
// in order. Throws PreconditionError for an empty reference and DataError
// when the reference names a tool missing from `specs`.
MatchVerdict tool_match(const std::vector<ToolCall>& pred, const std::vector<ToolCall>& ref,
                        const ToolSet& specs);

}  // namespace looptool
