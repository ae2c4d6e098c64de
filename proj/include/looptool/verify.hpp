#pragma once

#include <string>
#include <vector>

#include "looptool/backend.hpp"
#include "looptool/prompt_template.hpp"
#include "looptool/sample.hpp"

namespace looptool {

// Rule tier: call syntax, parameter coverage, type matching and schema
// adherence of `calls` against `tools`.
ValidationReport verify_calls(const std::vector<ToolCall>& calls, const ToolSet& tools);

ValidationReport verify_sample_rules(const TrainSample& sample);

// True if `value` is acceptable for `schema` (numeric strings count as
// numbers, "true"/"false" as booleans). Enum membership is checked separately.
bool value_has_type(const ParamSchema& schema, const Json& value);

struct HolisticVerdict {
    bool pass = false;
    std::string reason;
};

// Parses {"verdict": "PASS"|"FAIL", "reason": ...}, or a reply carrying
// exactly one of the bare words PASS / FAIL. Throws VerdictParseError.
HolisticVerdict parse_holistic_verdict(const std::string& response);

// LLM tier: asks the judge whether the labelled step fits the context,
// is logically consistent and serves the user's intent. Slots:
// {{tools}}, {{context}}, {{label}}.
HolisticVerdict holistic_check(const TrainSample& sample, const BackendHandle& judge,
                               const PromptTemplate& tmpl);

}  // namespace looptool
