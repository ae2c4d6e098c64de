#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "looptool/backend.hpp"
#include "looptool/sample.hpp"
#include "looptool/templates.hpp"

namespace looptool {

enum class Decision { PredWrong, LabelWrong, BothCorrect, BothWrong };

std::string_view to_string(Decision decision);
std::optional<Decision> decision_from_string(std::string_view tag);

// A mismatched probe outcome. `prediction` is empty when the policy output
// did not parse; the judge then sees `raw_prediction`.
struct JudgeCase {
    TrainSample sample;
    std::vector<ToolCall> prediction;
    std::string raw_prediction;
};

struct JudgeVerdict {
    Decision decision = Decision::BothWrong;
    std::string e_message;

    bool operator==(const JudgeVerdict&) const = default;
};

// System + user messages. Throws TemplateError when a slot is missing.
MessageList build_judge_prompt(const JudgeCase& c, const PromptTemplate& tmpl);

// Accepts {"decision": TAG, "error_analysis": ...} or free text containing
// exactly one distinct decision tag. REF_WRONG is read as LABEL_WRONG.
// Throws VerdictParseError on a missing or ambiguous tag, or on PRED_WRONG /
// LABEL_WRONG without an analysis.
JudgeVerdict parse_verdict(std::string_view response);

struct JudgedCase {
    JudgeCase c;
    std::optional<JudgeVerdict> verdict;  // absent when both attempts failed to parse
    std::string failure;
};

struct CourtOptions {
    PromptTemplate judge_template{std::string(templates::kJudge)};
    // false selects the discard-both-correct routing instead of keeping them
    // as high-PPL candidates
    bool both_correct_to_hppl = true;
    std::size_t workers = 8;
};

// One judge call per case, plus one retry carrying a format reminder when the
// first reply does not parse. Transport errors abort the batch.
std::vector<JudgedCase> judge_cases(const std::vector<JudgeCase>& cases, const BackendHandle& judge,
                                    const CourtOptions& options = {});

struct PredWrongCase {
    TrainSample sample;  // label unchanged
    std::vector<ToolCall> prediction;
    std::string raw_prediction;
    std::string e_message;
};

struct RepairedCase {
    TrainSample sample;  // label replaced by the prediction
    std::vector<ToolCall> archived_label;
    std::string e_message;
};

struct CourtDiscard {
    std::string sample_id;
    std::string reason;
};

struct Routing {
    std::vector<PredWrongCase> d_pw;
    std::vector<RepairedCase> d_lr;
    std::vector<TrainSample> hppl_candidates;
    std::vector<CourtDiscard> discarded;
    std::vector<Json> audit;  // {sample_id, decision, e_message, route, old_label?, new_label?, reason?}
};

// Pure reduction; every case lands in exactly one output set.
Routing route_verdicts(const std::vector<JudgedCase>& judged, const CourtOptions& options = {});

Json to_json(const PredWrongCase& c);
PredWrongCase pred_wrong_case_from_json(const Json& doc);
Json to_json(const RepairedCase& c);
RepairedCase repaired_case_from_json(const Json& doc);

}  // namespace looptool
