#include "looptool/label_court.hpp"

#include <regex>
#include <set>

#include "looptool/errors.hpp"
#include "looptool/parallel.hpp"
#include "looptool/verify.hpp"

namespace looptool {

std::string_view to_string(Decision decision) {
    switch (decision) {
        case Decision::PredWrong: return "PRED_WRONG";
        case Decision::LabelWrong: return "LABEL_WRONG";
        case Decision::BothCorrect: return "BOTH_CORRECT";
        case Decision::BothWrong: return "BOTH_WRONG";
    }
    return "BOTH_WRONG";
}

std::optional<Decision> decision_from_string(std::string_view tag) {
    const auto t = trim(tag);
    if (t == "PRED_WRONG") return Decision::PredWrong;
    if (t == "LABEL_WRONG" || t == "REF_WRONG") return Decision::LabelWrong;
    if (t == "BOTH_CORRECT") return Decision::BothCorrect;
    if (t == "BOTH_WRONG") return Decision::BothWrong;
    return std::nullopt;
}

MessageList build_judge_prompt(const JudgeCase& c, const PromptTemplate& tmpl) {
    tmpl.require_slots({"tools", "context", "reference", "prediction"});
    const auto prediction =
        c.prediction.empty() ? c.raw_prediction : serialize_calls(c.prediction);
    const auto prompt = tmpl.render({{"tools", to_json(c.sample.tools).dump(2)},
                                     {"context", render_context(c.sample.context)},
                                     {"reference", serialize_calls(c.sample.label_calls)},
                                     {"prediction", prediction}});
    return {{ChatRole::System, std::string(templates::kJudgeSystem)}, {ChatRole::User, prompt}};
}

namespace {

JudgeVerdict checked(Decision d, std::string e_message) {
    e_message = trim(e_message);
    if ((d == Decision::PredWrong || d == Decision::LabelWrong) && e_message.empty()) {
        throw VerdictParseError(std::string(to_string(d)) + " verdict carries no error analysis");
    }
    return {d, std::move(e_message)};
}

std::string analysis_text(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return {};
    return v.dump();
}

}  // namespace

JudgeVerdict parse_verdict(std::string_view response) {
    const auto span = find_json_span(response);
    if (!span.empty()) {
        Json doc;
        bool parsed = true;
        try {
            doc = Json::parse(span);
        } catch (const Json::exception&) {
            parsed = false;
        }
        if (parsed && doc.is_object() && doc.contains("decision")) {
            if (!doc.at("decision").is_string()) throw VerdictParseError("decision is not a string");
            const auto d = decision_from_string(doc.at("decision").get<std::string>());
            if (!d) throw VerdictParseError("unknown decision \"" + doc.at("decision").get<std::string>() + "\"");
            std::string analysis;
            for (const char* key : {"error_analysis", "e_message", "analysis", "reason"}) {
                if (doc.contains(key)) {
                    analysis = analysis_text(doc.at(key));
                    break;
                }
            }
            return checked(*d, std::move(analysis));
        }
    }

    static const std::regex tag_re("\\b(PRED_WRONG|LABEL_WRONG|REF_WRONG|BOTH_CORRECT|BOTH_WRONG)\\b");
    const std::string text(response);
    std::set<Decision> found;
    std::size_t last_end = 0;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), tag_re); it != std::sregex_iterator(); ++it) {
        found.insert(*decision_from_string(it->str()));
        last_end = static_cast<std::size_t>(it->position() + it->length());
    }
    if (found.empty()) throw VerdictParseError("judge reply names no decision");
    if (found.size() > 1) throw VerdictParseError("judge reply names conflicting decisions");
    // Free-text replies put the analysis after the tag; fall back to the whole reply.
    auto analysis = trim(text.substr(last_end));
    if (!analysis.empty() && (analysis[0] == ':' || analysis[0] == '-')) analysis = trim(analysis.substr(1));
    if (analysis.empty()) analysis = trim(text);
    return checked(*found.begin(), std::move(analysis));
}

std::vector<JudgedCase> judge_cases(const std::vector<JudgeCase>& cases, const BackendHandle& judge,
                                    const CourtOptions& options) {
    std::vector<JudgedCase> out(cases.size());
    parallel_for(cases.size(), options.workers, [&](std::size_t i) {
        auto messages = build_judge_prompt(cases[i], options.judge_template);
        out[i].c = cases[i];
        auto first = judge.complete(messages).response;
        try {
            out[i].verdict = parse_verdict(first);
            return;
        } catch (const VerdictParseError& e) {
            out[i].failure = e.what();
        }
        messages.push_back({ChatRole::Assistant, first});
        messages.push_back({ChatRole::User,
                            "Your reply could not be read: " + out[i].failure +
                                ". Answer again with one JSON object {\"decision\": "
                                "\"PRED_WRONG|LABEL_WRONG|BOTH_CORRECT|BOTH_WRONG\", "
                                "\"error_analysis\": \"...\"}."});
        try {
            out[i].verdict = parse_verdict(judge.complete(messages).response);
            out[i].failure.clear();
        } catch (const VerdictParseError& e) {
            out[i].failure = std::string("after retry: ") + e.what();
        }
    });
    return out;
}

Routing route_verdicts(const std::vector<JudgedCase>& judged, const CourtOptions& options) {
    Routing r;
    for (const auto& j : judged) {
        const auto& s = j.c.sample;
        Json row{{"sample_id", s.id}};
        auto discard = [&](std::string reason) {
            row["route"] = "discarded";
            row["reason"] = reason;
            r.discarded.push_back({s.id, std::move(reason)});
        };

        if (!j.verdict) {
            row["decision"] = nullptr;
            row["e_message"] = "";
            discard("verdict unparseable: " + j.failure);
            r.audit.push_back(std::move(row));
            continue;
        }
        const auto& v = *j.verdict;
        row["decision"] = to_string(v.decision);
        row["e_message"] = v.e_message;

        switch (v.decision) {
            case Decision::PredWrong:
                row["route"] = "d_pw";
                r.d_pw.push_back({s, j.c.prediction, j.c.raw_prediction, v.e_message});
                break;
            case Decision::LabelWrong: {
                row["old_label"] = to_json(s.label_calls);
                if (j.c.prediction.empty()) {
                    discard("label judged wrong but the prediction has no parseable calls");
                    break;
                }
                TrainSample repaired = s;
                repaired.label_calls = j.c.prediction;
                repaired.provenance.kind = "repaired";
                repaired.provenance.state = SampleState::Repaired;
                row["new_label"] = to_json(repaired.label_calls);
                const auto report = verify_sample_rules(repaired);
                if (!report.ok()) {
                    discard("replacement label fails rule check: " + report.summary());
                    break;
                }
                row["route"] = "d_lr";
                r.d_lr.push_back({std::move(repaired), s.label_calls, v.e_message});
                break;
            }
            case Decision::BothCorrect:
                if (options.both_correct_to_hppl) {
                    row["route"] = "hppl_candidate";
                    r.hppl_candidates.push_back(s);
                } else {
                    discard("both correct");
                }
                break;
            case Decision::BothWrong:
                discard("both wrong");
                break;
        }
        r.audit.push_back(std::move(row));
    }
    return r;
}

// ---------------------------------------------------------------------------

Json to_json(const PredWrongCase& c) {
    return Json{{"sample", to_json(c.sample)},
                {"prediction", to_json(c.prediction)},
                {"raw_prediction", c.raw_prediction},
                {"e_message", c.e_message}};
}

PredWrongCase pred_wrong_case_from_json(const Json& doc) {
    try {
        return {train_sample_from_json(doc.at("sample")), tool_calls_from_json(doc.at("prediction")),
                doc.value("raw_prediction", std::string()), doc.at("e_message").get<std::string>()};
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed d_pw record: ") + e.what());
    }
}

Json to_json(const RepairedCase& c) {
    return Json{{"sample", to_json(c.sample)},
                {"archived_label", to_json(c.archived_label)},
                {"e_message", c.e_message}};
}

RepairedCase repaired_case_from_json(const Json& doc) {
    try {
        return {train_sample_from_json(doc.at("sample")), tool_calls_from_json(doc.at("archived_label")),
                doc.at("e_message").get<std::string>()};
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed d_lr record: ") + e.what());
    }
}

}  // namespace looptool
