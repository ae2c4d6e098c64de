#include "looptool/verify.hpp"

#include <charconv>
#include <cmath>
#include <regex>

#include "looptool/errors.hpp"
#include "looptool/templates.hpp"

namespace looptool {

namespace {

bool parses_as_integer(const std::string& s) {
    const auto t = trim(s);
    if (t.empty()) return false;
    std::int64_t v;
    const char* first = t.data() + (t[0] == '+' ? 1 : 0);
    const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
    return ec == std::errc() && ptr == t.data() + t.size();
}

bool parses_as_number(const std::string& s) {
    const auto t = trim(s);
    if (t.empty()) return false;
    try {
        std::size_t used = 0;
        (void)std::stod(t, &used);
        return used == t.size();
    } catch (const std::exception&) {
        return false;
    }
}

bool enum_contains(const ParamSchema& schema, const Json& value) {
    if (!schema.enum_values) return false;
    const auto v = canonical_value(value);
    for (const auto& allowed : *schema.enum_values) {
        if (canonical_value(allowed) == v) return true;
    }
    return false;
}

}  // namespace

bool value_has_type(const ParamSchema& schema, const Json& value) {
    switch (schema.type) {
        case ParamType::String:
            return value.is_string();
        case ParamType::Integer:
            if (value.is_number_integer()) return true;
            if (value.is_number_float()) {
                const double d = value.get<double>();
                return std::trunc(d) == d;
            }
            return value.is_string() && parses_as_integer(value.get<std::string>());
        case ParamType::Number:
            return value.is_number() || (value.is_string() && parses_as_number(value.get<std::string>()));
        case ParamType::Boolean:
            if (value.is_boolean()) return true;
            if (value.is_string()) {
                const auto t = trim(value.get<std::string>());
                return t == "true" || t == "false";
            }
            return false;
        case ParamType::Array:
            if (!value.is_array()) return false;
            if (schema.item_schema) {
                for (const auto& item : value) {
                    if (schema.item_schema->type == ParamType::Enum) {
                        if (!enum_contains(*schema.item_schema, item)) return false;
                    } else if (!value_has_type(*schema.item_schema, item)) {
                        return false;
                    }
                }
            }
            return true;
        case ParamType::Object:
            return value.is_object();
        case ParamType::Enum:
        case ParamType::Unknown:
            return true;
    }
    return true;
}

ValidationReport verify_calls(const std::vector<ToolCall>& calls, const ToolSet& tools) {
    ValidationReport report;
    auto add = [&](ViolationKind kind, std::string subject, std::string msg) {
        report.violations.push_back({kind, std::move(subject), std::move(msg)});
    };
    if (calls.empty()) add(ViolationKind::EmptyLabel, "", "no tool call");

    for (const auto& call : calls) {
        const auto* spec = tools.find(call.name);
        if (spec == nullptr) {
            add(ViolationKind::UnknownTool, call.name, "tool is not in the available set");
            continue;
        }
        for (const auto& req : spec->required) {
            if (!call.arguments.contains(req)) {
                add(ViolationKind::MissingRequiredParam, call.name + "." + req,
                    "required parameter missing");
            }
        }
        for (const auto& [arg, value] : call.arguments.items()) {
            const auto subject = call.name + "." + arg;
            const auto* schema = spec->find_param(arg);
            if (schema == nullptr) {
                add(ViolationKind::ExtraneousParam, subject, "parameter is not declared");
            } else if (schema->type == ParamType::Enum) {
                if (!enum_contains(*schema, value)) {
                    add(ViolationKind::EnumViolation, subject, value.dump() + " is not an allowed value");
                }
            } else if (!value_has_type(*schema, value)) {
                add(ViolationKind::TypeMismatch, subject,
                    value.dump() + " is not of type " + std::string(to_string(schema->type)));
            }
        }
    }
    return report;
}

ValidationReport verify_sample_rules(const TrainSample& sample) {
    return verify_calls(sample.label_calls, sample.tools);
}

HolisticVerdict parse_holistic_verdict(const std::string& response) {
    const auto span = find_json_span(response);
    if (!span.empty()) {
        try {
            const auto doc = Json::parse(span);
            if (doc.is_object() && doc.contains("verdict") && doc.at("verdict").is_string()) {
                const auto v = trim(doc.at("verdict").get<std::string>());
                const auto reason = doc.value("reason", std::string());
                if (v == "PASS") return {true, reason};
                if (v == "FAIL") return {false, reason};
                throw VerdictParseError("holistic verdict \"" + v + "\" is neither PASS nor FAIL");
            }
        } catch (const Json::exception&) {
            // fall through to tag scan
        }
    }
    static const std::regex pass_re("\\bPASS\\b");
    static const std::regex fail_re("\\bFAIL\\b");
    const bool pass = std::regex_search(response, pass_re);
    const bool fail = std::regex_search(response, fail_re);
    if (pass == fail) throw VerdictParseError("holistic reply has no unambiguous PASS/FAIL");
    return {pass, trim(response)};
}

HolisticVerdict holistic_check(const TrainSample& sample, const BackendHandle& judge,
                               const PromptTemplate& tmpl) {
    tmpl.require_slots({"tools", "context", "label"});
    const auto prompt = tmpl.render({{"tools", to_json(sample.tools).dump(2)},
                                     {"context", render_context(sample.context)},
                                     {"label", serialize_calls(sample.label_calls)}});
    const MessageList messages{{ChatRole::System, std::string(templates::kHolisticSystem)},
                               {ChatRole::User, prompt}};
    return parse_holistic_verdict(judge.complete(messages).response);
}

}  // namespace looptool
