#include "looptool/call_codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "looptool/errors.hpp"

namespace looptool {

Json to_json(const ToolCall& call) { return Json{{"name", call.name}, {"arguments", call.arguments}}; }

ToolCall tool_call_from_json(const Json& doc) {
    if (!doc.is_object()) throw DataError("tool call must be a JSON object");
    const auto name = doc.find("name");
    if (name == doc.end() || !name->is_string() || name->get_ref<const std::string&>().empty()) {
        throw DataError("tool call needs a non-empty string name");
    }
    ToolCall call{name->get<std::string>(), Json::object()};
    auto args = doc.find("arguments");
    if (args == doc.end()) args = doc.find("parameters");
    if (args != doc.end() && !args->is_null()) {
        if (args->is_string()) {
            call.arguments = parse_json_strict(args->get_ref<const std::string&>());
        } else {
            call.arguments = *args;
        }
        if (!call.arguments.is_object()) {
            throw DataError("arguments of " + call.name + " must be a JSON object");
        }
    }
    return call;
}

Json to_json(const std::vector<ToolCall>& calls) {
    Json arr = Json::array();
    for (const auto& c : calls) arr.push_back(to_json(c));
    return arr;
}

std::vector<ToolCall> tool_calls_from_json(const Json& doc) {
    if (doc.is_object()) return {tool_call_from_json(doc)};
    if (!doc.is_array()) throw DataError("tool calls must be an object or an array");
    std::vector<ToolCall> out;
    out.reserve(doc.size());
    for (const auto& c : doc) out.push_back(tool_call_from_json(c));
    return out;
}

// ---------------------------------------------------------------------------
// Output format

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kCallOpen = "<tool_call>";
constexpr std::string_view kCallClose = "</tool_call>";

std::size_t count_of(std::string_view text, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string_view::npos;
         pos = text.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

std::vector<ToolCall> parse_payload(std::string_view payload) {
    const auto body = trim(payload);
    if (body.empty()) throw ParseError("invalid argument payload", "empty tool_call block");

    std::vector<ToolCall> calls;
    try {
        calls = tool_calls_from_json(parse_json_strict(body));
    } catch (const Json::parse_error&) {
        // One object per line.
        std::istringstream lines(body);
        std::string line;
        while (std::getline(lines, line)) {
            if (trim(line).empty()) continue;
            try {
                calls.push_back(tool_call_from_json(parse_json_strict(line)));
            } catch (const Json::exception& e) {
                throw ParseError("invalid argument payload", e.what());
            } catch (const DataError& e) {
                throw ParseError("invalid argument payload", e.what());
            }
        }
    } catch (const Json::exception& e) {
        throw ParseError("invalid argument payload", e.what());
    } catch (const DataError& e) {
        throw ParseError("invalid argument payload", e.what());
    }
    if (calls.empty()) throw ParseError("invalid argument payload", "no calls in tool_call block");
    return calls;
}

}  // namespace

ModelOutput parse_output(std::string_view raw) {
    const auto think_open = count_of(raw, kThinkOpen);
    const auto think_close = count_of(raw, kThinkClose);
    const auto call_open = count_of(raw, kCallOpen);
    const auto call_close = count_of(raw, kCallClose);

    if (think_open != think_close) throw ParseError("unbalanced tags", "<think>");
    if (call_open != call_close) throw ParseError("unbalanced tags", "<tool_call>");
    if (call_open == 0) throw ParseError("missing tool_call", "");
    if (call_open > 1) throw ParseError("multiple tool_call blocks", "");
    if (think_open > 1) throw ParseError("multiple think blocks", "");

    const auto co = raw.find(kCallOpen);
    const auto cc = raw.find(kCallClose);
    if (cc < co) throw ParseError("unbalanced tags", "</tool_call> before <tool_call>");

    ModelOutput out;
    out.raw = std::string(raw);
    if (think_open == 1) {
        const auto to = raw.find(kThinkOpen);
        const auto tc = raw.find(kThinkClose);
        if (tc < to) throw ParseError("unbalanced tags", "</think> before <think>");
        if (to > co || tc > co) throw ParseError("think after tool_call", "");
        out.think = std::string(raw.substr(to + kThinkOpen.size(), tc - to - kThinkOpen.size()));
    }
    out.calls = parse_payload(raw.substr(co + kCallOpen.size(), cc - co - kCallOpen.size()));
    return out;
}

std::string serialize_calls(const std::vector<ToolCall>& calls) {
    std::string out(kCallOpen);
    out += '\n';
    for (const auto& c : calls) {
        out += to_json(c).dump();
        out += '\n';
    }
    out += kCallClose;
    return out;
}

std::string serialize_output(const ModelOutput& output) {
    std::string out;
    if (output.think) {
        out += kThinkOpen;
        out += *output.think;
        out += kThinkClose;
        out += '\n';
    }
    out += serialize_calls(output.calls);
    return out;
}

// ---------------------------------------------------------------------------
// ToolMatch

nlohmann::json canonical_value(const Json& value) {
    using nlohmann::json;
    switch (value.type()) {
        case Json::value_t::string:
            return json(trim(value.get_ref<const std::string&>()));
        case Json::value_t::number_float: {
            const double d = value.get<double>();
            if (std::isfinite(d) && std::trunc(d) == d && std::fabs(d) < 9.2e18) {
                return json(static_cast<std::int64_t>(d));
            }
            return json(d);
        }
        case Json::value_t::number_unsigned: {
            const auto u = value.get<std::uint64_t>();
            if (u <= static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
                return json(static_cast<std::int64_t>(u));
            }
            return json(u);
        }
        case Json::value_t::array: {
            json arr = json::array();
            for (const auto& v : value) arr.push_back(canonical_value(v));
            return arr;
        }
        case Json::value_t::object: {
            json obj = json::object();
            for (const auto& [k, v] : value.items()) obj[k] = canonical_value(v);
            return obj;
        }
        case Json::value_t::number_integer:
            return json(value.get<std::int64_t>());
        case Json::value_t::boolean:
            return json(value.get<bool>());
        default:
            return json();
    }
}

namespace {

struct CanonicalCall {
    std::string name;
    nlohmann::json args;
    std::string key;  // dump of {name, args}
};

CanonicalCall canonicalize(const ToolCall& call, const ToolSet& specs) {
    CanonicalCall c{call.name, canonical_value(call.arguments), {}};
    if (!c.args.is_object()) c.args = nlohmann::json::object();
    if (const auto* spec = specs.find(call.name)) {
        for (const auto& [name, schema] : spec->parameters) {
            if (schema.default_value && !spec->is_required(name) && !c.args.contains(name)) {
                c.args[name] = canonical_value(*schema.default_value);
            }
        }
    }
    c.key = nlohmann::json{{"a", c.args}, {"n", c.name}}.dump();
    return c;
}

Json to_ordered(const nlohmann::json& v) { return Json::parse(v.dump()); }

}  // namespace

MatchVerdict tool_match(const std::vector<ToolCall>& pred, const std::vector<ToolCall>& ref,
                        const ToolSet& specs) {
    if (ref.empty()) throw PreconditionError("reference call list is empty");
    for (const auto& r : ref) {
        if (!specs.contains(r.name)) {
            throw DataError("reference calls undeclared tool \"" + r.name + "\"");
        }
    }

    std::vector<CanonicalCall> cp, cr;
    for (const auto& p : pred) cp.push_back(canonicalize(p, specs));
    for (const auto& r : ref) cr.push_back(canonicalize(r, specs));

    std::vector<bool> pred_used(cp.size(), false);
    std::vector<bool> ref_done(cr.size(), false);

    // Exact pairs first.
    for (std::size_t i = 0; i < cr.size(); ++i) {
        for (std::size_t j = 0; j < cp.size(); ++j) {
            if (!pred_used[j] && cp[j].key == cr[i].key) {
                pred_used[j] = ref_done[i] = true;
                break;
            }
        }
    }

    MatchVerdict verdict;
    // Same-name pairs: report argument-level differences.
    for (std::size_t i = 0; i < cr.size(); ++i) {
        if (ref_done[i]) continue;
        for (std::size_t j = 0; j < cp.size(); ++j) {
            if (pred_used[j] || cp[j].name != cr[i].name) continue;
            pred_used[j] = ref_done[i] = true;
            const auto& ea = cr[i].args;
            const auto& ga = cp[j].args;
            const std::string base = "/" + std::to_string(i) + "/arguments/";
            for (const auto& [k, v] : ea.items()) {
                const auto g = ga.find(k);
                if (g == ga.end()) {
                    verdict.diffs.push_back({base + k, to_ordered(v), Json()});
                } else if (*g != v) {
                    verdict.diffs.push_back({base + k, to_ordered(v), to_ordered(*g)});
                }
            }
            for (const auto& [k, v] : ga.items()) {
                if (!ea.contains(k)) verdict.diffs.push_back({base + k, Json(), to_ordered(v)});
            }
            break;
        }
    }
    for (std::size_t i = 0; i < cr.size(); ++i) {
        if (!ref_done[i]) verdict.diffs.push_back({"/" + std::to_string(i), to_json(ref[i]), Json()});
    }
    for (std::size_t j = 0; j < cp.size(); ++j) {
        if (!pred_used[j]) {
            verdict.diffs.push_back({"/extra/" + std::to_string(j), Json(), to_json(pred[j])});
        }
    }
    verdict.matched = verdict.diffs.empty();
    return verdict;
}

}  // namespace looptool
