#include "looptool/schema.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "looptool/backend.hpp"
#include "looptool/errors.hpp"
#include "looptool/rng.hpp"

namespace looptool {

std::string_view to_string(ParamType type) {
    switch (type) {
        case ParamType::String: return "string";
        case ParamType::Integer: return "integer";
        case ParamType::Number: return "number";
        case ParamType::Boolean: return "boolean";
        case ParamType::Enum: return "enum";
        case ParamType::Array: return "array";
        case ParamType::Object: return "object";
        case ParamType::Unknown: return "unknown";
    }
    return "unknown";
}

ParamType param_type_from_string(std::string_view tag) {
    static const std::map<std::string_view, ParamType> table = {
        {"string", ParamType::String},   {"str", ParamType::String},
        {"integer", ParamType::Integer}, {"int", ParamType::Integer},
        {"number", ParamType::Number},   {"float", ParamType::Number},
        {"double", ParamType::Number},   {"boolean", ParamType::Boolean},
        {"bool", ParamType::Boolean},    {"enum", ParamType::Enum},
        {"array", ParamType::Array},     {"list", ParamType::Array},
        {"object", ParamType::Object},   {"dict", ParamType::Object},
    };
    const auto it = table.find(tag);
    return it == table.end() ? ParamType::Unknown : it->second;
}

bool ParamSchema::operator==(const ParamSchema& other) const {
    if (type != other.type) return false;
    if (type == ParamType::Unknown && type_tag != other.type_tag) return false;
    if (description != other.description || enum_values != other.enum_values ||
        default_value != other.default_value || extra != other.extra) {
        return false;
    }
    if (static_cast<bool>(item_schema) != static_cast<bool>(other.item_schema)) return false;
    return !item_schema || *item_schema == *other.item_schema;
}

const ParamSchema* ToolSpec::find_param(std::string_view param) const {
    for (const auto& [name, schema] : parameters) {
        if (name == param) return &schema;
    }
    return nullptr;
}

bool ToolSpec::is_required(std::string_view param) const {
    return std::find(required.begin(), required.end(), param) != required.end();
}

const ToolSpec* ToolSet::find(std::string_view name) const {
    for (const auto& t : tools_) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

std::vector<std::string> ToolSet::names() const {
    std::vector<std::string> out;
    out.reserve(tools_.size());
    for (const auto& t : tools_) out.push_back(t.name);
    return out;
}

// ---------------------------------------------------------------------------
// JSON mapping

Json to_json(const ParamSchema& schema) {
    Json out = Json::object();
    if (schema.type == ParamType::Enum) {
        static const std::set<std::string> base_tags = {"string", "integer", "number", "boolean"};
        if (base_tags.count(schema.type_tag) != 0) {
            out["type"] = schema.type_tag;
        } else {
            const bool all_strings =
                schema.enum_values &&
                std::all_of(schema.enum_values->begin(), schema.enum_values->end(),
                            [](const Json& v) { return v.is_string(); });
            out["type"] = all_strings ? "string" : "enum";
        }
    } else if (schema.type == ParamType::Unknown) {
        out["type"] = schema.type_tag;
    } else {
        out["type"] = std::string(to_string(schema.type));
    }
    if (!schema.description.empty()) out["description"] = schema.description;
    if (schema.enum_values) out["enum"] = Json(*schema.enum_values);
    if (schema.item_schema) out["items"] = to_json(*schema.item_schema);
    if (schema.default_value) out["default"] = *schema.default_value;
    for (const auto& [k, v] : schema.extra.items()) out[k] = v;
    return out;
}

Json to_json(const ToolSpec& spec) {
    Json props = Json::object();
    for (const auto& [name, schema] : spec.parameters) props[name] = to_json(schema);
    return Json{{"name", spec.name},
                {"description", spec.description},
                {"parameters",
                 Json{{"type", "object"}, {"properties", std::move(props)}, {"required", spec.required}}}};
}

Json to_json(const ToolSet& tools) {
    Json arr = Json::array();
    for (const auto& t : tools) arr.push_back(to_json(t));
    return arr;
}

namespace {

ParamSchema param_from_json(const Json& doc, const std::string& where) {
    if (!doc.is_object()) throw DataError("parameter " + where + " must be an object");
    ParamSchema p;
    const bool has_enum = doc.contains("enum");
    if (doc.contains("type")) {
        const auto& t = doc.at("type");
        if (!t.is_string()) throw DataError("parameter " + where + " has a non-string type");
        p.type_tag = t.get<std::string>();
        p.type = has_enum ? ParamType::Enum : param_type_from_string(p.type_tag);
    } else if (has_enum) {
        p.type = ParamType::Enum;
    } else {
        throw DataError("parameter " + where + " has no type");
    }
    for (const auto& [key, value] : doc.items()) {
        if (key == "type") continue;
        if (key == "description") {
            p.description = value.is_string() ? value.get<std::string>() : value.dump();
        } else if (key == "enum") {
            if (!value.is_array()) throw DataError("enum of " + where + " must be an array");
            p.enum_values = value.get<std::vector<Json>>();
        } else if (key == "items") {
            p.item_schema = std::make_shared<const ParamSchema>(param_from_json(value, where + "[]"));
        } else if (key == "default") {
            p.default_value = value;
        } else {
            p.extra[key] = value;
        }
    }
    return p;
}

// Parameter names in document order, duplicates included, keyed by the path
// of the object holding them ("parameters/properties", "parameters", ...).
using KeyOrder = std::map<std::string, std::vector<std::string>>;

ToolSpec spec_from_json(const Json& raw, const KeyOrder* order) {
    const Json* fn = &raw;
    std::string prefix;
    if (raw.is_object() && raw.contains("function") && raw.at("function").is_object()) {
        fn = &raw.at("function");
        prefix = "function/";
    }
    if (!fn->is_object()) throw DataError("tool spec must be a JSON object");
    if (!fn->contains("name") || !fn->at("name").is_string()) {
        throw DataError("tool spec has no string name");
    }

    ToolSpec spec;
    spec.name = fn->at("name").get<std::string>();
    if (fn->contains("description") && fn->at("description").is_string()) {
        spec.description = fn->at("description").get<std::string>();
    }

    const Json params = fn->value("parameters", Json::object());
    if (!params.is_object()) throw DataError("parameters of " + spec.name + " must be an object");

    const bool enveloped = params.contains("properties") && params.at("properties").is_object();
    const Json& props = enveloped ? params.at("properties") : params;
    const std::string path = prefix + (enveloped ? "parameters/properties" : "parameters");

    std::vector<std::string> names;
    if (order != nullptr && order->count(path) != 0) {
        names = order->at(path);
    } else {
        for (const auto& [k, v] : props.items()) names.push_back(k);
    }
    for (const auto& name : names) {
        spec.parameters.emplace_back(name, param_from_json(props.at(name), spec.name + "." + name));
    }

    const Json* required = nullptr;
    if (enveloped && params.contains("required")) required = &params.at("required");
    if (!enveloped && fn->contains("required")) required = &fn->at("required");
    if (required != nullptr) {
        if (!required->is_array()) throw DataError("required of " + spec.name + " must be an array");
        for (const auto& r : *required) spec.required.push_back(r.get<std::string>());
    }
    return spec;
}

}  // namespace

ToolSpec tool_spec_from_json(const Json& doc) { return spec_from_json(doc, nullptr); }

ToolSpec parse_tool_spec(std::string_view text) {
    KeyOrder order;
    std::vector<std::string> key_path;
    auto on_event = [&](int depth, Json::parse_event_t event, Json& parsed) {
        if (event == Json::parse_event_t::key && depth >= 1) {
            key_path.resize(static_cast<std::size_t>(depth));
            const auto& key = parsed.get_ref<const std::string&>();
            if (depth >= 2) {
                std::string parent;
                for (int i = 0; i + 1 < depth; ++i) {
                    if (i) parent += '/';
                    parent += key_path[static_cast<std::size_t>(i)];
                }
                order[parent].push_back(key);
            }
            key_path[static_cast<std::size_t>(depth) - 1] = key;
        }
        return true;
    };
    Json doc;
    try {
        doc = Json::parse(text.begin(), text.end(), on_event);
    } catch (const Json::parse_error& e) {
        throw DataError(std::string("tool spec is not valid JSON: ") + e.what());
    }
    return spec_from_json(doc, &order);
}

ToolSet tool_set_from_json(const Json& doc) {
    if (!doc.is_array()) throw DataError("tool set must be a JSON array");
    std::vector<ToolSpec> tools;
    tools.reserve(doc.size());
    for (const auto& t : doc) tools.push_back(tool_spec_from_json(t));
    return ToolSet(std::move(tools));
}

// ---------------------------------------------------------------------------
// Validation

namespace {

bool is_identifier(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
}

void check_param(const ParamSchema& p, const std::string& subject, ValidationReport& report) {
    auto add = [&](ViolationKind kind, std::string msg) {
        report.violations.push_back({kind, subject, std::move(msg)});
    };
    if (p.type == ParamType::Unknown) {
        add(ViolationKind::UnknownType, "type \"" + p.type_tag + "\" is not supported");
    }
    if (p.type == ParamType::Enum) {
        if (!p.enum_values || p.enum_values->empty()) add(ViolationKind::EmptyEnum, "enum has no values");
    } else if (p.enum_values) {
        add(ViolationKind::EnumValuesOnNonEnum, "enum values on a non-enum parameter");
    }
    if (p.type == ParamType::Array) {
        if (!p.item_schema) add(ViolationKind::MissingItemSchema, "array parameter without items");
    } else if (p.item_schema) {
        add(ViolationKind::ItemSchemaOnNonArray, "items on a non-array parameter");
    }
    if (p.item_schema) check_param(*p.item_schema, subject + "[]", report);
}

}  // namespace

ValidationReport validate_api(const ToolSpec& spec) {
    ValidationReport report;
    if (!is_identifier(spec.name)) {
        report.violations.push_back(
            {ViolationKind::EmptyName, spec.name, "tool name must be a non-empty identifier"});
    }
    std::set<std::string> seen;
    std::set<std::string> reported;
    for (const auto& [name, schema] : spec.parameters) {
        const std::string subject = spec.name + "." + name;
        if (!seen.insert(name).second) {
            if (reported.insert(name).second) {
                report.violations.push_back(
                    {ViolationKind::DuplicateParam, subject, "parameter declared more than once"});
            }
            continue;
        }
        if (!is_identifier(name)) {
            report.violations.push_back(
                {ViolationKind::EmptyName, subject, "parameter name must be a non-empty identifier"});
        }
        check_param(schema, subject, report);
    }
    for (const auto& r : spec.required) {
        if (spec.find_param(r) == nullptr) {
            report.violations.push_back({ViolationKind::RequiredNotDeclared, spec.name + "." + r,
                                         "required parameter is not declared"});
        }
    }
    return report;
}

ValidationReport validate_tool_set(const ToolSet& tools) {
    ValidationReport report;
    if (tools.size() > kMaxToolsPerSet) {
        report.violations.push_back({ViolationKind::ToolSetTooLarge, std::to_string(tools.size()),
                                     "more than " + std::to_string(kMaxToolsPerSet) + " tools"});
    }
    std::set<std::string> seen;
    for (const auto& t : tools) {
        if (!seen.insert(t.name).second) {
            report.violations.push_back({ViolationKind::DuplicateTool, t.name, "tool declared more than once"});
        }
        auto sub = validate_api(t);
        report.violations.insert(report.violations.end(), sub.violations.begin(), sub.violations.end());
    }
    return report;
}

// ---------------------------------------------------------------------------
// Trees

namespace {

TreeNode node_from_json(const Json& doc, std::size_t depth) {
    if (depth > 64) throw StructuralError("domain tree deeper than 64 levels");
    if (!doc.is_object() || !doc.contains("label") || !doc.at("label").is_string()) {
        throw StructuralError("tree node needs a string label");
    }
    TreeNode node{doc.at("label").get<std::string>(), {}};
    if (node.label.empty()) throw StructuralError("tree node label is empty");
    if (doc.contains("children")) {
        for (const auto& c : doc.at("children")) node.children.push_back(node_from_json(c, depth + 1));
    }
    return node;
}

Json node_to_json(const TreeNode& node) {
    Json children = Json::array();
    for (const auto& c : node.children) children.push_back(node_to_json(c));
    return Json{{"label", node.label}, {"children", std::move(children)}};
}

void collect_leaves(const TreeNode& node, LeafPath& prefix, std::vector<LeafPath>& out) {
    prefix.push_back(node.label);
    if (node.is_leaf()) {
        out.push_back(prefix);
    } else {
        for (const auto& c : node.children) collect_leaves(c, prefix, out);
    }
    prefix.pop_back();
}

std::size_t count_leaves(const TreeNode& node) {
    if (node.is_leaf()) return 1;
    std::size_t n = 0;
    for (const auto& c : node.children) n += count_leaves(c);
    return n;
}

}  // namespace

std::size_t DomainTree::leaf_count() const { return root ? count_leaves(*root) : 0; }

DomainTree domain_tree_from_json(const Json& doc) {
    DomainTree tree;
    const auto kind = doc.value("kind", std::string("context"));
    if (kind == "context" || kind == "Context") {
        tree.kind = TreeKind::Context;
    } else if (kind == "constraint" || kind == "Constraint") {
        tree.kind = TreeKind::Constraint;
    } else {
        throw StructuralError("unknown tree kind \"" + kind + "\"");
    }
    if (doc.contains("root") && !doc.at("root").is_null()) tree.root = node_from_json(doc.at("root"), 0);
    return tree;
}

Json to_json(const DomainTree& tree) {
    return Json{{"kind", tree.kind == TreeKind::Context ? "context" : "constraint"},
                {"root", tree.root ? node_to_json(*tree.root) : Json()}};
}

LeafPath sample_leaf_path(const DomainTree& tree, std::uint64_t rng_seed) {
    if (tree.empty()) throw StructuralError("cannot sample a leaf path from an empty tree");
    std::vector<LeafPath> leaves;
    LeafPath prefix;
    collect_leaves(*tree.root, prefix, leaves);
    Rng rng(rng_seed);
    return leaves[static_cast<std::size_t>(uniform_below(rng, leaves.size()))];
}

bool is_leaf_path(const DomainTree& tree, const LeafPath& path) {
    if (tree.empty() || path.empty() || path.front() != tree.root->label) return false;
    const TreeNode* node = &*tree.root;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const auto it = std::find_if(node->children.begin(), node->children.end(),
                                     [&](const TreeNode& c) { return c.label == path[i]; });
        if (it == node->children.end()) return false;
        node = &*it;
    }
    return node->is_leaf();
}

// ---------------------------------------------------------------------------
// Synthesis

namespace {

std::string join_path(const LeafPath& path) {
    std::string out;
    for (const auto& label : path) {
        if (!out.empty()) out += " > ";
        out += label;
    }
    return out;
}

constexpr const char* kApiSynthesisSystem =
    "You design realistic, well-scoped APIs for tool-calling datasets. "
    "Reply with a single JSON object and nothing else.";

}  // namespace

PromptText build_api_prompt(const LeafPath& context_path, const LeafPath& constraint_path,
                            const PromptTemplate& tmpl) {
    if (context_path.empty()) throw PreconditionError("context path is empty");
    if (constraint_path.empty()) throw PreconditionError("constraint path is empty");
    tmpl.require_slots({"context_path", "constraint_path"});
    return tmpl.render({{"context_path", join_path(context_path)},
                        {"constraint_path", join_path(constraint_path)}});
}

PromptTemplate default_api_prompt_template() {
    return PromptTemplate(
        "Design one new API.\n\n"
        "Functional scope (coarse to fine): {{context_path}}\n"
        "Structural constraints (coarse to fine): {{constraint_path}}\n\n"
        "The API must serve the functional scope and satisfy every structural constraint. "
        "Return a JSON object with fields \"name\" (snake_case identifier), \"description\", "
        "and \"parameters\" as {\"type\": \"object\", \"properties\": {...}, \"required\": [...]}. "
        "Each property declares \"type\" (string, integer, number, boolean, array or object), "
        "a \"description\", \"enum\" for closed value sets, \"items\" for arrays and an optional "
        "\"default\".");
}

ToolSpec synthesize_api(const PromptText& prompt, const BackendHandle& gen) {
    const MessageList messages{{ChatRole::System, kApiSynthesisSystem}, {ChatRole::User, prompt}};
    const auto exchange = gen.complete(messages);
    const auto span = find_json_span(exchange.response);
    if (span.empty()) throw SynthesisError("generator reply contains no JSON object", exchange.response);
    try {
        return parse_tool_spec(span);
    } catch (const DataError& e) {
        throw SynthesisError(std::string("generator reply is not a tool spec: ") + e.what(),
                             exchange.response);
    } catch (const Json::exception& e) {
        throw SynthesisError(std::string("generator reply is not a tool spec: ") + e.what(),
                             exchange.response);
    }
}

}  // namespace looptool
