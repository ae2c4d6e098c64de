#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "looptool/json_util.hpp"
#include "looptool/prompt_template.hpp"
#include "looptool/validation.hpp"

namespace looptool {

class BackendHandle;

enum class ParamType { String, Integer, Number, Boolean, Enum, Array, Object, Unknown };

std::string_view to_string(ParamType type);
// Accepts the canonical tags plus common aliases (int, float, bool, list, dict).
ParamType param_type_from_string(std::string_view tag);

struct ParamSchema {
    ParamType type = ParamType::String;
    std::string type_tag;  // original tag, kept so Unknown types can be reported
    std::string description;
    std::optional<std::vector<Json>> enum_values;
    std::shared_ptr<const ParamSchema> item_schema;
    std::optional<Json> default_value;
    Json extra = Json::object();  // unmodelled keys (properties, format, ...), preserved verbatim

    bool operator==(const ParamSchema& other) const;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<std::pair<std::string, ParamSchema>> parameters;
    std::vector<std::string> required;

    const ParamSchema* find_param(std::string_view param) const;
    bool is_required(std::string_view param) const;

    bool operator==(const ToolSpec&) const = default;
};

// Hard bound on tools offered in one dialogue episode.
inline constexpr std::size_t kMaxToolsPerSet = 64;

class ToolSet {
public:
    ToolSet() = default;
    explicit ToolSet(std::vector<ToolSpec> tools) : tools_(std::move(tools)) {}

    const std::vector<ToolSpec>& tools() const noexcept { return tools_; }
    std::size_t size() const noexcept { return tools_.size(); }
    bool empty() const noexcept { return tools_.empty(); }
    const ToolSpec* find(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }
    std::vector<std::string> names() const;

    auto begin() const { return tools_.begin(); }
    auto end() const { return tools_.end(); }

    bool operator==(const ToolSet&) const = default;

private:
    std::vector<ToolSpec> tools_;
};

// JSON in the function-declaration shape:
// {"name", "description", "parameters": {"type": "object", "properties": {...}, "required": [...]}}
Json to_json(const ParamSchema& schema);
Json to_json(const ToolSpec& spec);
Json to_json(const ToolSet& tools);

// Also accepts the {"type": "function", "function": {...}} wrapper and a flat
// "parameters" map without the object envelope. Duplicate keys in `text` are
// kept as duplicate parameters so validate_api can report them.
ToolSpec parse_tool_spec(std::string_view text);
ToolSpec tool_spec_from_json(const Json& doc);
ToolSet tool_set_from_json(const Json& doc);

ValidationReport validate_api(const ToolSpec& spec);
ValidationReport validate_tool_set(const ToolSet& tools);

// ---------------------------------------------------------------------------
// Dual-tree API synthesis

enum class TreeKind { Context, Constraint };

struct TreeNode {
    std::string label;
    std::vector<TreeNode> children;

    bool is_leaf() const noexcept { return children.empty(); }
};

struct DomainTree {
    TreeKind kind = TreeKind::Context;
    std::optional<TreeNode> root;

    bool empty() const noexcept { return !root.has_value(); }
    std::size_t leaf_count() const;
};

DomainTree domain_tree_from_json(const Json& doc);
Json to_json(const DomainTree& tree);

using LeafPath = std::vector<std::string>;

// Uniform over leaves. Throws StructuralError for an empty tree.
LeafPath sample_leaf_path(const DomainTree& tree, std::uint64_t rng_seed);

// True if `path` is a root-to-leaf walk in `tree`.
bool is_leaf_path(const DomainTree& tree, const LeafPath& path);

// Required slots: {{context_path}} and {{constraint_path}}. Path labels are
// joined with " > ".
PromptText build_api_prompt(const LeafPath& context_path, const LeafPath& constraint_path,
                            const PromptTemplate& tmpl);

PromptTemplate default_api_prompt_template();

// Sends the prompt to the generator and parses its reply into a ToolSpec.
// Throws SynthesisError (with the raw reply) when the reply is not a spec;
// transport failures propagate as TransportError.
ToolSpec synthesize_api(const PromptText& prompt, const BackendHandle& gen);

}  // namespace looptool
