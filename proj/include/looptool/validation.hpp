#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace looptool {

enum class ViolationKind {
    // ToolSpec admissibility
    EmptyName,
    DuplicateParam,
    UnknownType,
    EmptyEnum,
    EnumValuesOnNonEnum,
    MissingItemSchema,
    ItemSchemaOnNonArray,
    RequiredNotDeclared,
    DuplicateTool,
    ToolSetTooLarge,
    // Tool-call checks against a ToolSet
    EmptyLabel,
    UnknownTool,
    MissingRequiredParam,
    TypeMismatch,
    EnumViolation,
    ExtraneousParam,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::string subject;  // tool or "tool.param" the violation is about
    std::string message;

    bool operator==(const Violation&) const = default;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }
    std::size_t count(ViolationKind kind) const;
    std::string summary() const;

    bool operator==(const ValidationReport&) const = default;
};

}  // namespace looptool
