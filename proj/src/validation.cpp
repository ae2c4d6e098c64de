#include "looptool/validation.hpp"

#include <algorithm>

namespace looptool {

std::string_view to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::EmptyName: return "empty name";
        case ViolationKind::DuplicateParam: return "duplicate parameter";
        case ViolationKind::UnknownType: return "unknown type";
        case ViolationKind::EmptyEnum: return "empty enum";
        case ViolationKind::EnumValuesOnNonEnum: return "enum values on non-enum";
        case ViolationKind::MissingItemSchema: return "missing item schema";
        case ViolationKind::ItemSchemaOnNonArray: return "item schema on non-array";
        case ViolationKind::RequiredNotDeclared: return "required not declared";
        case ViolationKind::DuplicateTool: return "duplicate tool";
        case ViolationKind::ToolSetTooLarge: return "tool set too large";
        case ViolationKind::EmptyLabel: return "empty label";
        case ViolationKind::UnknownTool: return "unknown tool";
        case ViolationKind::MissingRequiredParam: return "missing required param";
        case ViolationKind::TypeMismatch: return "type mismatch";
        case ViolationKind::EnumViolation: return "enum violation";
        case ViolationKind::ExtraneousParam: return "extraneous param";
    }
    return "unknown";
}

std::size_t ValidationReport::count(ViolationKind kind) const {
    return static_cast<std::size_t>(std::count_if(
        violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == kind; }));
}

std::string ValidationReport::summary() const {
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) out += "; ";
        out += to_string(v.kind);
        out += " (";
        out += v.subject;
        out += ")";
    }
    return out;
}

}  // namespace looptool
