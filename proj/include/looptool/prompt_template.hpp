#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace looptool {

using PromptText = std::string;

// Plain text with named `{{slot}}` placeholders.
class PromptTemplate {
public:
    PromptTemplate() = default;
    explicit PromptTemplate(std::string text);

    static PromptTemplate from_file(const std::filesystem::path& path);

    const std::string& text() const noexcept { return text_; }

    // Slot names in order of first appearance.
    std::vector<std::string> slots() const;
    std::size_t slot_count(std::string_view name) const;

    // Throws TemplateError unless every name in `required` appears exactly once.
    void require_slots(const std::vector<std::string>& required) const;

    // Substitutes every slot. A slot without a value is a TemplateError;
    // values are inserted verbatim and never re-scanned for slots.
    std::string render(const std::map<std::string, std::string>& values) const;

private:
    std::string text_;
};

}  // namespace looptool
