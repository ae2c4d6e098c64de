#include "looptool/prompt_template.hpp"

#include <algorithm>
#include <cctype>

#include "looptool/errors.hpp"
#include "looptool/json_util.hpp"

namespace looptool {

namespace {

struct SlotRef {
    std::size_t begin;  // position of "{{"
    std::size_t end;    // one past "}}"
    std::string name;
};

std::vector<SlotRef> scan(const std::string& text) {
    std::vector<SlotRef> refs;
    std::size_t pos = 0;
    while ((pos = text.find("{{", pos)) != std::string::npos) {
        const auto close = text.find("}}", pos + 2);
        if (close == std::string::npos) break;
        auto name = trim(std::string_view(text).substr(pos + 2, close - pos - 2));
        const bool identifier =
            !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
                return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
            });
        if (identifier) {
            refs.push_back({pos, close + 2, std::move(name)});
            pos = close + 2;
        } else {
            pos += 2;
        }
    }
    return refs;
}

}  // namespace

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {}

PromptTemplate PromptTemplate::from_file(const std::filesystem::path& path) {
    return PromptTemplate(read_text_file(path));
}

std::vector<std::string> PromptTemplate::slots() const {
    std::vector<std::string> names;
    for (auto& ref : scan(text_)) {
        if (std::find(names.begin(), names.end(), ref.name) == names.end()) {
            names.push_back(ref.name);
        }
    }
    return names;
}

std::size_t PromptTemplate::slot_count(std::string_view name) const {
    const auto refs = scan(text_);
    return static_cast<std::size_t>(
        std::count_if(refs.begin(), refs.end(), [&](const SlotRef& r) { return r.name == name; }));
}

void PromptTemplate::require_slots(const std::vector<std::string>& required) const {
    for (const auto& name : required) {
        const auto n = slot_count(name);
        if (n == 0) throw TemplateError("template is missing required slot {{" + name + "}}");
        if (n > 1) throw TemplateError("template repeats slot {{" + name + "}}");
    }
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
    std::string out;
    out.reserve(text_.size());
    std::size_t cursor = 0;
    for (const auto& ref : scan(text_)) {
        const auto it = values.find(ref.name);
        if (it == values.end()) throw TemplateError("no value for slot {{" + ref.name + "}}");
        out.append(text_, cursor, ref.begin - cursor);
        out += it->second;
        cursor = ref.end;
    }
    out.append(text_, cursor, std::string::npos);
    return out;
}

}  // namespace looptool
