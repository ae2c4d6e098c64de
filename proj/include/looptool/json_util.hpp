#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace looptool {

// Insertion-ordered JSON so serialized specs and samples keep their field order.
using Json = nlohmann::ordered_json;

// Parses `text` as JSON and rejects duplicate object keys at any depth.
// Throws nlohmann::json::parse_error on syntax errors and DataError on duplicates.
Json parse_json_strict(std::string_view text);

// Locates the JSON document inside a model response: a ```json fenced block if
// present, otherwise the first balanced {...} or [...] span. Returns the empty
// view when nothing plausible is found.
std::string_view find_json_span(std::string_view text);

std::string trim(std::string_view s);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);

std::string read_text_file(const std::filesystem::path& path);

// Writes via a temporary sibling and rename, so readers never see a torn file.
void write_text_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace looptool
