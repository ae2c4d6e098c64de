#include <doctest.h>

#include <map>
#include <mutex>
#include <set>

#include "../support/gen.hpp"
#include "../support/test_util.hpp"
#include "looptool/catalog.hpp"
#include "looptool/errors.hpp"
#include "looptool/schema.hpp"

using namespace looptool;
using testutil::constant_backend;

namespace {

DomainTree tree(const char* json) { return domain_tree_from_json(Json::parse(json)); }

const char* kThreeLevel = R"({"kind": "context", "root": {"label": "root", "children": [
  {"label": "travel", "children": [{"label": "flights"}, {"label": "hotels"}]},
  {"label": "finance", "children": [{"label": "stocks"}, {"label": "fx", "children": [{"label": "spot"}]}]}]}})";

const char* kBalanced = R"({"kind": "constraint", "root": {"label": "r", "children": [
  {"label": "a", "children": [{"label": "a1"}, {"label": "a2"}]},
  {"label": "b", "children": [{"label": "b1"}, {"label": "b2"}]}]}})";

const char* kValidSpec = R"({"name": "get_quote", "description": "Stock quote.",
  "parameters": {"type": "object", "properties": {
    "symbol": {"type": "string", "description": "Ticker"},
    "exchange": {"type": "string", "enum": ["NYSE", "NASDAQ"], "default": "NYSE"}},
  "required": ["symbol"]}})";

}  // namespace

TEST_SUITE("schema") {

TEST_CASE("single-node tree yields the root as a length-1 path") {
    const auto t = tree(R"({"kind": "context", "root": {"label": "only"}})");
    const auto p = sample_leaf_path(t, 7);
    REQUIRE(p.size() == 1);
    CHECK(p[0] == "only");
    CHECK(is_leaf_path(t, p));
}

TEST_CASE("leaf sampling is deterministic per seed") {
    const auto t = tree(kThreeLevel);
    for (std::uint64_t s = 0; s < 50; ++s) CHECK(sample_leaf_path(t, s) == sample_leaf_path(t, s));
}

TEST_CASE("leaf sampling on a balanced depth-2 tree is uniform") {
    const auto t = tree(kBalanced);
    std::map<std::string, int> freq;
    const int n = 10000;
    for (int s = 0; s < n; ++s) freq[sample_leaf_path(t, static_cast<std::uint64_t>(s)).back()]++;
    REQUIRE(freq.size() == 4);
    double chi2 = 0;
    for (const auto& [leaf, count] : freq) {
        CHECK(std::abs(count / double(n) - 0.25) <= 0.02);
        chi2 += (count - n / 4.0) * (count - n / 4.0) / (n / 4.0);
    }
    // 3 degrees of freedom, p = 0.001 critical value
    CHECK(chi2 < 16.27);
}

TEST_CASE("sampled paths always end at a leaf") {
    const auto t = tree(kThreeLevel);
    for (std::uint64_t s = 0; s < 500; ++s) {
        const auto p = sample_leaf_path(t, s * 977);
        CHECK(is_leaf_path(t, p));
        CHECK(p.back() != "fx");
        CHECK(p.back() != "travel");
    }
    CHECK_FALSE(is_leaf_path(t, {"root", "finance"}));
    CHECK_FALSE(is_leaf_path(t, {"root", "nowhere"}));
}

TEST_CASE("empty or malformed trees are structural errors") {
    DomainTree empty;
    CHECK_THROWS_AS(sample_leaf_path(empty, 1), StructuralError);
    CHECK_THROWS_AS(tree(R"({"kind": "context", "root": {"children": []}})"), StructuralError);
    CHECK_THROWS_AS(tree(R"({"kind": "weird", "root": {"label": "x"}})"), StructuralError);
    const auto t = tree(kThreeLevel);
    CHECK(domain_tree_from_json(to_json(t)).leaf_count() == t.leaf_count());
}

TEST_CASE("api prompt embeds every path label") {
    const auto tmpl = default_api_prompt_template();
    const auto prompt = build_api_prompt({"travel", "flights"}, {"params", "enum-heavy"}, tmpl);
    for (const auto* label : {"travel", "flights", "params", "enum-heavy"}) {
        CHECK(prompt.find(label) != std::string::npos);
    }
    CHECK(prompt == build_api_prompt({"travel", "flights"}, {"params", "enum-heavy"}, tmpl));
    CHECK_THROWS_AS(build_api_prompt({"travel"}, {}, tmpl), PreconditionError);
    CHECK_THROWS_AS(build_api_prompt({"travel"}, {"x"}, PromptTemplate("no slots here")), TemplateError);
}

TEST_CASE("synthesize_api parses a scripted spec") {
    auto gen = constant_backend(BackendRole::Generator, std::string("Sure:\n```json\n") + kValidSpec + "\n```");
    const auto spec = synthesize_api("prompt", gen.handle);
    CHECK(spec.name == "get_quote");
    CHECK(spec.parameters.size() == 2);
    CHECK(validate_api(spec).ok());
}

TEST_CASE("malformed generator output is a synthesis error carrying the raw text") {
    auto gen = constant_backend(BackendRole::Generator, "I cannot design that.");
    try {
        synthesize_api("prompt", gen.handle);
        FAIL("expected SynthesisError");
    } catch (const SynthesisError& e) {
        CHECK(e.raw() == "I cannot design that.");
    }
}

TEST_CASE("required naming an absent parameter is caught by validate_api") {
    auto gen = constant_backend(BackendRole::Generator,
                                R"({"name": "f", "description": "d", "parameters": {"type": "object",
                                   "properties": {"a": {"type": "string"}}, "required": ["a", "b"]}})");
    const auto spec = synthesize_api("prompt", gen.handle);
    const auto report = validate_api(spec);
    CHECK(report.count(ViolationKind::RequiredNotDeclared) == 1);
}

TEST_CASE("validate_api examples") {
    CHECK(validate_api(tool_spec_from_json(Json::parse(kValidSpec))).ok());

    const auto dup = parse_tool_spec(R"({"name": "f", "parameters": {"type": "object", "properties": {
        "a": {"type": "string"}, "a": {"type": "integer"}}, "required": []}})");
    const auto r1 = validate_api(dup);
    REQUIRE(r1.violations.size() == 1);
    CHECK(r1.violations[0].kind == ViolationKind::DuplicateParam);
    CHECK(r1.violations[0].subject.find('a') != std::string::npos);

    const auto empty_enum = tool_spec_from_json(Json::parse(
        R"({"name": "f", "parameters": {"type": "object", "properties": {"a": {"type": "string", "enum": []}}}})"));
    const auto r2 = validate_api(empty_enum);
    REQUIRE(r2.violations.size() == 1);
    CHECK(r2.violations[0].kind == ViolationKind::EmptyEnum);
}

TEST_CASE("tool set size is bounded") {
    Rng rng(3);
    std::vector<ToolSpec> tools;
    for (std::size_t i = 0; i <= kMaxToolsPerSet; ++i) tools.push_back(gen::tool_spec(rng, "t" + std::to_string(i)));
    CHECK(validate_tool_set(ToolSet(tools)).count(ViolationKind::ToolSetTooLarge) == 1);
    tools.pop_back();
    CHECK(validate_tool_set(ToolSet(tools)).ok());
    tools.push_back(tools.front());
    CHECK(validate_tool_set(ToolSet(tools)).count(ViolationKind::DuplicateTool) == 1);
}

TEST_CASE("property: spec JSON round trip and validate_api purity") {
    Rng rng(20240601);
    for (int i = 0; i < 500; ++i) {
        const auto spec = gen::tool_spec(rng);
        CAPTURE(to_json(spec).dump());
        const auto text = to_json(spec).dump();
        const auto back = parse_tool_spec(text);
        CHECK(back == spec);
        CHECK(to_json(back).dump() == text);
        CHECK(validate_api(spec).ok());
        CHECK(validate_api(spec) == validate_api(back));
    }
}

TEST_CASE("catalog synthesis records invalid and duplicate specs as failures") {
    const auto ctx = tree(kThreeLevel);
    const auto cons = tree(kBalanced);
    int calls = 0;
    std::mutex mu;
    auto gen = testutil::responder_backend(BackendRole::Generator, [&](const MessageList& m) {
        std::lock_guard lock(mu);
        ++calls;
        const auto& prompt = m.at(1).text;
        if (prompt.find("a1") != std::string::npos) return MockEntry{"no json here", std::nullopt};
        // name derived from the context leaf, so two attempts on one leaf collide
        const auto scope = prompt.substr(prompt.find("scope (coarse to fine): ") + 24);
        const auto leaf = scope.substr(scope.rfind("> ") + 2, scope.find('\n') - scope.rfind("> ") - 2);
        Json spec{{"name", "api_" + leaf}, {"description", "d"},
                  {"parameters", {{"type", "object"}, {"properties", {{"q", {{"type", "string"}}}}}, {"required", {"q"}}}}};
        return MockEntry{spec.dump(), std::nullopt};
    });
    const auto result = synthesize_catalog(ctx, cons, 12, gen.handle, default_api_prompt_template(), 5, 3);
    CHECK(calls == 12);
    CHECK(result.apis.size() + result.failures.size() == 12);
    std::set<std::string> names;
    for (const auto& a : result.apis) CHECK(names.insert(a.name).second);
    for (const auto& f : result.failures) {
        CHECK(is_leaf_path(ctx, f.context_path));
        CHECK(is_leaf_path(cons, f.constraint_path));
    }
    const auto again = synthesize_catalog(ctx, cons, 12, gen.handle, default_api_prompt_template(), 5, 1);
    REQUIRE(again.apis.size() == result.apis.size());
    for (std::size_t i = 0; i < again.apis.size(); ++i) CHECK(again.apis[i] == result.apis[i]);
}

}
