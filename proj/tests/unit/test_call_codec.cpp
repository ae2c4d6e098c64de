#include <doctest.h>

#include "../support/gen.hpp"
#include "../support/oracles.hpp"
#include "../support/toy_world.hpp"
#include "looptool/call_codec.hpp"
#include "looptool/errors.hpp"
#include "looptool/verify.hpp"

using namespace looptool;

namespace {

std::string rule_of(const std::string& raw) {
    try {
        parse_output(raw);
    } catch (const ParseError& e) {
        return e.rule();
    }
    return "";
}

}  // namespace

TEST_SUITE("call_codec") {

TEST_CASE("parse_output examples") {
    const auto out = parse_output(
        "<think>The user wants weather.</think>\n<tool_call>\n{\"name\": \"get_weather\", \"arguments\": {\"city\": \"Oslo\"}}\n</tool_call>");
    REQUIRE(out.calls.size() == 1);
    CHECK(out.calls[0].name == "get_weather");
    CHECK(*out.think == "The user wants weather.");

    CHECK(rule_of("<think>hmm</think> just text") == "missing tool_call");
    CHECK(rule_of("<tool_call>{\"name\":\"a\"}</tool_call><tool_call>{\"name\":\"b\"}</tool_call>") ==
          "multiple tool_call blocks");
    CHECK(rule_of("<think>a</think><think>b</think><tool_call>{\"name\":\"a\"}</tool_call>") == "multiple think blocks");
    CHECK(rule_of("<tool_call>{\"name\":\"a\"}</tool_call><think>late</think>") == "think after tool_call");
    CHECK(rule_of("<think>open<tool_call>{\"name\":\"a\"}</tool_call>") == "unbalanced tags");
    CHECK(rule_of("<tool_call>{\"name\": 3}</tool_call>") == "invalid argument payload");
    CHECK(rule_of("<tool_call>  </tool_call>") == "invalid argument payload");
}

TEST_CASE("payload shapes: object, array, one per line, string arguments") {
    CHECK(parse_output("<tool_call>{\"name\":\"a\",\"arguments\":{}}</tool_call>").calls.size() == 1);
    CHECK(parse_output("<tool_call>[{\"name\":\"a\"},{\"name\":\"b\"}]</tool_call>").calls.size() == 2);
    CHECK(parse_output("<tool_call>\n{\"name\":\"a\"}\n{\"name\":\"b\"}\n</tool_call>").calls.size() == 2);
    const auto s = parse_output("<tool_call>{\"name\":\"a\",\"arguments\":\"{\\\"x\\\": 1}\"}</tool_call>");
    CHECK(s.calls[0].arguments.at("x") == 1);
}

TEST_CASE("tool_match examples") {
    const auto tools = toy::tools();
    const ToolCall call{"book_flight", Json{{"origin", "Oslo"}, {"destination", "Lima"}, {"date", "2025-07-01"}}};
    CHECK(tool_match({call}, {call}, tools).matched);

    ToolCall permuted{"book_flight", Json{{"date", "2025-07-01"}, {"destination", "Lima"}, {"origin", "Oslo"}}};
    CHECK(tool_match({permuted}, {call}, tools).matched);
    CHECK(oracle::calls_match({permuted}, {call}, tools));

    ToolCall off = call;
    off.arguments["destination"] = "Lyon";
    const auto v = tool_match({off}, {call}, tools);
    CHECK_FALSE(v.matched);
    REQUIRE(v.diffs.size() == 1);
    CHECK(v.diffs[0].expected == "Lima");
    CHECK(v.diffs[0].got == "Lyon");
}

TEST_CASE("tool_match canonicalization details") {
    const auto tools = toy::tools();
    const ToolCall ref{"convert_currency", Json{{"amount", 1}, {"from", "EUR"}, {"to", "USD"}}};
    CHECK(tool_match({{"convert_currency", Json{{"amount", 1.0}, {"from", " EUR "}, {"to", "USD"}}}}, {ref}, tools).matched);
    // declared defaults fill absent optional params on both sides
    const ToolCall w{"get_weather", Json{{"city", "Oslo"}}};
    CHECK(tool_match({{"get_weather", Json{{"city", "Oslo"}, {"unit", "celsius"}}}}, {w}, tools).matched);
    CHECK_FALSE(tool_match({{"get_weather", Json{{"city", "Oslo"}, {"unit", "fahrenheit"}}}}, {w}, tools).matched);
    // parallel calls compare as a multiset
    const ToolCall w2{"get_weather", Json{{"city", "Lima"}}};
    CHECK(tool_match({w2, w}, {w, w2}, tools).matched);
    CHECK_FALSE(tool_match({w, w}, {w, w2}, tools).matched);
    CHECK_FALSE(tool_match({w}, {w, w2}, tools).matched);
    CHECK_FALSE(tool_match({}, {w}, tools).matched);
    CHECK_THROWS_AS(tool_match({w}, {}, tools), PreconditionError);
    CHECK_THROWS_AS(tool_match({w}, {{"nope", Json::object()}}, tools), DataError);
    CHECK_FALSE(tool_match({{"nope", Json::object()}}, {w}, tools).matched);
}

TEST_CASE("property: reflexive, symmetric, permutation invariant, oracle agreement") {
    Rng rng(4242);
    int agree = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) {
        const auto tools = gen::tool_set(rng, 1 + gen::below(rng, 4));
        std::vector<ToolCall> ref;
        const auto k = 1 + gen::below(rng, 3);
        for (std::size_t j = 0; j < k; ++j) ref.push_back(gen::call_for(tools.tools()[gen::below(rng, tools.size())], rng));
        CHECK(tool_match(ref, ref, tools).matched);

        auto perm = ref;
        for (auto& c : perm) c.arguments = gen::shuffled_keys(c.arguments, rng);
        looptool::shuffle_in_place(perm, rng);
        CHECK(tool_match(perm, ref, tools).matched);

        std::vector<ToolCall> other;
        for (std::size_t j = 0; j < k; ++j) other.push_back(gen::call_for(tools.tools()[gen::below(rng, tools.size())], rng));
        const bool ab = tool_match(other, ref, tools).matched;
        CHECK(ab == tool_match(ref, other, tools).matched);
        agree += ab == oracle::calls_match(other, ref, tools);
    }
    CHECK(agree == n);
}

TEST_CASE("property: a single changed argument yields exactly one diff") {
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
        const auto spec = gen::tool_spec(rng);
        const ToolSet tools({spec});
        const auto ref = gen::call_for(spec, rng);
        auto pred = ref;
        std::vector<std::string> keys;
        for (const auto& [key, _] : ref.arguments.items()) keys.push_back(key);
        const auto& key = keys[gen::below(rng, keys.size())];
        pred.arguments[key] = gen::different_value(ref.arguments[key], rng);
        const auto v = tool_match({pred}, {ref}, tools);
        CHECK_FALSE(v.matched);
        CHECK(v.diffs.size() == 1);
        CHECK_FALSE(oracle::calls_match({pred}, {ref}, tools));
    }
}

TEST_CASE("property: parse_output inverts serialize_output") {
    Rng rng(7);
    for (int i = 0; i < 500; ++i) {
        const auto tools = gen::tool_set(rng, 3);
        ModelOutput o;
        if (gen::coin(rng)) o.think = "reason " + gen::word(rng) + "\nmore " + gen::word(rng);
        const auto k = 1 + gen::below(rng, 3);
        for (std::size_t j = 0; j < k; ++j) o.calls.push_back(gen::call_for(tools.tools()[j % 3], rng));
        const auto back = parse_output(serialize_output(o));
        CHECK(back.think == o.think);
        CHECK(back.calls == o.calls);
    }
}

TEST_CASE("canonical_value folds numbers, trims strings, sorts keys") {
    const auto a = canonical_value(Json::parse(R"({"b": 2.0, "a": " x ", "c": [1.5, 3.0]})"));
    CHECK(a.dump() == R"({"a":"x","b":2,"c":[1.5,3]})");
}

}

TEST_SUITE("verify") {

TEST_CASE("verify_sample_rules examples") {
    auto s = toy::corpus().front();
    CHECK(verify_sample_rules(s).ok());

    auto unknown = s;
    unknown.label_calls = {{"launch_rocket", Json::object()}};
    const auto r1 = verify_sample_rules(unknown);
    REQUIRE(r1.violations.size() == 1);
    CHECK(r1.violations[0].kind == ViolationKind::UnknownTool);

    auto flight = toy::corpus()[1];
    flight.label_calls[0].arguments["passengers"] = "two";
    CHECK(verify_sample_rules(flight).count(ViolationKind::TypeMismatch) == 1);
    flight.label_calls[0].arguments["passengers"] = "2";
    CHECK(verify_sample_rules(flight).ok());
}

TEST_CASE("each violation kind has its trigger") {
    auto s = toy::corpus().front();
    auto& args = s.label_calls[0].arguments;
    args.erase("city");
    CHECK(verify_sample_rules(s).count(ViolationKind::MissingRequiredParam) == 1);
    args["city"] = "Oslo";
    args["unit"] = "kelvin";
    CHECK(verify_sample_rules(s).count(ViolationKind::EnumViolation) == 1);
    args.erase("unit");
    args["mood"] = "sunny";
    CHECK(verify_sample_rules(s).count(ViolationKind::ExtraneousParam) == 1);
    s.label_calls.clear();
    CHECK(verify_sample_rules(s).count(ViolationKind::EmptyLabel) == 1);
}

TEST_CASE("property: removing a violation's cause removes exactly that violation") {
    Rng rng(31337);
    for (int i = 0; i < 300; ++i) {
        const auto spec = gen::tool_spec(rng);
        TrainSample s;
        s.id = "g" + std::to_string(i);
        s.tools = ToolSet({spec});
        s.context = {{ChatRole::User, "go"}};
        s.label_calls = {gen::call_for(spec, rng)};
        REQUIRE(verify_sample_rules(s).ok());

        auto broken = s;
        broken.label_calls[0].arguments["zz_extra"] = 1;
        const auto& req = spec.required.front();
        broken.label_calls[0].arguments.erase(req);
        const auto both = verify_sample_rules(broken);
        CHECK(both.violations.size() == 2);

        auto fix_extra = broken;
        fix_extra.label_calls[0].arguments.erase("zz_extra");
        const auto r = verify_sample_rules(fix_extra);
        CHECK(r.violations.size() == 1);
        CHECK(r.count(ViolationKind::MissingRequiredParam) == 1);
        CHECK(verify_sample_rules(broken) == both);
    }
}

TEST_CASE("holistic verdict parsing") {
    CHECK(parse_holistic_verdict(R"({"verdict": "PASS", "reason": "ok"})").pass);
    CHECK_FALSE(parse_holistic_verdict(R"({"verdict": "FAIL", "reason": "off topic"})").pass);
    CHECK(parse_holistic_verdict("Verdict: PASS").pass);
    CHECK_THROWS_AS(parse_holistic_verdict("PASS or FAIL, hard to say"), VerdictParseError);
    CHECK_THROWS_AS(parse_holistic_verdict("no idea"), VerdictParseError);
}

}
