#include <doctest.h>

#include <atomic>
#include <set>

#include "../support/test_util.hpp"
#include "../support/toy_world.hpp"
#include "looptool/errors.hpp"
#include "looptool/expander.hpp"

using namespace looptool;
using namespace testutil;

namespace {

PredWrongCase pw(std::size_t i) {
    const auto s = toy::corpus()[i];
    auto pred = s.label_calls;
    pred[0].arguments[pred[0].arguments.begin().key()] = "WRONG";
    return {s, pred, serialize_calls(pred), "prediction changed an argument"};
}

RepairedCase lr(std::size_t i) {
    auto s = toy::corpus()[i];
    auto archived = s.label_calls;
    archived[0].arguments[archived[0].arguments.begin().key()] = "OLD";
    return {s, archived, "label had a stale argument"};
}

std::string constraint_in(const std::string& prompt) {
    for (const auto& c : builtin_constraints()) {
        if (prompt.find(c.directive) != std::string::npos) return c.label;
    }
    return "";
}

// One weather sample per constraint; the city encodes the constraint label.
MockEntry weather_reply(const MessageList& m) {
    const auto label = constraint_in(m.at(1).text);
    const Json doc{{"context", {{{"role", "user"}, {"content", "Weather for " + label + " please"}}}},
                   {"label_calls", {{{"name", "get_weather"}, {"arguments", {{"city", label}}}}}}};
    return {"Here it is:\n```json\n" + doc.dump(2) + "\n```", std::nullopt};
}

ErrorSeed weather_seed() { return seeds_from_verdicts({pw(0)}, {}).at(0); }

TrainSample candidate(const std::string& id, const std::string& city) {
    auto s = toy::corpus()[0];
    s.id = id;
    s.label_calls[0].arguments["city"] = city;
    s.provenance.kind = "expanded";
    s.provenance.state = SampleState::Candidate;
    return s;
}

}  // namespace

TEST_SUITE("expander") {

TEST_CASE("seeds come from both verdict sets") {
    const auto seeds = seeds_from_verdicts({pw(0), pw(1)}, {lr(2), lr(3), lr(4)});
    REQUIRE(seeds.size() == 5);
    CHECK(seeds[0].correct_call == toy::corpus()[0].label_calls);
    CHECK(seeds[0].wrong_call == pw(0).prediction);
    for (std::size_t i = 2; i < 5; ++i) {
        CHECK(seeds[i].wrong_call == lr(i).archived_label);
        CHECK(seeds[i].correct_call == lr(i).sample.label_calls);
        CHECK(seeds[i].analysis == "label had a stale argument");
        CHECK(seeds[i].seed_id == toy::corpus()[i].id);
    }
}

TEST_CASE("constraint draws are distinct, seeded and order independent") {
    const auto& pool = builtin_constraints();
    CHECK(pool.size() >= 8);
    const auto a = draw_constraints(pool, 4, 7, "seed-a");
    std::set<std::string> labels;
    for (const auto& c : a) labels.insert(c.label);
    CHECK(labels.size() == 4);
    const auto again = draw_constraints(pool, 4, 7, "seed-a");
    for (std::size_t i = 0; i < 4; ++i) CHECK(again[i].label == a[i].label);
    CHECK_THROWS_AS(draw_constraints(pool, pool.size() + 1, 7, "x"), PreconditionError);
    CHECK(draw_constraints(pool, pool.size(), 1, "x").size() == pool.size());
}

TEST_CASE("expand prompt carries every slot") {
    auto seed = weather_seed();
    const auto c = builtin_constraints()[0];
    const auto m = build_expand_prompt(seed, c);
    REQUIRE(m.size() == 2);
    CHECK(m[0].text == templates::kExpandSystem);
    for (const auto& piece : {serialize_calls(seed.correct_call), serialize_calls(seed.wrong_call), seed.analysis,
                              c.directive, to_json(seed.tools).dump(2)}) {
        CHECK(m[1].text.find(piece) != std::string::npos);
    }
    seed.wrong_call.clear();
    seed.wrong_raw = "unparsed junk";
    CHECK(build_expand_prompt(seed, c)[1].text.find("unparsed junk") != std::string::npos);
}

TEST_CASE("k = 4 gives four candidates with distinct labels") {
    auto gen = responder_backend(BackendRole::Generator, weather_reply);
    const auto seed = weather_seed();
    const auto constraints = draw_constraints(builtin_constraints(), 4, 1, seed.seed_id);
    const auto r = expand_seed(seed, 4, constraints, gen.handle);
    REQUIRE(r.candidates.size() == 4);
    CHECK(r.failures.empty());
    std::set<std::string> labels, ids;
    for (const auto& c : r.candidates) {
        labels.insert(serialize_calls(c.label_calls));
        ids.insert(c.id);
        CHECK(c.provenance.kind == "expanded");
        CHECK(c.provenance.origin_seed_id == seed.seed_id);
        CHECK(c.provenance.state == SampleState::Candidate);
        CHECK(c.tools == seed.tools);
    }
    CHECK(labels.size() == 4);
    CHECK(ids.size() == 4);
    CHECK(gen.transport->call_log().size() == 4);
}

TEST_CASE("malformed replies become failures, not candidates") {
    std::atomic<int> n{0};
    const auto constraints = draw_constraints(builtin_constraints(), 4, 1, "s");
    const auto broken_a = constraints[1].label;
    const auto broken_b = constraints[3].label;
    auto gen = responder_backend(BackendRole::Generator, [&](const MessageList& m) {
        ++n;
        const auto label = constraint_in(m.at(1).text);
        if (label == broken_a) return MockEntry{"I cannot do that.", std::nullopt};
        if (label == broken_b) return MockEntry{R"({"context": [], "label_calls": []})", std::nullopt};
        return weather_reply(m);
    });
    const auto r = expand_seed(weather_seed(), 4, constraints, gen.handle);
    CHECK(r.candidates.size() == 2);
    REQUIRE(r.failures.size() == 2);
    for (const auto& f : r.failures) CHECK(!f.raw.empty());

    auto dead = constant_backend(BackendRole::Generator, "nothing");
    CHECK_THROWS_AS(expand_seed(weather_seed(), 2, constraints, dead.handle), SynthesisError);
    CHECK_THROWS_AS(expand_seed(weather_seed(), 0, constraints, dead.handle), PreconditionError);
    CHECK_THROWS_AS(expand_seed(weather_seed(), 5, constraints, dead.handle), PreconditionError);
}

TEST_CASE("parse_expansion rejects system turns and trailing assistant turns") {
    const auto seed = weather_seed();
    const auto c = builtin_constraints()[0];
    const auto call = R"([{"name": "get_weather", "arguments": {"city": "Rome"}}])";
    CHECK_THROWS_AS(parse_expansion(std::string(R"({"context": [{"role": "system", "content": "x"}, {"role": "user", "content": "y"}], "label_calls": )") + call + "}", seed, c, 0, 1),
                    SynthesisError);
    CHECK_THROWS_AS(parse_expansion(std::string(R"({"context": [{"role": "user", "content": "y"}, {"role": "assistant", "content": "z"}], "label_calls": )") + call + "}", seed, c, 0, 1),
                    SynthesisError);
    const auto ok = parse_expansion(std::string(R"({"context": [{"role": "user", "content": "Rome?"}], "label_calls": )") + call + "}", seed, c, 2, 3);
    CHECK(ok.iteration == 3);
    CHECK(ok.provenance.constraint_label == c.label);
    CHECK(ok.id == seed.seed_id + "/ee3.2");
}

TEST_CASE("expand_all bounds output by k per seed") {
    auto gen = responder_backend(BackendRole::Generator, weather_reply);
    const auto seeds = seeds_from_verdicts({pw(0)}, {lr(5)});
    ExpandOptions opt;
    opt.k = 3;
    const auto r = expand_all(seeds, builtin_constraints(), gen.handle, opt);
    CHECK(r.candidates.size() + r.failures.size() == 6);
    CHECK(r.candidates.size() <= opt.k * seeds.size());
    const auto again = expand_all(seeds, builtin_constraints(), gen.handle, opt);
    REQUIRE(again.candidates.size() == r.candidates.size());
    for (std::size_t i = 0; i < r.candidates.size(); ++i) CHECK(to_json(again.candidates[i]) == to_json(r.candidates[i]));
}

TEST_CASE("verification runs rules before the judge") {
    std::atomic<int> judged{0};
    auto judge = responder_backend(BackendRole::Judge, [&](const MessageList& m) {
        ++judged;
        const bool fail = m.at(1).text.find("Atlantis") != std::string::npos;
        return MockEntry{Json{{"verdict", fail ? "FAIL" : "PASS"}, {"reason", fail ? "made up city" : "ok"}}.dump(),
                         std::nullopt};
    });
    auto broken = candidate("c-rules", "Rome");
    broken.label_calls[0].arguments.erase("city");
    const std::vector<TrainSample> cands{candidate("c-ok", "Rome"), broken, candidate("c-judge", "Atlantis")};
    const auto v = verify_expanded(cands, judge.handle);
    CHECK(judged == 2);
    REQUIRE(v.accepted.size() == 1);
    CHECK(v.accepted[0].id == "c-ok");
    CHECK(v.accepted[0].provenance.state == SampleState::Active);
    REQUIRE(v.rejected.size() == 2);
    CHECK(v.rejected[0].sample_id == "c-rules");
    CHECK(v.rejected[0].tier == "rules");
    CHECK(v.rejected[1].tier == "judge");
    CHECK(v.rejected[1].reason == "made up city");

    const auto empty = verify_expanded({}, judge.handle);
    CHECK(empty.accepted.empty());
    CHECK(empty.rejected.empty());
}

TEST_CASE("a judge outage defers the candidate once") {
    auto judge = responder_backend(BackendRole::Judge, [](const MessageList&) {
        return MockEntry{R"({"verdict": "PASS", "reason": "ok"})", std::nullopt};
    });
    // the handle retries three times, so the first four attempts form one failed call
    judge.transport->set_fault([](std::size_t i) {
        if (i < 4) throw TransportError("HTTP 503", true);
    });
    const auto v = verify_expanded({candidate("c", "Rome")}, judge.handle);
    CHECK(v.accepted.size() == 1);

    auto down = constant_backend(BackendRole::Judge, "PASS");
    down.transport->set_fault([](std::size_t) { throw TransportError("HTTP 503", true); });
    const auto d = verify_expanded({candidate("c", "Rome")}, down.handle);
    REQUIRE(d.rejected.size() == 1);
    CHECK(d.rejected[0].reason.rfind("judge unavailable", 0) == 0);
}

}
