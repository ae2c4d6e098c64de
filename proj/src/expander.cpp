#include "looptool/expander.hpp"

#include <set>

#include "looptool/errors.hpp"
#include "looptool/parallel.hpp"
#include "looptool/rng.hpp"
#include "looptool/verify.hpp"

namespace looptool {

std::vector<ErrorSeed> seeds_from_verdicts(const std::vector<PredWrongCase>& d_pw,
                                           const std::vector<RepairedCase>& d_lr) {
    std::vector<ErrorSeed> seeds;
    seeds.reserve(d_pw.size() + d_lr.size());
    for (const auto& c : d_pw) {
        seeds.push_back({c.sample.id, c.sample.tools, c.sample.context, c.sample.label_calls,
                         c.prediction, c.raw_prediction, c.e_message});
    }
    for (const auto& c : d_lr) {
        seeds.push_back({c.sample.id, c.sample.tools, c.sample.context, c.sample.label_calls,
                         c.archived_label, {}, c.e_message});
    }
    return seeds;
}

const std::vector<ScenarioConstraint>& builtin_constraints() {
    static const std::vector<ScenarioConstraint> pool{
        {"goal:comparison",
         "The user wants to compare two options before acting, so the request mentions both."},
        {"goal:follow-up",
         "The request is a follow-up that depends on a value stated earlier in the dialogue."},
        {"goal:correction",
         "The user corrects a detail they gave earlier; the latest value must win."},
        {"goal:batch",
         "The user asks for the same operation on several items in a single request."},
        {"goal:indirect",
         "The user states the goal indirectly and never names the function or parameter."},
        {"domain:units",
         "Quantities are given in units or formats that differ from what the schema expects."},
        {"domain:regulated",
         "The domain is regulated (finance, health or legal) and identifiers must be exact."},
        {"domain:locale",
         "Names, dates and places follow a non-US locale and spelling."},
        {"domain:enumerated",
         "The request uses a synonym for an allowed enumerated value."},
        {"env:time-relative",
         "Dates are relative to the current time (\"next Friday\", \"in two hours\")."},
        {"env:prior-failure",
         "An earlier tool result in the dialogue reported an error the assistant must work around."},
        {"env:long-context",
         "The dialogue is long and the needed argument appears several turns back."},
        {"env:distractor",
         "The dialogue mentions a plausible but wrong value close to the correct one."},
        {"env:optional-defaults",
         "Optional parameters should be left at their defaults unless the user says otherwise."},
    };
    return pool;
}

std::vector<ScenarioConstraint> draw_constraints(const std::vector<ScenarioConstraint>& pool,
                                                 std::size_t k, std::uint64_t rng_seed,
                                                 const std::string& seed_id) {
    if (k > pool.size()) {
        throw PreconditionError("need " + std::to_string(k) + " distinct constraints, pool has " +
                                std::to_string(pool.size()));
    }
    Rng rng(rng_seed ^ std::stoull(fnv1a_hex(seed_id), nullptr, 16));
    std::vector<ScenarioConstraint> out;
    for (auto i : sample_without_replacement(rng, pool.size(), k)) out.push_back(pool[i]);
    return out;
}

MessageList build_expand_prompt(const ErrorSeed& seed, const ScenarioConstraint& constraint,
                                const ExpandOptions& options) {
    const auto& tmpl = options.prompts.expand_user;
    tmpl.require_slots({"tools", "context", "correct_call", "wrong_call", "error_analysis",
                        "scenario_constraint"});
    const auto wrong = seed.wrong_call.empty() ? seed.wrong_raw : serialize_calls(seed.wrong_call);
    const auto prompt = tmpl.render({{"tools", to_json(seed.tools).dump(2)},
                                     {"context", render_context(seed.context)},
                                     {"correct_call", serialize_calls(seed.correct_call)},
                                     {"wrong_call", wrong},
                                     {"error_analysis", seed.analysis},
                                     {"scenario_constraint", constraint.directive}});
    return {{ChatRole::System, options.prompts.expand_system}, {ChatRole::User, prompt}};
}

TrainSample parse_expansion(const std::string& response, const ErrorSeed& seed,
                            const ScenarioConstraint& constraint, std::size_t index, int iteration) {
    const auto span = find_json_span(response);
    if (span.empty()) throw SynthesisError("expansion reply holds no JSON", response);
    Json doc;
    try {
        doc = parse_json_strict(span);
    } catch (const Json::exception& e) {
        throw SynthesisError(std::string("expansion reply is not valid JSON: ") + e.what(), response);
    } catch (const DataError& e) {
        throw SynthesisError(e.what(), response);
    }
    if (!doc.is_object()) throw SynthesisError("expansion reply is not an object", response);

    TrainSample s;
    s.id = seed.seed_id + "/ee" + std::to_string(iteration) + "." + std::to_string(index);
    s.iteration = iteration;
    s.provenance.kind = "expanded";
    s.provenance.origin_seed_id = seed.seed_id;
    s.provenance.constraint_label = constraint.label;
    s.provenance.iteration = iteration;
    s.provenance.state = SampleState::Candidate;

    try {
        if (doc.contains("tools") && doc.at("tools").is_array() && !doc.at("tools").empty()) {
            s.tools = tool_set_from_json(doc.at("tools"));
            for (const auto& t : s.tools) {
                const auto report = validate_api(t);
                if (!report.ok()) {
                    throw SynthesisError("introduced tool " + t.name + " is invalid: " + report.summary(),
                                         response);
                }
            }
            const auto set_report = validate_tool_set(s.tools);
            if (!set_report.ok()) throw SynthesisError("introduced tool set is invalid: " + set_report.summary(), response);
        } else {
            s.tools = seed.tools;
        }
        s.context = message_list_from_json(doc.at("context"));
        s.label_calls = tool_calls_from_json(doc.at("label_calls"));
    } catch (const SynthesisError&) {
        throw;
    } catch (const Error& e) {
        throw SynthesisError(std::string("expansion reply malformed: ") + e.what(), response);
    } catch (const Json::exception& e) {
        throw SynthesisError(std::string("expansion reply malformed: ") + e.what(), response);
    }

    if (s.context.empty()) throw SynthesisError("expansion context is empty", response);
    for (const auto& m : s.context) {
        if (m.role == ChatRole::System) throw SynthesisError("expansion context contains a system turn", response);
    }
    if (s.context.back().role == ChatRole::Assistant) {
        throw SynthesisError("expansion context ends with an assistant turn", response);
    }
    return s;
}

namespace {

ExpansionResult expand_collect(const ErrorSeed& seed, const std::vector<ScenarioConstraint>& constraints,
                               const BackendHandle& gen, const ExpandOptions& options,
                               std::size_t workers) {
    struct Slot {
        std::optional<TrainSample> sample;
        std::optional<ExpansionFailure> failure;
    };
    std::vector<Slot> slots(constraints.size());
    parallel_for(constraints.size(), workers, [&](std::size_t i) {
        const auto& constraint = constraints[i];
        try {
            const auto raw = gen.complete(build_expand_prompt(seed, constraint, options)).response;
            slots[i].sample = parse_expansion(raw, seed, constraint, i, options.iteration);
        } catch (const SynthesisError& e) {
            slots[i].failure = ExpansionFailure{seed.seed_id, constraint.label, e.what(), e.raw()};
        }
    });

    ExpansionResult result;
    for (auto& s : slots) {
        if (s.sample) result.candidates.push_back(std::move(*s.sample));
        if (s.failure) result.failures.push_back(std::move(*s.failure));
    }
    return result;
}

}  // namespace

ExpansionResult expand_seed(const ErrorSeed& seed, std::size_t k,
                            const std::vector<ScenarioConstraint>& constraints,
                            const BackendHandle& gen, const ExpandOptions& options) {
    if (k < 1) throw PreconditionError("expansion factor k must be at least 1");
    std::set<std::string> labels;
    for (const auto& c : constraints) labels.insert(c.label);
    if (labels.size() < k || constraints.size() < k) {
        throw PreconditionError("need " + std::to_string(k) + " distinct scenario constraints");
    }
    const std::vector<ScenarioConstraint> used(constraints.begin(), constraints.begin() + static_cast<std::ptrdiff_t>(k));
    auto result = expand_collect(seed, used, gen, options, options.workers);
    if (result.candidates.empty()) {
        throw SynthesisError("no candidate parsed for seed " + seed.seed_id,
                             result.failures.empty() ? std::string() : result.failures.front().raw);
    }
    return result;
}

ExpansionResult expand_all(const std::vector<ErrorSeed>& seeds,
                           const std::vector<ScenarioConstraint>& pool, const BackendHandle& gen,
                           const ExpandOptions& options) {
    std::vector<ExpansionResult> per_seed(seeds.size());
    parallel_for(seeds.size(), options.workers, [&](std::size_t i) {
        const auto constraints = draw_constraints(pool, options.k, options.seed, seeds[i].seed_id);
        per_seed[i] = expand_collect(seeds[i], constraints, gen, options, 1);
    });

    ExpansionResult all;
    for (auto& r : per_seed) {
        for (auto& c : r.candidates) all.candidates.push_back(std::move(c));
        for (auto& f : r.failures) all.failures.push_back(std::move(f));
    }
    return all;
}

ExpandVerification verify_expanded(const std::vector<TrainSample>& candidates,
                                   const BackendHandle& judge, const ExpandOptions& options) {
    enum class Outcome { Accepted, Rejected, Deferred };
    struct Slot {
        Outcome outcome = Outcome::Rejected;
        Rejection rejection;
    };
    std::vector<Slot> slots(candidates.size());

    auto judge_one = [&](std::size_t i, bool last_chance) {
        const auto& c = candidates[i];
        try {
            const auto verdict = holistic_check(c, judge, options.prompts.holistic);
            if (verdict.pass) {
                slots[i].outcome = Outcome::Accepted;
            } else {
                slots[i] = {Outcome::Rejected, {c.id, "judge", verdict.reason}};
            }
        } catch (const VerdictParseError& e) {
            slots[i] = {Outcome::Rejected, {c.id, "judge", e.what()}};
        } catch (const TransportError& e) {
            if (last_chance) {
                slots[i] = {Outcome::Rejected, {c.id, "judge", std::string("judge unavailable: ") + e.what()}};
            } else {
                slots[i].outcome = Outcome::Deferred;
            }
        }
    };

    std::vector<std::size_t> to_judge;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto report = verify_sample_rules(candidates[i]);
        if (!report.ok()) {
            slots[i] = {Outcome::Rejected, {candidates[i].id, "rules", report.summary()}};
        } else {
            to_judge.push_back(i);
        }
    }
    parallel_for(to_judge.size(), options.workers, [&](std::size_t n) { judge_one(to_judge[n], false); });

    std::vector<std::size_t> deferred;
    for (auto i : to_judge) {
        if (slots[i].outcome == Outcome::Deferred) deferred.push_back(i);
    }
    parallel_for(deferred.size(), options.workers, [&](std::size_t n) { judge_one(deferred[n], true); });

    ExpandVerification out;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (slots[i].outcome == Outcome::Accepted) {
            auto s = candidates[i];
            s.provenance.state = SampleState::Active;
            out.accepted.push_back(std::move(s));
        } else {
            out.rejected.push_back(slots[i].rejection);
        }
    }
    return out;
}

}  // namespace looptool
