#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "looptool/backend.hpp"
#include "looptool/label_court.hpp"
#include "looptool/sample.hpp"
#include "looptool/templates.hpp"

namespace looptool {

struct ErrorSeed {
    std::string seed_id;
    ToolSet tools;
    MessageList context;
    std::vector<ToolCall> correct_call;
    std::vector<ToolCall> wrong_call;
    std::string wrong_raw;  // unparsed wrong output, used when wrong_call is empty
    std::string analysis;
};

// d_pw: correct = reference, wrong = prediction.
// d_lr: correct = repaired label, wrong = archived label.
std::vector<ErrorSeed> seeds_from_verdicts(const std::vector<PredWrongCase>& d_pw,
                                           const std::vector<RepairedCase>& d_lr);

struct ScenarioConstraint {
    std::string label;
    std::string directive;
};

// Curated directives: alternative user goals, domain constraints and
// environment conditions.
const std::vector<ScenarioConstraint>& builtin_constraints();

// `k` distinct constraints drawn without replacement, seeded per error seed so
// the draw does not depend on processing order.
std::vector<ScenarioConstraint> draw_constraints(const std::vector<ScenarioConstraint>& pool,
                                                 std::size_t k, std::uint64_t rng_seed,
                                                 const std::string& seed_id);

struct ExpandOptions {
    PromptSet prompts;
    int iteration = 1;
    std::size_t k = 4;
    std::uint64_t seed = 0;
    std::size_t workers = 8;
};

struct ExpansionFailure {
    std::string seed_id;
    std::string constraint_label;
    std::string reason;
    std::string raw;
};

struct ExpansionResult {
    std::vector<TrainSample> candidates;
    std::vector<ExpansionFailure> failures;
};

MessageList build_expand_prompt(const ErrorSeed& seed, const ScenarioConstraint& constraint,
                                const ExpandOptions& options = {});

// Parses one generator reply into a candidate. Throws SynthesisError.
TrainSample parse_expansion(const std::string& response, const ErrorSeed& seed,
                            const ScenarioConstraint& constraint, std::size_t index, int iteration);

// Up to k candidates, one per constraint. Throws PreconditionError for k < 1
// or fewer than k constraints, and SynthesisError when nothing parses.
ExpansionResult expand_seed(const ErrorSeed& seed, std::size_t k,
                            const std::vector<ScenarioConstraint>& constraints,
                            const BackendHandle& gen, const ExpandOptions& options = {});

// Expands every seed with constraints from `pool`. Seed-level failures are
// recorded, never thrown.
ExpansionResult expand_all(const std::vector<ErrorSeed>& seeds,
                           const std::vector<ScenarioConstraint>& pool, const BackendHandle& gen,
                           const ExpandOptions& options = {});

struct Rejection {
    std::string sample_id;
    std::string tier;  // "rules" | "judge"
    std::string reason;
};

struct ExpandVerification {
    std::vector<TrainSample> accepted;
    std::vector<Rejection> rejected;
};

// Rule tier first, holistic judge second. A judge transport error defers the
// candidate to a second pass; a second failure rejects it.
ExpandVerification verify_expanded(const std::vector<TrainSample>& candidates,
                                   const BackendHandle& judge, const ExpandOptions& options = {});

}  // namespace looptool
