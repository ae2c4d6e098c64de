#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "looptool/backend.hpp"
#include "looptool/sample.hpp"
#include "looptool/templates.hpp"

namespace looptool {

struct TurnIntent {
    std::string intent;
    std::vector<std::string> tools;

    bool operator==(const TurnIntent&) const = default;
};

struct DialogPlan {
    ToolSet tool_subset;
    int target_turns = 1;  // number of user turns
    std::vector<TurnIntent> outline;

    bool operator==(const DialogPlan&) const = default;
};

enum class Speaker { User, Assistant, Tool };

std::string_view to_string(Speaker speaker);

struct ToolResult {
    std::string call_id;
    bool ok = true;
    Json payload;

    bool operator==(const ToolResult&) const = default;
};

struct Turn {
    Speaker speaker = Speaker::User;
    std::string content;
    std::vector<ToolCall> calls;          // assistant turns only
    std::vector<std::string> call_ids;    // parallel to calls
    std::vector<ToolResult> results;      // tool turns only, one per pending call

    bool operator==(const Turn&) const = default;
};

struct DialogEpisode {
    std::string id;
    std::uint64_t seed = 0;
    std::string current_time;
    DialogPlan plan;
    std::vector<Turn> turns;

    int user_turns() const;
    // Speaker of the next turn, or nullopt once the episode is complete: the
    // last user turn has been answered by a call-free assistant turn.
    std::optional<Speaker> next_speaker() const;
    bool terminal() const { return !next_speaker().has_value(); }

    bool operator==(const DialogEpisode&) const = default;
};

enum class ToolResultMode {
    Backend,  // Tool agent simulated by the generator
    Fake,     // deterministic schema-typed echo, no backend call
};

struct ForgeOptions {
    PromptSet prompts;
    std::string current_time = "2025-06-01 09:00:00";
    ToolResultMode tool_results = ToolResultMode::Backend;
    int max_assistant_steps = 8;  // per user turn, bounds call/response loops
};

// Asks the planner for an outline. Throws SynthesisError on unparseable
// output and ValidationError when the outline breaks the plan invariants.
DialogPlan plan_dialog(const ToolSet& tools, int target_turns, const BackendHandle& gen,
                       const ForgeOptions& options = {});

// Appends exactly one turn, chosen by the user -> assistant -> (tool ->
// assistant)* -> user state machine. Throws PreconditionError on a terminal
// episode and SimulationError when a role's output breaks the episode.
DialogEpisode advance_turn(DialogEpisode episode, const BackendHandle& gen,
                           const ForgeOptions& options = {});

DialogEpisode run_episode(const ToolSet& tools, int target_turns, const BackendHandle& gen,
                          std::uint64_t seed, const ForgeOptions& options = {});

// Throws SimulationError describing the first violated episode invariant.
void check_episode(const DialogEpisode& episode);

// Message form of a turn as it appears in a training context.
Message render_turn(const Turn& turn);

// One sample per assistant tool-call step; context is every turn before it.
std::vector<TrainSample> explode_to_samples(const DialogEpisode& episode);

// Deterministic stand-in for tool execution when no backend simulates it.
ToolResult fake_execute(const ToolSpec& spec, const ToolCall& call, const std::string& call_id);

Json to_json(const DialogEpisode& episode, const PromptTemplate& instruction);
DialogEpisode dialog_episode_from_json(const Json& doc);

// ---------------------------------------------------------------------------
// Corpus simulation

struct CorpusConfig {
    std::size_t episodes = 10;
    int min_turns = 1;
    int max_turns = 6;
    std::size_t min_tools = 1;
    std::size_t max_tools = 8;
    std::uint64_t seed = 0;
    std::size_t workers = 4;
};

struct EpisodeDiscard {
    std::uint64_t seed = 0;
    std::string episode_id;
    std::string reason;
};

struct CorpusResult {
    std::vector<DialogEpisode> episodes;
    std::vector<EpisodeDiscard> discarded;
};

// Simulates episodes over random tool subsets of `catalog`, then admits only
// episodes whose every tool-call step passes the rule tier and, when `judge`
// is given, the holistic judge tier. Failing episodes are discarded whole.
CorpusResult simulate_corpus(const ToolSet& catalog, const CorpusConfig& config,
                             const BackendHandle& gen, const BackendHandle* judge,
                             const ForgeOptions& options = {});

}  // namespace looptool
