#include "looptool/dialog.hpp"

#include <algorithm>
#include <set>

#include "looptool/errors.hpp"
#include "looptool/parallel.hpp"
#include "looptool/rng.hpp"
#include "looptool/verify.hpp"

namespace looptool {

std::string_view to_string(Speaker speaker) {
    switch (speaker) {
        case Speaker::User: return "user";
        case Speaker::Assistant: return "assistant";
        case Speaker::Tool: return "tool";
    }
    return "user";
}

int DialogEpisode::user_turns() const {
    return static_cast<int>(std::count_if(turns.begin(), turns.end(),
                                          [](const Turn& t) { return t.speaker == Speaker::User; }));
}

std::optional<Speaker> DialogEpisode::next_speaker() const {
    if (turns.empty()) return Speaker::User;
    const auto& last = turns.back();
    switch (last.speaker) {
        case Speaker::User: return Speaker::Assistant;
        case Speaker::Tool: return Speaker::Assistant;
        case Speaker::Assistant:
            if (!last.calls.empty()) return Speaker::Tool;
            if (user_turns() >= plan.target_turns) return std::nullopt;
            return Speaker::User;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------

namespace {

Json parse_reply_object(const std::string& response, const char* what) {
    const auto span = find_json_span(response);
    if (span.empty()) throw SynthesisError(std::string(what) + " reply holds no JSON", response);
    try {
        return parse_json_strict(span);
    } catch (const Json::exception& e) {
        throw SynthesisError(std::string(what) + " reply is not valid JSON: " + e.what(), response);
    } catch (const DataError& e) {
        throw SynthesisError(std::string(what) + " reply: " + e.what(), response);
    }
}

MessageList render_turns(const std::vector<Turn>& turns, std::size_t upto) {
    MessageList out;
    out.reserve(upto);
    for (std::size_t i = 0; i < upto; ++i) out.push_back(render_turn(turns[i]));
    return out;
}

std::string strip_think(const std::string& text) {
    auto out = text;
    const auto open = out.find("<think>");
    if (open != std::string::npos) {
        const auto close = out.find("</think>", open);
        if (close != std::string::npos) out.erase(open, close + 8 - open);
    }
    return trim(out);
}

Json typed_default(const ParamSchema& schema) {
    if (schema.default_value) return *schema.default_value;
    switch (schema.type) {
        case ParamType::String: return "";
        case ParamType::Integer: return 0;
        case ParamType::Number: return 0.0;
        case ParamType::Boolean: return false;
        case ParamType::Enum:
            return schema.enum_values && !schema.enum_values->empty() ? schema.enum_values->front()
                                                                       : Json();
        case ParamType::Array: return Json::array();
        case ParamType::Object: return Json::object();
        case ParamType::Unknown: return Json();
    }
    return Json();
}

Turn user_step(const DialogEpisode& ep, const BackendHandle& gen, const ForgeOptions& opt) {
    const auto k = static_cast<std::size_t>(ep.user_turns());
    const auto& intent = ep.plan.outline.at(k).intent;
    const auto prompt = opt.prompts.user_agent.render(
        {{"intent", intent}, {"conversation", render_context(render_turns(ep.turns, ep.turns.size()))}});
    const MessageList messages{{ChatRole::System, std::string(templates::kUserAgentSystem)},
                               {ChatRole::User, prompt}};
    auto text = trim(gen.complete(messages).response);
    if (text.empty()) throw SimulationError("user agent produced an empty turn");
    return Turn{Speaker::User, std::move(text), {}, {}, {}};
}

Turn assistant_step(const DialogEpisode& ep, const BackendHandle& gen, const ForgeOptions& opt) {
    int since_user = 0;
    for (auto it = ep.turns.rbegin(); it != ep.turns.rend() && it->speaker != Speaker::User; ++it) {
        if (it->speaker == Speaker::Assistant) ++since_user;
    }
    if (since_user >= opt.max_assistant_steps) {
        throw SimulationError("assistant kept calling tools for " + std::to_string(since_user) +
                              " steps without answering");
    }

    MessageList messages{
        {ChatRole::System, render_instruction(opt.prompts.instruction, ep.plan.tool_subset, ep.current_time)}};
    const auto ctx = render_turns(ep.turns, ep.turns.size());
    messages.insert(messages.end(), ctx.begin(), ctx.end());
    const auto response = gen.complete(messages).response;

    Turn turn{Speaker::Assistant, {}, {}, {}, {}};
    if (response.find("<tool_call>") == std::string::npos) {
        turn.content = strip_think(response);
        if (turn.content.empty()) throw SimulationError("assistant produced an empty reply");
        return turn;
    }
    ModelOutput out;
    try {
        out = parse_output(response);
    } catch (const ParseError& e) {
        throw SimulationError(std::string("assistant output unparseable: ") + e.what());
    }
    const auto report = verify_calls(out.calls, ep.plan.tool_subset);
    if (!report.ok()) throw SimulationError("assistant call invalid: " + report.summary());

    const auto index = ep.turns.size();
    for (std::size_t k = 0; k < out.calls.size(); ++k) {
        turn.call_ids.push_back("call_" + std::to_string(index) + "_" + std::to_string(k));
    }
    turn.calls = std::move(out.calls);
    return turn;
}

ToolResult simulate_tool(const ToolSpec& spec, const ToolCall& call, const std::string& id,
                         const BackendHandle& gen, const ForgeOptions& opt) {
    const auto prompt = opt.prompts.tool_agent.render(
        {{"api", to_json(spec).dump(2)}, {"call", to_json(call).dump()}});
    const MessageList messages{{ChatRole::System, std::string(templates::kToolAgentSystem)},
                               {ChatRole::User, prompt}};
    const auto response = gen.complete(messages).response;
    Json doc;
    try {
        doc = parse_reply_object(response, "tool agent");
    } catch (const SynthesisError& e) {
        throw SimulationError(e.what());
    }
    if (!doc.is_object() || !doc.contains("status") || !doc.at("status").is_string()) {
        throw SimulationError("tool agent reply lacks a status");
    }
    const auto status = doc.at("status").get<std::string>();
    if (status != "ok" && status != "error") {
        throw SimulationError("tool agent status \"" + status + "\" is neither ok nor error");
    }
    return ToolResult{id, status == "ok", doc.value("payload", Json())};
}

Turn tool_step(const DialogEpisode& ep, const BackendHandle& gen, const ForgeOptions& opt) {
    const auto& pending = ep.turns.back();
    Turn turn{Speaker::Tool, {}, {}, {}, {}};
    for (std::size_t k = 0; k < pending.calls.size(); ++k) {
        const auto& call = pending.calls[k];
        const auto* spec = ep.plan.tool_subset.find(call.name);
        if (spec == nullptr) throw SimulationError("call to unknown tool " + call.name);
        turn.results.push_back(opt.tool_results == ToolResultMode::Fake
                                   ? fake_execute(*spec, call, pending.call_ids[k])
                                   : simulate_tool(*spec, call, pending.call_ids[k], gen, opt));
    }
    return turn;
}

}  // namespace

// ---------------------------------------------------------------------------

DialogPlan plan_dialog(const ToolSet& tools, int target_turns, const BackendHandle& gen,
                       const ForgeOptions& options) {
    if (tools.empty()) throw PreconditionError("dialogue plan needs at least one tool");
    if (tools.size() > kMaxToolsPerSet) {
        throw PreconditionError("tool subset of " + std::to_string(tools.size()) +
                                " exceeds the limit of " + std::to_string(kMaxToolsPerSet));
    }
    if (target_turns < 1) throw PreconditionError("target_turns must be at least 1");

    options.prompts.planner.require_slots({"tools", "target_turns"});
    const auto prompt = options.prompts.planner.render(
        {{"tools", to_json(tools).dump(2)}, {"target_turns", std::to_string(target_turns)}});
    const MessageList messages{{ChatRole::System, std::string(templates::kPlannerSystem)},
                               {ChatRole::User, prompt}};
    const auto response = gen.complete(messages).response;
    const auto doc = parse_reply_object(response, "planner");

    const Json* outline = nullptr;
    if (doc.is_array()) {
        outline = &doc;
    } else if (doc.is_object() && doc.contains("outline") && doc.at("outline").is_array()) {
        outline = &doc.at("outline");
    } else {
        throw SynthesisError("planner reply has no outline array", response);
    }

    DialogPlan plan{tools, target_turns, {}};
    for (const auto& item : *outline) {
        TurnIntent intent;
        if (item.is_string()) {
            intent.intent = item.get<std::string>();
        } else if (item.is_object() && item.contains("intent") && item.at("intent").is_string()) {
            intent.intent = item.at("intent").get<std::string>();
            if (item.contains("tools") && item.at("tools").is_array()) {
                for (const auto& t : item.at("tools")) {
                    if (!t.is_string()) throw SynthesisError("outline tool names must be strings", response);
                    intent.tools.push_back(t.get<std::string>());
                }
            }
        } else {
            throw SynthesisError("outline entry lacks an intent", response);
        }
        plan.outline.push_back(std::move(intent));
    }

    if (static_cast<int>(plan.outline.size()) != target_turns) {
        throw ValidationError("planner outlined " + std::to_string(plan.outline.size()) +
                              " user turns, wanted " + std::to_string(target_turns));
    }
    for (const auto& step : plan.outline) {
        for (const auto& name : step.tools) {
            if (!tools.contains(name)) {
                throw ValidationError("outline references tool \"" + name + "\" outside the subset");
            }
        }
    }
    return plan;
}

DialogEpisode advance_turn(DialogEpisode episode, const BackendHandle& gen,
                           const ForgeOptions& options) {
    const auto next = episode.next_speaker();
    if (!next) throw PreconditionError("episode " + episode.id + " is already complete");
    switch (*next) {
        case Speaker::User: episode.turns.push_back(user_step(episode, gen, options)); break;
        case Speaker::Assistant: episode.turns.push_back(assistant_step(episode, gen, options)); break;
        case Speaker::Tool: episode.turns.push_back(tool_step(episode, gen, options)); break;
    }
    return episode;
}

DialogEpisode run_episode(const ToolSet& tools, int target_turns, const BackendHandle& gen,
                          std::uint64_t seed, const ForgeOptions& options) {
    DialogEpisode ep;
    std::string key = std::to_string(seed);
    for (const auto& t : tools) key += "|" + t.name;
    ep.id = "ep-" + fnv1a_hex(key).substr(0, 12);
    ep.seed = seed;
    ep.current_time = options.current_time;
    ep.plan = plan_dialog(tools, target_turns, gen, options);
    while (!ep.terminal()) ep = advance_turn(std::move(ep), gen, options);
    check_episode(ep);
    return ep;
}

void check_episode(const DialogEpisode& ep) {
    auto fail = [&](const std::string& why) {
        throw SimulationError("episode " + ep.id + ": " + why);
    };
    if (ep.user_turns() > ep.plan.target_turns) fail("more user turns than planned");
    for (std::size_t i = 0; i < ep.turns.size(); ++i) {
        const auto& t = ep.turns[i];
        const Turn* prev = i == 0 ? nullptr : &ep.turns[i - 1];
        switch (t.speaker) {
            case Speaker::User:
                if (prev != nullptr && (prev->speaker != Speaker::Assistant || !prev->calls.empty())) {
                    fail("user turn " + std::to_string(i) + " interrupts a pending step");
                }
                break;
            case Speaker::Assistant:
                if (prev == nullptr || prev->speaker == Speaker::Assistant) {
                    fail("assistant turn " + std::to_string(i) + " has nothing to answer");
                }
                if (t.calls.size() != t.call_ids.size()) fail("call ids do not match calls");
                for (const auto& c : t.calls) {
                    if (!ep.plan.tool_subset.contains(c.name)) fail("call to tool outside the subset: " + c.name);
                }
                break;
            case Speaker::Tool:
                if (prev == nullptr || prev->speaker != Speaker::Assistant || prev->calls.empty()) {
                    fail("tool turn " + std::to_string(i) + " without pending calls");
                }
                if (t.results.size() != prev->calls.size()) fail("tool turn does not answer every call");
                for (std::size_t k = 0; k < t.results.size(); ++k) {
                    if (t.results[k].call_id != prev->call_ids[k]) fail("tool result id mismatch");
                }
                break;
        }
    }
}

Message render_turn(const Turn& turn) {
    switch (turn.speaker) {
        case Speaker::User: return {ChatRole::User, turn.content};
        case Speaker::Assistant: {
            if (turn.calls.empty()) return {ChatRole::Assistant, turn.content};
            auto text = turn.content.empty() ? std::string() : turn.content + "\n";
            return {ChatRole::Assistant, text + serialize_calls(turn.calls)};
        }
        case Speaker::Tool: {
            Json rows = Json::array();
            for (const auto& r : turn.results) {
                rows.push_back(Json{{"call_id", r.call_id},
                                    {"status", r.ok ? "ok" : "error"},
                                    {"payload", r.payload}});
            }
            return {ChatRole::Tool, rows.dump()};
        }
    }
    return {ChatRole::User, turn.content};
}

std::vector<TrainSample> explode_to_samples(const DialogEpisode& ep) {
    std::vector<TrainSample> out;
    for (std::size_t i = 0; i < ep.turns.size(); ++i) {
        const auto& t = ep.turns[i];
        if (t.speaker != Speaker::Assistant || t.calls.empty()) continue;
        TrainSample s;
        s.id = ep.id + "#" + std::to_string(out.size());
        s.tools = ep.plan.tool_subset;
        s.context = render_turns(ep.turns, i);
        s.label_calls = t.calls;
        s.provenance.kind = "seed";
        s.provenance.episode_id = ep.id;
        out.push_back(std::move(s));
    }
    return out;
}

ToolResult fake_execute(const ToolSpec& spec, const ToolCall& call, const std::string& call_id) {
    if (spec.name != call.name) {
        throw PreconditionError("fake executor for " + spec.name + " got a call to " + call.name);
    }
    Json result = Json::object();
    for (const auto& [name, schema] : spec.parameters) {
        result[name] = call.arguments.contains(name) ? call.arguments.at(name) : typed_default(schema);
    }
    return ToolResult{call_id, true, Json{{"tool", call.name}, {"echo", std::move(result)}}};
}

// ---------------------------------------------------------------------------

Json to_json(const DialogEpisode& ep, const PromptTemplate& instruction) {
    Json outline = Json::array();
    for (const auto& step : ep.plan.outline) {
        outline.push_back(Json{{"intent", step.intent}, {"tools", step.tools}});
    }
    Json messages = Json::array();
    for (const auto& t : ep.turns) {
        Json m{{"role", to_string(t.speaker)}};
        if (t.speaker == Speaker::Tool) {
            Json results = Json::array();
            for (const auto& r : t.results) {
                results.push_back(Json{{"call_id", r.call_id},
                                       {"status", r.ok ? "ok" : "error"},
                                       {"payload", r.payload}});
            }
            m["results"] = std::move(results);
        } else {
            m["content"] = t.content;
        }
        if (!t.calls.empty()) {
            Json calls = Json::array();
            for (std::size_t k = 0; k < t.calls.size(); ++k) {
                calls.push_back(Json{{"id", t.call_ids[k]},
                                     {"name", t.calls[k].name},
                                     {"arguments", t.calls[k].arguments}});
            }
            m["tool_calls"] = std::move(calls);
        }
        messages.push_back(std::move(m));
    }
    return Json{{"id", ep.id},
                {"seed", ep.seed},
                {"current_time", ep.current_time},
                {"system", render_instruction(instruction, ep.plan.tool_subset, ep.current_time)},
                {"tools", to_json(ep.plan.tool_subset)},
                {"plan", Json{{"target_turns", ep.plan.target_turns}, {"outline", std::move(outline)}}},
                {"messages", std::move(messages)}};
}

DialogEpisode dialog_episode_from_json(const Json& doc) {
    try {
        DialogEpisode ep;
        ep.id = doc.at("id").get<std::string>();
        ep.seed = doc.value("seed", std::uint64_t{0});
        ep.current_time = doc.value("current_time", std::string());
        ep.plan.tool_subset = tool_set_from_json(doc.at("tools"));
        const auto& plan = doc.at("plan");
        ep.plan.target_turns = plan.at("target_turns").get<int>();
        for (const auto& step : plan.at("outline")) {
            ep.plan.outline.push_back(
                {step.at("intent").get<std::string>(), step.value("tools", std::vector<std::string>{})});
        }
        for (const auto& m : doc.at("messages")) {
            const auto role = m.at("role").get<std::string>();
            Turn t;
            if (role == "user") {
                t.speaker = Speaker::User;
            } else if (role == "assistant") {
                t.speaker = Speaker::Assistant;
            } else if (role == "tool") {
                t.speaker = Speaker::Tool;
            } else {
                throw DataError("unknown episode role \"" + role + "\"");
            }
            t.content = m.value("content", std::string());
            if (m.contains("tool_calls")) {
                for (const auto& c : m.at("tool_calls")) {
                    t.call_ids.push_back(c.at("id").get<std::string>());
                    t.calls.push_back(tool_call_from_json(c));
                }
            }
            if (m.contains("results")) {
                for (const auto& r : m.at("results")) {
                    t.results.push_back({r.at("call_id").get<std::string>(),
                                         r.value("status", std::string("ok")) == "ok",
                                         r.value("payload", Json())});
                }
            }
            ep.turns.push_back(std::move(t));
        }
        return ep;
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed episode record: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

CorpusResult simulate_corpus(const ToolSet& catalog, const CorpusConfig& config,
                             const BackendHandle& gen, const BackendHandle* judge,
                             const ForgeOptions& options) {
    if (catalog.empty()) throw PreconditionError("tool catalog is empty");
    if (config.min_turns < 1 || config.max_turns < config.min_turns) {
        throw PreconditionError("turn range must satisfy 1 <= min <= max");
    }
    if (config.min_tools < 1 || config.max_tools < config.min_tools) {
        throw PreconditionError("tool range must satisfy 1 <= min <= max");
    }

    struct Slot {
        std::optional<DialogEpisode> episode;
        std::optional<EpisodeDiscard> discard;
    };
    std::vector<Slot> slots(config.episodes);

    parallel_for(config.episodes, config.workers, [&](std::size_t e) {
        const std::uint64_t seed = config.seed + e;
        Rng rng(seed);
        const int turns = config.min_turns +
                          static_cast<int>(uniform_below(rng, config.max_turns - config.min_turns + 1));
        const auto hi = std::min({config.max_tools, catalog.size(), kMaxToolsPerSet});
        const auto lo = std::min(config.min_tools, hi);
        const auto count = lo + static_cast<std::size_t>(uniform_below(rng, hi - lo + 1));
        auto picks = sample_without_replacement(rng, catalog.size(), count);
        std::sort(picks.begin(), picks.end());
        std::vector<ToolSpec> chosen;
        for (auto i : picks) chosen.push_back(catalog.tools()[i]);
        const ToolSet subset(std::move(chosen));

        std::string episode_id;
        try {
            auto ep = run_episode(subset, turns, gen, seed, options);
            episode_id = ep.id;
            for (const auto& sample : explode_to_samples(ep)) {
                const auto rules = verify_sample_rules(sample);
                if (!rules.ok()) throw ValidationError("rule tier: " + rules.summary());
                if (judge != nullptr) {
                    const auto verdict = holistic_check(sample, *judge, options.prompts.holistic);
                    if (!verdict.pass) throw ValidationError("judge tier: " + verdict.reason);
                }
            }
            slots[e].episode = std::move(ep);
        } catch (const LookupError&) {
            throw;
        } catch (const TransportError&) {
            throw;
        } catch (const Error& err) {
            slots[e].discard = EpisodeDiscard{seed, episode_id, err.what()};
        }
    });

    CorpusResult result;
    for (auto& s : slots) {
        if (s.episode) result.episodes.push_back(std::move(*s.episode));
        if (s.discard) result.discarded.push_back(std::move(*s.discard));
    }
    return result;
}

}  // namespace looptool
