#pragma once

// Reference implementations used only by tests. Written from the definitions,
// not from the library code, and kept deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "looptool/call_codec.hpp"
#include "looptool/dialog.hpp"
#include "looptool/grpo.hpp"
#include "looptool/loop.hpp"
#include "looptool/probe.hpp"

namespace oracle {

using looptool::Json;

// (r_i - mean) / population std in long double; all zeros when every reward is equal.
inline std::vector<long double> advantage(const std::vector<double>& r) {
    const std::size_t n = r.size();
    bool all_equal = true;
    for (std::size_t i = 1; i < n; ++i) all_equal = all_equal && r[i] == r[0];
    std::vector<long double> out(n, 0.0L);
    if (all_equal) return out;
    long double sum = 0;
    for (double x : r) sum += x;
    const long double mean = sum / n;
    long double var = 0;
    for (double x : r) var += (x - mean) * (x - mean);
    var /= n;
    const long double sd = std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) out[i] = (r[i] - mean) / sd;
    return out;
}

// min(rho * A, clip(rho, 1 - lo, 1 + hi) * A), spelled out.
inline long double clip_term(long double rho, long double a, long double eps_low, long double eps_high) {
    long double c = rho;
    if (c < 1 - eps_low) c = 1 - eps_low;
    if (c > 1 + eps_high) c = 1 + eps_high;
    const long double x = rho * a;
    const long double y = c * a;
    return x < y ? x : y;
}

inline long double objective(const looptool::RewardedRollout& ro, const looptool::ObjectiveConfig& cfg) {
    std::vector<double> rewards;
    for (const auto& e : ro.group) rewards.push_back(e.reward);
    const auto adv = advantage(rewards);
    const long double g = ro.group.size();
    long double total = 0;
    long double kl = 0;
    for (std::size_t i = 0; i < ro.group.size(); ++i) {
        const auto& e = ro.group[i];
        if (cfg.ratio_mode == looptool::RatioMode::Sequence) {
            long double s_new = 0, s_old = 0;
            for (double v : e.new_logprobs) s_new += v;
            for (double v : e.old_logprobs) s_old += v;
            total += clip_term(std::exp(s_new - s_old), adv[i], cfg.eps_low, cfg.eps_high);
        } else if (!e.new_logprobs.empty()) {
            long double acc = 0;
            for (std::size_t t = 0; t < e.new_logprobs.size(); ++t) {
                acc += clip_term(std::exp(static_cast<long double>(e.new_logprobs[t]) - e.old_logprobs[t]),
                                 adv[i], cfg.eps_low, cfg.eps_high);
            }
            total += acc / e.new_logprobs.size();
        }
        for (std::size_t t = 0; t < e.new_logprobs.size(); ++t) {
            // k3: ratio(old/new) - log ratio - 1
            const long double d = static_cast<long double>(e.old_logprobs[t]) - e.new_logprobs[t];
            kl += std::exp(d) - d - 1;
        }
    }
    long double out = total / g;
    if (cfg.beta > 0) out -= cfg.beta * kl / g;
    return out;
}

inline long double perplexity(const std::vector<double>& lps) {
    long double s = 0;
    for (double v : lps) s += v;
    return std::exp(-s / lps.size());
}

// ---------------------------------------------------------------------------
// Canonicalize-and-compare for tool calls: each call becomes a string with
// trimmed strings, integral numbers printed without a fraction, sorted object
// keys and declared defaults filled for absent optional params. Two call lists
// match iff their sorted string lists are equal.

inline std::string trim_ws(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::string canon(const Json& v) {
    if (v.is_null()) return "null";
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) {
        const double d = v.get<double>();
        if (v.is_number_integer()) return "n" + std::to_string(v.get<long long>());
        if (v.is_number_unsigned()) return "n" + std::to_string(v.get<unsigned long long>());
        if (std::floor(d) == d && std::fabs(d) < 1e18) return "n" + std::to_string(static_cast<long long>(d));
        char buf[64];
        std::snprintf(buf, sizeof buf, "n%.17g", d);
        return buf;
    }
    if (v.is_string()) return "s" + Json(trim_ws(v.get<std::string>())).dump();
    if (v.is_array()) {
        std::string out = "[";
        for (const auto& x : v) out += canon(x) + ",";
        return out + "]";
    }
    std::vector<std::string> keys;
    for (const auto& [k, _] : v.items()) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    std::string out = "{";
    for (const auto& k : keys) out += Json(k).dump() + ":" + canon(v.at(k)) + ",";
    return out + "}";
}

inline std::string canon_call(const looptool::ToolCall& c, const looptool::ToolSet& tools) {
    Json args = c.arguments;
    if (const auto* spec = tools.find(c.name)) {
        for (const auto& [name, schema] : spec->parameters) {
            const bool required = std::find(spec->required.begin(), spec->required.end(), name) != spec->required.end();
            if (!required && schema.default_value && !args.contains(name)) args[name] = *schema.default_value;
        }
    }
    return c.name + "(" + canon(args) + ")";
}

inline bool calls_match(const std::vector<looptool::ToolCall>& pred, const std::vector<looptool::ToolCall>& ref,
                        const looptool::ToolSet& tools) {
    std::vector<std::string> a, b;
    for (const auto& c : pred) a.push_back(canon_call(c, tools));
    for (const auto& c : ref) b.push_back(canon_call(c, tools));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

// ---------------------------------------------------------------------------
// High-PPL selection by rank counting: a record is selected iff fewer than
// `quota` eligible records outrank it.

inline std::set<std::string> top_ppl(const std::vector<looptool::ProbeRecord>& records, std::size_t quota,
                                     const std::set<std::string>& extra = {}) {
    std::vector<const looptool::ProbeRecord*> pool;
    for (const auto& r : records) {
        if (r.ppl && (r.mastered() || extra.count(r.sample_id))) pool.push_back(&r);
    }
    std::set<std::string> out;
    for (const auto* r : pool) {
        std::size_t better = 0;
        for (const auto* o : pool) {
            if (*o->ppl > *r->ppl || (*o->ppl == *r->ppl && o->sample_id < r->sample_id)) ++better;
        }
        if (better < quota) out.insert(r->sample_id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Episode invariants, checked turn by turn. Returns the first problem or "".

inline std::string episode_problem(const looptool::DialogEpisode& ep) {
    using looptool::Speaker;
    if (ep.turns.empty()) return "no turns";
    if (ep.turns.front().speaker != Speaker::User) return "first turn is not a user turn";
    std::vector<std::string> pending;
    for (std::size_t i = 0; i < ep.turns.size(); ++i) {
        const auto& t = ep.turns[i];
        const auto prev = i == 0 ? Speaker::Tool : ep.turns[i - 1].speaker;
        if (t.speaker == Speaker::User) {
            if (i > 0 && prev == Speaker::User) return "consecutive user turns at " + std::to_string(i);
            if (!pending.empty()) return "user turn while calls are pending at " + std::to_string(i);
        } else if (t.speaker == Speaker::Tool) {
            if (pending.empty()) return "orphan tool turn at " + std::to_string(i);
            if (t.results.size() != pending.size()) return "tool turn result count at " + std::to_string(i);
            for (std::size_t k = 0; k < pending.size(); ++k) {
                if (t.results[k].call_id != pending[k]) return "tool result id mismatch at " + std::to_string(i);
            }
            pending.clear();
        } else {
            if (!pending.empty()) return "assistant turn while calls are pending at " + std::to_string(i);
            if (t.calls.size() != t.call_ids.size()) return "call ids misaligned at " + std::to_string(i);
            pending = t.call_ids;
        }
    }
    return {};
}

inline std::size_t call_steps(const looptool::DialogEpisode& ep) {
    std::size_t n = 0;
    for (const auto& t : ep.turns) n += t.speaker == looptool::Speaker::Assistant && !t.calls.empty();
    return n;
}

// ---------------------------------------------------------------------------
// Merge accounting: bucket tags on the dataset agree with the manifest, the
// buckets are disjoint and the counts add up.

inline std::string manifest_problem(const looptool::MergeResult& m) {
    std::map<std::string, std::set<std::string>> by_bucket;
    std::set<std::string> all;
    for (const auto& s : m.dataset) {
        if (!all.insert(s.id).second) return "duplicate id " + s.id;
        by_bucket[s.provenance.bucket].insert(s.id);
    }
    std::size_t sum = 0;
    for (const auto& [name, bc] : m.manifest.buckets) {
        const std::set<std::string> ids(bc.ids.begin(), bc.ids.end());
        if (ids.size() != bc.ids.size()) return "duplicate id inside bucket " + name;
        if (ids != by_bucket[name]) return "bucket " + name + " disagrees with dataset tags";
        sum += ids.size();
    }
    if (sum != m.manifest.total || sum != m.dataset.size()) return "counts do not add up";
    return {};
}

}  // namespace oracle
