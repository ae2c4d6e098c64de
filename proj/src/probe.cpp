#include "looptool/probe.hpp"

#include <algorithm>
#include <cmath>

#include "looptool/errors.hpp"
#include "looptool/grpo.hpp"
#include "looptool/parallel.hpp"

namespace looptool {

Json to_json(const ProbeRecord& r) {
    Json doc{{"sample_id", r.sample_id}, {"raw", r.raw}};
    if (r.prediction) {
        doc["prediction"] = Json{{"think", r.prediction->think ? Json(*r.prediction->think) : Json()},
                                 {"calls", to_json(r.prediction->calls)}};
    } else {
        doc["prediction"] = nullptr;
    }
    doc["parse_error"] = r.parse_error;
    doc["matched"] = r.matched ? Json(*r.matched) : Json();
    Json diffs = Json::array();
    for (const auto& d : r.diffs) {
        diffs.push_back(Json{{"path", d.path}, {"expected", d.expected}, {"got", d.got}});
    }
    doc["diffs"] = std::move(diffs);
    doc["ppl"] = r.ppl ? Json(*r.ppl) : Json();
    doc["backend_error"] = r.backend_error;
    return doc;
}

ProbeRecord probe_record_from_json(const Json& doc) {
    try {
        ProbeRecord r;
        r.sample_id = doc.at("sample_id").get<std::string>();
        r.raw = doc.value("raw", std::string());
        if (doc.contains("prediction") && !doc.at("prediction").is_null()) {
            const auto& p = doc.at("prediction");
            ModelOutput out;
            if (p.contains("think") && !p.at("think").is_null()) out.think = p.at("think").get<std::string>();
            out.calls = tool_calls_from_json(p.at("calls"));
            out.raw = r.raw;
            r.prediction = std::move(out);
        }
        r.parse_error = doc.value("parse_error", std::string());
        if (doc.contains("matched") && !doc.at("matched").is_null()) r.matched = doc.at("matched").get<bool>();
        if (doc.contains("diffs")) {
            for (const auto& d : doc.at("diffs")) {
                r.diffs.push_back({d.at("path").get<std::string>(), d.value("expected", Json()),
                                   d.value("got", Json())});
            }
        }
        if (doc.contains("ppl") && !doc.at("ppl").is_null()) r.ppl = doc.at("ppl").get<double>();
        r.backend_error = doc.value("backend_error", std::string());
        return r;
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed probe record: ") + e.what());
    }
}

std::vector<ProbeRecord> read_probe_records(const std::filesystem::path& path) {
    std::vector<ProbeRecord> out;
    for (const auto& row : read_jsonl(path)) out.push_back(probe_record_from_json(row));
    return out;
}

void write_probe_records(const std::filesystem::path& path, const std::vector<ProbeRecord>& records) {
    std::vector<Json> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.push_back(to_json(r));
    write_jsonl(path, rows);
}

// ---------------------------------------------------------------------------

MessageList probe_messages(const TrainSample& sample, const ProbeOptions& options) {
    MessageList messages{{ChatRole::System,
                          render_instruction(options.instruction, sample.tools, options.current_time)}};
    messages.insert(messages.end(), sample.context.begin(), sample.context.end());
    return messages;
}

namespace {

ProbeRecord probe_one(const TrainSample& sample, const BackendHandle& policy,
                      const ProbeOptions& options) {
    ProbeRecord rec;
    rec.sample_id = sample.id;
    const auto messages = probe_messages(sample, options);

    ChatExchange ex;
    try {
        const bool want = policy.transport().supports_logprobs();
        try {
            ex = policy.greedy_complete(messages, want);
        } catch (const UnsupportedLogprobsError&) {
            ex = policy.greedy_complete(messages, false);
        }
    } catch (const LookupError&) {
        throw;  // a hermetic script missing an entry is a setup fault, not a sample outcome
    } catch (const Error& e) {
        rec.backend_error = e.what();
        return rec;
    }

    rec.raw = ex.response;
    if (ex.token_logprobs && !ex.token_logprobs->empty()) rec.ppl = perplexity(*ex.token_logprobs);

    try {
        rec.prediction = parse_output(ex.response);
    } catch (const ParseError& e) {
        rec.parse_error = e.rule();
        return rec;
    }
    const auto verdict = tool_match(rec.prediction->calls, sample.label_calls, sample.tools);
    rec.matched = verdict.matched;
    rec.diffs = verdict.diffs;
    return rec;
}

double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.size() == 1) return sorted.front();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace

std::vector<ProbeRecord> probe_dataset(const std::vector<TrainSample>& dataset,
                                       const BackendHandle& policy, const ProbeOptions& options) {
    if (policy.role() != BackendRole::Policy) {
        throw PreconditionError("probing needs a policy backend, got " +
                                std::string(to_string(policy.role())));
    }
    std::vector<ProbeRecord> records(dataset.size());
    parallel_for(dataset.size(), options.workers,
                 [&](std::size_t i) { records[i] = probe_one(dataset[i], policy, options); });
    return records;
}

ProbePartition partition_records(const std::vector<ProbeRecord>& records) {
    ProbePartition p;
    for (const auto& r : records) {
        if (r.failed()) {
            p.failed.insert(r.sample_id);
        } else if (r.mastered()) {
            p.mastered.insert(r.sample_id);
        } else {
            p.mismatched.insert(r.sample_id);
        }
    }
    return p;
}

std::vector<std::string> select_high_ppl(const std::vector<ProbeRecord>& records, std::size_t quota,
                                         const std::set<std::string>& extra_eligible) {
    std::vector<const ProbeRecord*> pool;
    std::set<std::string> seen;
    for (const auto& r : records) {
        if (!r.ppl || r.failed()) continue;
        if (!r.mastered() && extra_eligible.count(r.sample_id) == 0) continue;
        if (!seen.insert(r.sample_id).second) continue;
        pool.push_back(&r);
    }
    std::sort(pool.begin(), pool.end(), [](const ProbeRecord* a, const ProbeRecord* b) {
        if (*a->ppl != *b->ppl) return *a->ppl > *b->ppl;
        return a->sample_id < b->sample_id;
    });
    if (pool.size() > quota) pool.resize(quota);
    std::vector<std::string> out;
    out.reserve(pool.size());
    for (const auto* r : pool) out.push_back(r->sample_id);
    return out;
}

Json probe_summary(const std::vector<ProbeRecord>& records) {
    const auto part = partition_records(records);
    std::size_t parse_errors = 0;
    std::vector<double> ppls;
    for (const auto& r : records) {
        if (!r.failed() && !r.parse_error.empty()) ++parse_errors;
        if (r.ppl) ppls.push_back(*r.ppl);
    }
    const auto answered = records.size() - part.failed.size();
    Json summary{{"probed", records.size()},
                 {"mastered", part.mastered.size()},
                 {"mismatched", part.mismatched.size()},
                 {"failed", part.failed.size()},
                 {"parse_errors", parse_errors},
                 {"match_rate", answered == 0 ? 0.0
                                              : static_cast<double>(part.mastered.size()) /
                                                    static_cast<double>(answered)}};
    Json ppl{{"count", ppls.size()}};
    if (!ppls.empty()) {
        std::sort(ppls.begin(), ppls.end());
        double sum = 0.0;
        for (double v : ppls) sum += v;
        ppl["mean"] = sum / static_cast<double>(ppls.size());
        ppl["min"] = ppls.front();
        ppl["p25"] = quantile(ppls, 0.25);
        ppl["p50"] = quantile(ppls, 0.50);
        ppl["p75"] = quantile(ppls, 0.75);
        ppl["p90"] = quantile(ppls, 0.90);
        ppl["max"] = ppls.back();
    }
    summary["ppl"] = std::move(ppl);
    return summary;
}

}  // namespace looptool
