#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "looptool/backend.hpp"
#include "looptool/sample.hpp"
#include "looptool/templates.hpp"

namespace looptool {

struct ProbeRecord {
    std::string sample_id;
    std::string raw;                        // greedy output text
    std::optional<ModelOutput> prediction;  // absent when the output did not parse
    std::string parse_error;                // parse rule, empty when parsed
    std::optional<bool> matched;            // defined only when the output parsed
    std::vector<ArgDiff> diffs;
    std::optional<double> ppl;              // present whenever logprobs came back
    std::string backend_error;              // non-empty when the request itself failed

    bool failed() const { return !backend_error.empty(); }
    bool mastered() const { return matched.value_or(false); }
};

Json to_json(const ProbeRecord& record);
ProbeRecord probe_record_from_json(const Json& doc);
std::vector<ProbeRecord> read_probe_records(const std::filesystem::path& path);
void write_probe_records(const std::filesystem::path& path, const std::vector<ProbeRecord>& records);

struct ProbeOptions {
    PromptTemplate instruction{std::string(templates::kInstruction)};
    std::string current_time = "2025-06-01 09:00:00";
    std::size_t workers = 8;
};

// The request a policy sees for `sample`: instruction system prompt then context.
MessageList probe_messages(const TrainSample& sample, const ProbeOptions& options = {});

// One record per sample, in input order. Backend failures are recorded on the
// record and never abort the batch.
std::vector<ProbeRecord> probe_dataset(const std::vector<TrainSample>& dataset,
                                       const BackendHandle& policy,
                                       const ProbeOptions& options = {});

// Unparseable outputs are mismatched; failed requests sit in their own set so
// the partition covers every probed id exactly once.
struct ProbePartition {
    std::set<std::string> mastered;
    std::set<std::string> mismatched;
    std::set<std::string> failed;
    std::set<std::string> hppl;
};

ProbePartition partition_records(const std::vector<ProbeRecord>& records);

// Top-`quota` records by PPL among the eligible pool: mastered records plus
// any id in `extra_eligible` (judged BOTH_CORRECT). Ties go to the smaller
// sample id. Records without a PPL are never eligible. Returned in rank order.
std::vector<std::string> select_high_ppl(const std::vector<ProbeRecord>& records, std::size_t quota,
                                         const std::set<std::string>& extra_eligible = {});

// {"probed", "mastered", "mismatched", "failed", "parse_errors", "match_rate",
//  "ppl": {"count", "mean", "min", "p25", "p50", "p75", "p90", "max"}}
Json probe_summary(const std::vector<ProbeRecord>& records);

}  // namespace looptool
