#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "looptool/call_codec.hpp"
#include "looptool/message.hpp"
#include "looptool/schema.hpp"

namespace looptool {

enum class SampleState { Candidate, Active, Repaired, Retired };

std::string_view to_string(SampleState state);
SampleState sample_state_from_string(std::string_view tag);

struct Provenance {
    std::string kind = "seed";  // seed | repaired | expanded
    std::string episode_id;
    std::string origin_seed_id;
    std::string constraint_label;
    int iteration = 0;
    std::string bucket;  // es | ee | hppl | seed_new once merged
    SampleState state = SampleState::Candidate;

    bool operator==(const Provenance&) const = default;
};

// One GRPO training tuple: tools, dialogue context, reference calls.
struct TrainSample {
    std::string id;
    ToolSet tools;
    MessageList context;
    std::vector<ToolCall> label_calls;
    Provenance provenance;
    int iteration = 0;

    bool operator==(const TrainSample&) const = default;
};

// {"id", "tools", "context", "label_calls", "provenance", "iteration"}
Json to_json(const TrainSample& sample);
TrainSample train_sample_from_json(const Json& doc);

std::vector<TrainSample> read_samples(const std::filesystem::path& path);
void write_samples(const std::filesystem::path& path, const std::vector<TrainSample>& samples);

}  // namespace looptool
