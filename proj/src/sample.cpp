#include "looptool/sample.hpp"

#include "looptool/errors.hpp"

namespace looptool {

std::string_view to_string(SampleState state) {
    switch (state) {
        case SampleState::Candidate: return "candidate";
        case SampleState::Active: return "active";
        case SampleState::Repaired: return "repaired";
        case SampleState::Retired: return "retired";
    }
    return "candidate";
}

SampleState sample_state_from_string(std::string_view tag) {
    if (tag == "candidate") return SampleState::Candidate;
    if (tag == "active") return SampleState::Active;
    if (tag == "repaired") return SampleState::Repaired;
    if (tag == "retired") return SampleState::Retired;
    throw DataError("unknown sample state \"" + std::string(tag) + "\"");
}

Json to_json(const TrainSample& sample) {
    const auto& p = sample.provenance;
    Json prov{{"kind", p.kind}, {"iteration", p.iteration}, {"state", to_string(p.state)}};
    if (!p.episode_id.empty()) prov["episode_id"] = p.episode_id;
    if (!p.origin_seed_id.empty()) prov["origin_seed_id"] = p.origin_seed_id;
    if (!p.constraint_label.empty()) prov["constraint_label"] = p.constraint_label;
    if (!p.bucket.empty()) prov["bucket"] = p.bucket;
    return Json{{"id", sample.id},
                {"tools", to_json(sample.tools)},
                {"context", to_json(sample.context)},
                {"label_calls", to_json(sample.label_calls)},
                {"provenance", std::move(prov)},
                {"iteration", sample.iteration}};
}

TrainSample train_sample_from_json(const Json& doc) {
    if (!doc.is_object() || !doc.contains("id")) throw DataError("sample must be an object with an id");
    TrainSample s;
    s.id = doc.at("id").get<std::string>();
    try {
        s.tools = tool_set_from_json(doc.value("tools", Json::array()));
        s.context = message_list_from_json(doc.value("context", Json::array()));
        s.label_calls = tool_calls_from_json(doc.value("label_calls", Json::array()));
        s.iteration = doc.value("iteration", 0);
        if (doc.contains("provenance")) {
            const auto& p = doc.at("provenance");
            s.provenance.kind = p.value("kind", std::string("seed"));
            s.provenance.episode_id = p.value("episode_id", std::string());
            s.provenance.origin_seed_id = p.value("origin_seed_id", std::string());
            s.provenance.constraint_label = p.value("constraint_label", std::string());
            s.provenance.iteration = p.value("iteration", 0);
            s.provenance.bucket = p.value("bucket", std::string());
            s.provenance.state = sample_state_from_string(p.value("state", std::string("candidate")));
        }
    } catch (const Json::exception& e) {
        throw DataError("sample " + s.id + ": " + e.what());
    }
    return s;
}

std::vector<TrainSample> read_samples(const std::filesystem::path& path) {
    std::vector<TrainSample> out;
    for (const auto& row : read_jsonl(path)) out.push_back(train_sample_from_json(row));
    return out;
}

void write_samples(const std::filesystem::path& path, const std::vector<TrainSample>& samples) {
    std::vector<Json> rows;
    rows.reserve(samples.size());
    for (const auto& s : samples) rows.push_back(to_json(s));
    write_jsonl(path, rows);
}

}  // namespace looptool
