#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "looptool/backend.hpp"
#include "looptool/config.hpp"
#include "looptool/sample.hpp"

namespace looptool {

enum class Stage { Training, Probing, Judging, Expanding, Merging, Done };

std::string_view to_string(Stage stage);
Stage stage_from_string(std::string_view tag);

// Seed-new quota for the dataset of iteration j: initial >> (j - 2). j >= 2.
std::size_t seed_schedule(int j, std::size_t initial_quota);

struct MergeQuotas {
    std::size_t es = 0;
    std::size_t ee = 0;
    std::size_t hppl = 0;
    std::size_t seed_new = 0;
    std::optional<std::size_t> total;
};

// Quotas for building dataset `next_j` (>= 2). Missing entries take the
// default bucket proportions of `config.total`.
MergeQuotas quotas_for(const QuotaConfig& config, int next_j);

// Ids of every sample ever drawn for training from the seed corpus.
class SeedLedger {
public:
    bool contains(const std::string& id) const { return ids_.count(id) != 0; }
    void add(const std::string& id) { ids_.insert(id); }
    std::size_t size() const noexcept { return ids_.size(); }
    const std::set<std::string>& ids() const noexcept { return ids_; }

    static SeedLedger load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::set<std::string> ids_;
};

inline constexpr std::string_view kBuckets[] = {"es", "ee", "hppl", "seed_new"};

struct BucketCount {
    std::size_t requested = 0;
    std::size_t available = 0;
    std::vector<std::string> ids;
};

struct IterationManifest {
    int iteration = 1;  // the iteration whose outputs were merged
    std::map<std::string, BucketCount> buckets;
    std::size_t total = 0;
    std::map<std::string, std::size_t> shortfall;  // requested but unavailable

    std::size_t count(std::string_view bucket) const;
    // total == sum of bucket counts and the id sets are pairwise disjoint,
    // else StructuralError.
    void check() const;
};

Json to_json(const IterationManifest& manifest);
IterationManifest iteration_manifest_from_json(const Json& doc);

struct MergeResult {
    std::vector<TrainSample> dataset;
    IterationManifest manifest;
};

// es and ee are cut to quota by recency (later provenance iteration first,
// input order otherwise); hppl arrives ranked and keeps its head; seed-new is
// drawn uniformly without replacement from `seed_pool` and recorded in
// `ledger`. Over a total cap, buckets shrink in the order seed-new, hppl, ee,
// es. Throws StructuralError on overlapping or duplicate input ids and
// PreconditionError when the pool holds an id the ledger has seen.
MergeResult merge_next_dataset(const std::vector<TrainSample>& es, const std::vector<TrainSample>& ee,
                               const std::vector<TrainSample>& hppl,
                               const std::vector<TrainSample>& seed_pool, const MergeQuotas& quotas,
                               SeedLedger& ledger, std::uint64_t rng_seed, int iteration);

// ---------------------------------------------------------------------------

struct LoopState {
    int iteration = 1;
    Stage stage = Stage::Training;
    Json policy_ref = Json::object();
};

Json to_json(const LoopState& state);
LoopState loop_state_from_json(const Json& doc);

enum class RunStatus { Done, Stopped, WaitingForTrainer };

std::string_view to_string(RunStatus status);

struct RunReport {
    RunStatus status = RunStatus::Done;
    LoopState state;
};

// Workdir layout:
//   state.json
//   iter_<j>/dataset.jsonl, seed_ledger.json
//   iter_<j>/trainer_bundle/{train.jsonl, job.json}, trainer_done.json (external mode)
//   iter_<j>/probe.jsonl, probe_summary.json
//   iter_<j>/judge_audit.jsonl, d_pw.jsonl, d_lr.jsonl, judge_routing.json
//   iter_<j>/ee.jsonl, expand_audit.jsonl
//   iter_<j>/manifest.json, stages/<stage>.json
// Each stage rewrites its outputs from its inputs before the state advances,
// so a run killed anywhere resumes from the last completed stage.
class LoopController {
public:
    LoopController(AppConfig config, BackendHandle gen, BackendHandle judge, BackendHandle policy);

    // Creates the workdir and D_1 on first use, otherwise loads state.json.
    LoopState state();

    // Runs exactly one stage and persists the new state.
    RunReport step();

    // Runs until Done, until `stop_after` has completed, or until an external
    // trainer has not yet written its completion marker.
    RunReport run(std::optional<Stage> stop_after = std::nullopt);

    std::filesystem::path iter_dir(int j) const;
    const AppConfig& config() const noexcept { return config_; }

private:
    void initialize();
    void save_state(const LoopState& s) const;
    void log_stage(int j, Stage stage, Json detail) const;

    bool stage_training(LoopState& s);
    void stage_probing(const LoopState& s);
    void stage_judging(const LoopState& s);
    void stage_expanding(const LoopState& s);
    void stage_merging(const LoopState& s);

    AppConfig config_;
    PromptSet prompts_;
    BackendHandle gen_;
    BackendHandle judge_;
    BackendHandle policy_;
    std::filesystem::path root_;
};

}  // namespace looptool
