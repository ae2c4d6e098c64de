#include "looptool/loop.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "looptool/errors.hpp"
#include "looptool/expander.hpp"
#include "looptool/label_court.hpp"
#include "looptool/probe.hpp"
#include "looptool/rng.hpp"

namespace looptool {

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::Training: return "training";
        case Stage::Probing: return "probing";
        case Stage::Judging: return "judging";
        case Stage::Expanding: return "expanding";
        case Stage::Merging: return "merging";
        case Stage::Done: return "done";
    }
    return "done";
}

Stage stage_from_string(std::string_view tag) {
    for (auto s : {Stage::Training, Stage::Probing, Stage::Judging, Stage::Expanding, Stage::Merging,
                   Stage::Done}) {
        if (to_string(s) == tag) return s;
    }
    throw DataError("unknown stage \"" + std::string(tag) + "\"");
}

std::string_view to_string(RunStatus status) {
    switch (status) {
        case RunStatus::Done: return "done";
        case RunStatus::Stopped: return "stopped";
        case RunStatus::WaitingForTrainer: return "waiting_for_trainer";
    }
    return "done";
}

std::size_t seed_schedule(int j, std::size_t initial_quota) {
    if (j < 2) throw PreconditionError("seed schedule starts at iteration 2");
    const int shift = j - 2;
    if (shift >= 64) return 0;
    return initial_quota >> shift;
}

namespace {

// Bucket sizes of the reference second-iteration dataset; only their ratios matter.
constexpr double kRefEs = 1919, kRefEe = 6566, kRefHppl = 4187, kRefSeed = 5632, kRefTotal = 18304;

std::size_t scaled(std::size_t total, double part) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(total) * part / kRefTotal));
}

}  // namespace

MergeQuotas quotas_for(const QuotaConfig& config, int next_j) {
    MergeQuotas q;
    q.total = config.total;
    q.es = config.es.value_or(scaled(config.total, kRefEs));
    q.hppl = config.hppl.value_or(scaled(config.total, kRefHppl));
    q.seed_new = seed_schedule(next_j, config.seed_new_initial.value_or(scaled(config.total, kRefSeed)));
    if (config.ee) {
        q.ee = *config.ee;
    } else {
        // EE absorbs what the other buckets leave of the total.
        const auto fixed = q.es + q.hppl + q.seed_new;
        q.ee = fixed >= config.total ? 0 : config.total - fixed;
    }
    return q;
}

// ---------------------------------------------------------------------------

SeedLedger SeedLedger::load(const std::filesystem::path& path) {
    SeedLedger ledger;
    Json doc;
    try {
        doc = Json::parse(read_text_file(path));
        for (const auto& id : doc.at("seed_ids")) ledger.add(id.get<std::string>());
    } catch (const Json::exception& e) {
        throw DataError("malformed seed ledger " + path.string() + ": " + e.what());
    }
    return ledger;
}

void SeedLedger::save(const std::filesystem::path& path) const {
    const Json doc{{"seed_ids", ids_}};
    write_text_atomic(path, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

std::size_t IterationManifest::count(std::string_view bucket) const {
    const auto it = buckets.find(std::string(bucket));
    return it == buckets.end() ? 0 : it->second.ids.size();
}

void IterationManifest::check() const {
    std::size_t sum = 0;
    std::set<std::string> seen;
    for (const auto& [name, b] : buckets) {
        sum += b.ids.size();
        for (const auto& id : b.ids) {
            if (!seen.insert(id).second) {
                throw StructuralError("manifest id " + id + " appears twice (bucket " + name + ")");
            }
        }
    }
    if (sum != total) {
        throw StructuralError("manifest total " + std::to_string(total) + " differs from bucket sum " +
                              std::to_string(sum));
    }
}

Json to_json(const IterationManifest& m) {
    Json buckets = Json::object();
    for (auto name : kBuckets) {
        const auto it = m.buckets.find(std::string(name));
        const BucketCount b = it == m.buckets.end() ? BucketCount{} : it->second;
        buckets[std::string(name)] = Json{{"count", b.ids.size()},
                                          {"requested", b.requested},
                                          {"available", b.available},
                                          {"ids", b.ids}};
    }
    Json shortfall = Json::object();
    for (const auto& [k, v] : m.shortfall) shortfall[k] = v;
    return Json{{"iteration", m.iteration},
                {"next_dataset", m.iteration + 1},
                {"buckets", std::move(buckets)},
                {"total", m.total},
                {"shortfall", std::move(shortfall)}};
}

IterationManifest iteration_manifest_from_json(const Json& doc) {
    try {
        IterationManifest m;
        m.iteration = doc.at("iteration").get<int>();
        for (const auto& [name, b] : doc.at("buckets").items()) {
            m.buckets[name] = {b.value("requested", std::size_t{0}), b.value("available", std::size_t{0}),
                               b.at("ids").get<std::vector<std::string>>()};
        }
        m.total = doc.at("total").get<std::size_t>();
        if (doc.contains("shortfall")) {
            for (const auto& [k, v] : doc.at("shortfall").items()) m.shortfall[k] = v.get<std::size_t>();
        }
        return m;
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
}

MergeResult merge_next_dataset(const std::vector<TrainSample>& es, const std::vector<TrainSample>& ee,
                               const std::vector<TrainSample>& hppl,
                               const std::vector<TrainSample>& seed_pool, const MergeQuotas& quotas,
                               SeedLedger& ledger, std::uint64_t rng_seed, int iteration) {
    const std::vector<TrainSample>* inputs[] = {&es, &ee, &hppl, &seed_pool};
    std::unordered_map<std::string, std::string> owner;
    for (std::size_t b = 0; b < 4; ++b) {
        for (const auto& s : *inputs[b]) {
            const auto [it, fresh] = owner.emplace(s.id, std::string(kBuckets[b]));
            if (!fresh) {
                throw StructuralError("sample " + s.id + " is in bucket " + it->second + " and bucket " +
                                      std::string(kBuckets[b]));
            }
        }
    }
    for (const auto& s : seed_pool) {
        if (ledger.contains(s.id)) throw PreconditionError("seed pool holds already-trained sample " + s.id);
    }

    auto by_recency = [](const std::vector<TrainSample>& v) {
        std::vector<const TrainSample*> out;
        for (const auto& s : v) out.push_back(&s);
        std::stable_sort(out.begin(), out.end(), [](const TrainSample* a, const TrainSample* b) {
            return a->provenance.iteration > b->provenance.iteration;
        });
        return out;
    };
    auto in_order = [](const std::vector<TrainSample>& v) {
        std::vector<const TrainSample*> out;
        for (const auto& s : v) out.push_back(&s);
        return out;
    };

    std::vector<const TrainSample*> picked[4] = {by_recency(es), by_recency(ee), in_order(hppl), {}};
    const std::size_t want[4] = {quotas.es, quotas.ee, quotas.hppl, quotas.seed_new};
    for (std::size_t b = 0; b < 3; ++b) {
        if (picked[b].size() > want[b]) picked[b].resize(want[b]);
    }
    Rng rng(rng_seed);
    for (auto i : sample_without_replacement(rng, seed_pool.size(), quotas.seed_new)) {
        picked[3].push_back(&seed_pool[i]);
    }

    if (quotas.total) {
        std::size_t sum = 0;
        for (const auto& p : picked) sum += p.size();
        for (std::size_t b : {3u, 2u, 1u, 0u}) {
            if (sum <= *quotas.total) break;
            const auto cut = std::min(picked[b].size(), sum - *quotas.total);
            picked[b].resize(picked[b].size() - cut);
            sum -= cut;
        }
    }

    MergeResult result;
    result.manifest.iteration = iteration;
    for (std::size_t b = 0; b < 4; ++b) {
        const std::string name(kBuckets[b]);
        auto& count = result.manifest.buckets[name];
        count.requested = want[b];
        count.available = inputs[b]->size();
        if (count.available < want[b]) result.manifest.shortfall[name] = want[b] - count.available;
        for (const auto* s : picked[b]) {
            TrainSample out = *s;
            out.provenance.bucket = name;
            out.provenance.state = SampleState::Active;
            out.iteration = iteration + 1;
            count.ids.push_back(out.id);
            result.dataset.push_back(std::move(out));
        }
    }
    result.manifest.total = result.dataset.size();
    result.manifest.check();
    for (const auto* s : picked[3]) ledger.add(s->id);
    return result;
}

// ---------------------------------------------------------------------------

Json to_json(const LoopState& s) {
    return Json{{"iteration", s.iteration}, {"stage", to_string(s.stage)}, {"policy", s.policy_ref}};
}

LoopState loop_state_from_json(const Json& doc) {
    try {
        LoopState s;
        s.iteration = doc.at("iteration").get<int>();
        s.stage = stage_from_string(doc.at("stage").get<std::string>());
        s.policy_ref = doc.value("policy", Json::object());
        if (s.iteration < 1) throw DataError("loop state iteration must be >= 1");
        return s;
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed loop state: ") + e.what());
    }
}

namespace {

Stage next_stage(Stage s) {
    switch (s) {
        case Stage::Training: return Stage::Probing;
        case Stage::Probing: return Stage::Judging;
        case Stage::Judging: return Stage::Expanding;
        case Stage::Expanding: return Stage::Merging;
        case Stage::Merging: return Stage::Done;
        case Stage::Done: return Stage::Done;
    }
    return Stage::Done;
}

template <typename T, typename Fn>
std::vector<T> read_rows(const std::filesystem::path& path, Fn from_json) {
    std::vector<T> out;
    if (!std::filesystem::exists(path)) return out;
    for (const auto& row : read_jsonl(path)) out.push_back(from_json(row));
    return out;
}

Json read_json_file(const std::filesystem::path& path) {
    try {
        return Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const Json& doc) {
    write_text_atomic(path, doc.dump(2) + "\n");
}

}  // namespace

LoopController::LoopController(AppConfig config, BackendHandle gen, BackendHandle judge,
                               BackendHandle policy)
    : config_(std::move(config)),
      prompts_(load_prompts(config_)),
      gen_(std::move(gen)),
      judge_(std::move(judge)),
      policy_(std::move(policy)),
      root_(config_.resolve(config_.workdir)) {
    if (policy_.role() != BackendRole::Policy) throw PreconditionError("loop needs a policy backend");
}

std::filesystem::path LoopController::iter_dir(int j) const {
    return root_ / ("iter_" + std::to_string(j));
}

void LoopController::save_state(const LoopState& s) const {
    write_json_file(root_ / "state.json", to_json(s));
}

void LoopController::log_stage(int j, Stage stage, Json detail) const {
    detail["iteration"] = j;
    detail["stage"] = to_string(stage);
    write_json_file(iter_dir(j) / "stages" / (std::string(to_string(stage)) + ".json"), detail);
}

void LoopController::initialize() {
    if (config_.seed_corpus.empty()) throw ConfigError("seed_corpus is not configured");
    const auto corpus = read_samples(config_.resolve(config_.seed_corpus));
    std::set<std::string> ids;
    for (const auto& s : corpus) {
        if (!ids.insert(s.id).second) throw DataError("seed corpus repeats sample id " + s.id);
    }
    const auto n = config_.initial_size == 0 ? corpus.size() : std::min(config_.initial_size, corpus.size());
    Rng rng(config_.seed);
    std::vector<TrainSample> d1;
    SeedLedger ledger;
    for (auto i : sample_without_replacement(rng, corpus.size(), n)) {
        auto s = corpus[i];
        s.provenance.bucket = "seed_new";
        s.provenance.state = SampleState::Active;
        s.iteration = 1;
        ledger.add(s.id);
        d1.push_back(std::move(s));
    }
    std::filesystem::create_directories(iter_dir(1));
    write_samples(iter_dir(1) / "dataset.jsonl", d1);
    ledger.save(iter_dir(1) / "seed_ledger.json");
    LoopState s;
    s.policy_ref = to_json(config_.policy);
    save_state(s);
}

LoopState LoopController::state() {
    const auto path = root_ / "state.json";
    if (!std::filesystem::exists(path)) initialize();
    return loop_state_from_json(read_json_file(path));
}

RunReport LoopController::step() {
    auto s = state();
    const auto j = s.iteration;
    std::filesystem::create_directories(iter_dir(j) / "stages");
    switch (s.stage) {
        case Stage::Done: return {RunStatus::Done, s};
        case Stage::Training:
            if (!stage_training(s)) return {RunStatus::WaitingForTrainer, s};
            break;
        case Stage::Probing: stage_probing(s); break;
        case Stage::Judging: stage_judging(s); break;
        case Stage::Expanding: stage_expanding(s); break;
        case Stage::Merging: stage_merging(s); break;
    }
    if (s.stage == Stage::Merging && j < config_.iterations) {
        s.iteration = j + 1;
        s.stage = Stage::Training;
    } else {
        s.stage = next_stage(s.stage);
    }
    save_state(s);
    return {s.stage == Stage::Done ? RunStatus::Done : RunStatus::Stopped, s};
}

RunReport LoopController::run(std::optional<Stage> stop_after) {
    for (;;) {
        const auto before = state().stage;
        auto report = step();
        if (report.status != RunStatus::Stopped) return report;
        if (stop_after && *stop_after == before) return report;
    }
}

bool LoopController::stage_training(LoopState& s) {
    const auto j = s.iteration;
    const auto dir = iter_dir(j);
    const auto dataset = read_samples(dir / "dataset.jsonl");

    std::vector<Json> rows;
    for (const auto& sample : dataset) {
        Json prompt = Json::array();
        prompt.push_back(Json{{"role", "system"},
                              {"content", render_instruction(prompts_.instruction, sample.tools,
                                                             config_.current_time)}});
        for (const auto& m : sample.context) prompt.push_back(to_json(m));
        rows.push_back(Json{{"id", sample.id},
                            {"prompt", std::move(prompt)},
                            {"reference", serialize_calls(sample.label_calls)},
                            {"label_calls", to_json(sample.label_calls)},
                            {"tools", to_json(sample.tools)}});
    }
    const auto bundle = dir / "trainer_bundle";
    std::filesystem::create_directories(bundle);
    write_jsonl(bundle / "train.jsonl", rows);

    const auto& t = config_.trainer;
    const auto& o = config_.objective;
    const Json job{
        {"iteration", j},
        {"train_file", "train.jsonl"},
        {"samples", dataset.size()},
        {"algorithm", "grpo"},
        {"reward", "binary_tool_match"},
        {"objective",
         {{"eps_low", o.eps_low},
          {"eps_high", o.eps_high},
          {"beta", o.beta},
          {"ratio_mode", o.ratio_mode == RatioMode::Sequence ? "sequence" : "token"}}},
        {"hyperparameters",
         {{"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"rollouts_per_prompt", t.rollouts},
          {"max_prompt_length", t.max_prompt_length},
          {"max_response_length", t.max_response_length},
          {"temperature", t.temperature},
          {"epochs", t.epochs}}},
        {"policy_in", s.policy_ref},
        {"completion_marker", "../trainer_done.json"},
    };
    write_json_file(bundle / "job.json", job);

    if (t.mode == "external") {
        const auto marker = dir / "trainer_done.json";
        if (!std::filesystem::exists(marker)) return false;
        const auto doc = read_json_file(marker);
        if (!doc.contains("policy")) throw DataError("trainer marker lacks a policy descriptor");
        const auto backend = backend_config_from_json(doc.at("policy"), "trainer_done.policy");
        policy_ = make_backend(BackendRole::Policy, backend, config_);
        s.policy_ref = doc.at("policy");
    }
    log_stage(j, Stage::Training, Json{{"samples", dataset.size()}, {"mode", t.mode}});
    return true;
}

void LoopController::stage_probing(const LoopState& s) {
    const auto dir = iter_dir(s.iteration);
    if (config_.trainer.mode == "external") {
        policy_ = make_backend(BackendRole::Policy, backend_config_from_json(s.policy_ref), config_);
    }
    const auto dataset = read_samples(dir / "dataset.jsonl");
    ProbeOptions opt{prompts_.instruction, config_.current_time, config_.max_inflight};
    const auto records = probe_dataset(dataset, policy_, opt);
    write_probe_records(dir / "probe.jsonl", records);
    const auto summary = probe_summary(records);
    write_json_file(dir / "probe_summary.json", summary);
    log_stage(s.iteration, Stage::Probing, summary);
}

void LoopController::stage_judging(const LoopState& s) {
    const auto dir = iter_dir(s.iteration);
    const auto dataset = read_samples(dir / "dataset.jsonl");
    const auto records = read_probe_records(dir / "probe.jsonl");
    std::unordered_map<std::string, const TrainSample*> by_id;
    for (const auto& d : dataset) by_id[d.id] = &d;

    std::vector<JudgeCase> cases;
    std::vector<std::string> failed;
    for (const auto& r : records) {
        if (r.failed()) {
            failed.push_back(r.sample_id);
            continue;
        }
        if (r.mastered()) continue;
        const auto it = by_id.find(r.sample_id);
        if (it == by_id.end()) throw DataError("probe record for unknown sample " + r.sample_id);
        cases.push_back({*it->second, r.prediction ? r.prediction->calls : std::vector<ToolCall>{}, r.raw});
    }

    CourtOptions opt{prompts_.judge, config_.both_correct_to_hppl, config_.max_inflight};
    const auto routing = route_verdicts(judge_cases(cases, judge_, opt), opt);

    write_jsonl(dir / "judge_audit.jsonl", routing.audit);
    std::vector<Json> pw, lr;
    for (const auto& c : routing.d_pw) pw.push_back(to_json(c));
    for (const auto& c : routing.d_lr) lr.push_back(to_json(c));
    write_jsonl(dir / "d_pw.jsonl", pw);
    write_jsonl(dir / "d_lr.jsonl", lr);

    Json ids_pw = Json::array(), ids_lr = Json::array(), ids_bc = Json::array(), discarded = Json::array();
    for (const auto& c : routing.d_pw) ids_pw.push_back(c.sample.id);
    for (const auto& c : routing.d_lr) ids_lr.push_back(c.sample.id);
    for (const auto& c : routing.hppl_candidates) ids_bc.push_back(c.id);
    for (const auto& d : routing.discarded) discarded.push_back(Json{{"sample_id", d.sample_id}, {"reason", d.reason}});
    const Json summary{{"judged", cases.size()},
                       {"d_pw", ids_pw},
                       {"d_lr", ids_lr},
                       {"hppl_candidates", ids_bc},
                       {"discarded", discarded},
                       {"probe_failed", failed}};
    write_json_file(dir / "judge_routing.json", summary);
    log_stage(s.iteration, Stage::Judging,
              Json{{"judged", cases.size()},
                   {"d_pw", routing.d_pw.size()},
                   {"d_lr", routing.d_lr.size()},
                   {"hppl_candidates", routing.hppl_candidates.size()},
                   {"discarded", routing.discarded.size()}});
}

void LoopController::stage_expanding(const LoopState& s) {
    const auto dir = iter_dir(s.iteration);
    const auto d_pw = read_rows<PredWrongCase>(dir / "d_pw.jsonl", pred_wrong_case_from_json);
    const auto d_lr = read_rows<RepairedCase>(dir / "d_lr.jsonl", repaired_case_from_json);
    const auto seeds = seeds_from_verdicts(d_pw, d_lr);

    ExpandOptions opt;
    opt.prompts = prompts_;
    opt.iteration = s.iteration;
    opt.k = config_.k;
    opt.seed = config_.seed + static_cast<std::uint64_t>(s.iteration);
    opt.workers = config_.max_inflight;
    const auto expansion = expand_all(seeds, builtin_constraints(), gen_, opt);
    const auto verified = verify_expanded(expansion.candidates, judge_, opt);

    write_samples(dir / "ee.jsonl", verified.accepted);
    std::vector<Json> audit;
    for (const auto& f : expansion.failures) {
        audit.push_back(Json{{"event", "generation_failed"},
                             {"seed_id", f.seed_id},
                             {"constraint_label", f.constraint_label},
                             {"reason", f.reason}});
    }
    for (const auto& r : verified.rejected) {
        audit.push_back(Json{{"event", "rejected"}, {"sample_id", r.sample_id}, {"tier", r.tier}, {"reason", r.reason}});
    }
    for (const auto& a : verified.accepted) {
        audit.push_back(Json{{"event", "accepted"},
                             {"sample_id", a.id},
                             {"origin_seed_id", a.provenance.origin_seed_id},
                             {"constraint_label", a.provenance.constraint_label},
                             {"context_turns", a.context.size()}});
    }
    write_jsonl(dir / "expand_audit.jsonl", audit);
    log_stage(s.iteration, Stage::Expanding,
              Json{{"seeds", seeds.size()},
                   {"candidates", expansion.candidates.size()},
                   {"generation_failures", expansion.failures.size()},
                   {"accepted", verified.accepted.size()},
                   {"rejected", verified.rejected.size()}});
}

void LoopController::stage_merging(const LoopState& s) {
    const auto j = s.iteration;
    const auto dir = iter_dir(j);
    const auto dataset = read_samples(dir / "dataset.jsonl");
    const auto records = read_probe_records(dir / "probe.jsonl");
    const auto routing = read_json_file(dir / "judge_routing.json");
    const auto d_pw = read_rows<PredWrongCase>(dir / "d_pw.jsonl", pred_wrong_case_from_json);
    const auto d_lr = read_rows<RepairedCase>(dir / "d_lr.jsonl", repaired_case_from_json);
    const auto ee = read_samples(dir / "ee.jsonl");
    auto ledger = SeedLedger::load(dir / "seed_ledger.json");

    std::vector<TrainSample> es;
    for (const auto& c : d_pw) es.push_back(c.sample);
    for (const auto& c : d_lr) es.push_back(c.sample);

    const auto quotas = quotas_for(config_.quotas, j + 1);
    std::set<std::string> both_correct;
    for (const auto& id : routing.at("hppl_candidates")) both_correct.insert(id.get<std::string>());
    std::unordered_map<std::string, const TrainSample*> by_id;
    for (const auto& d : dataset) by_id[d.id] = &d;
    std::vector<TrainSample> hppl;
    for (const auto& id : select_high_ppl(records, quotas.hppl, both_correct)) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("high-PPL pick " + id + " is not in the dataset");
        hppl.push_back(*it->second);
    }

    std::vector<TrainSample> pool;
    for (auto& c : read_samples(config_.resolve(config_.seed_corpus))) {
        if (!ledger.contains(c.id)) pool.push_back(std::move(c));
    }

    auto merged = merge_next_dataset(es, ee, hppl, pool, quotas, ledger,
                                     config_.seed * 1000003ULL + static_cast<std::uint64_t>(j), j);

    const auto next = iter_dir(j + 1);
    std::filesystem::create_directories(next);
    write_samples(next / "dataset.jsonl", merged.dataset);
    ledger.save(next / "seed_ledger.json");
    write_json_file(dir / "manifest.json", to_json(merged.manifest));

    Json counts = Json::object();
    for (auto b : kBuckets) counts[std::string(b)] = merged.manifest.count(b);
    log_stage(j, Stage::Merging, Json{{"counts", counts}, {"total", merged.manifest.total}});
}

}  // namespace looptool
