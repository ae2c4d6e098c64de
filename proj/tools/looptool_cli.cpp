// looptool command-line front end.
#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "looptool/catalog.hpp"
#include "looptool/config.hpp"
#include "looptool/dialog.hpp"
#include "looptool/errors.hpp"
#include "looptool/expander.hpp"
#include "looptool/grpo.hpp"
#include "looptool/label_court.hpp"
#include "looptool/loop.hpp"
#include "looptool/probe.hpp"

namespace fs = std::filesystem;
using namespace looptool;

namespace {

constexpr int kExitError = 1;
constexpr int kExitWaiting = 3;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string mock;
    std::optional<std::size_t> max_inflight;
};

AppConfig resolve_config(const Globals& g) {
    AppConfig cfg = g.config.empty() ? config_from_json(Json::object(), fs::current_path())
                                     : load_config(g.config);
    if (g.seed) {
        cfg.seed = *g.seed;
        cfg.dialog.seed = *g.seed;
    }
    if (!g.mock.empty()) {
        // A command-line script replaces every per-role script from the config.
        cfg.mock_script = fs::absolute(g.mock);
        cfg.generator.mock.clear();
        cfg.judge.mock.clear();
        cfg.policy.mock.clear();
    }
    if (g.max_inflight) {
        if (*g.max_inflight < 1) throw ConfigError("--max-inflight must be at least 1");
        cfg.max_inflight = *g.max_inflight;
        cfg.dialog.workers = *g.max_inflight;
    }
    return cfg;
}

void print(const Json& doc) { std::cout << doc.dump(2) << "\n"; }

ToolSet read_tool_catalog(const fs::path& path) {
    std::vector<ToolSpec> tools;
    for (const auto& row : read_jsonl(path)) tools.push_back(tool_spec_from_json(row));
    ToolSet set(std::move(tools));
    const auto report = validate_tool_set(set);
    if (!report.ok()) throw ValidationError("tool catalog " + path.string() + ": " + report.summary());
    return set;
}

Json read_json(const fs::path& path) {
    try {
        return Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

template <typename T, typename Fn>
std::vector<T> read_rows(const std::string& path, Fn from_json) {
    std::vector<T> out;
    if (path.empty()) return out;
    for (const auto& row : read_jsonl(path)) out.push_back(from_json(row));
    return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(const AppConfig& cfg, const std::string& ctx_path, const std::string& cons_path,
              std::optional<std::size_t> count, const std::string& out, const std::string& failures) {
    const auto ctx = domain_tree_from_json(read_json(ctx_path));
    const auto cons = domain_tree_from_json(read_json(cons_path));
    const auto prompts = load_prompts(cfg);
    const auto gen = make_backend(BackendRole::Generator, cfg);
    const auto result = synthesize_catalog(ctx, cons, count.value_or(cfg.apis), gen, prompts.api, cfg.seed,
                                           cfg.max_inflight);
    std::vector<Json> rows;
    for (const auto& api : result.apis) rows.push_back(to_json(api));
    write_jsonl(out, rows);
    if (!failures.empty()) {
        std::vector<Json> frows;
        for (const auto& f : result.failures) {
            frows.push_back(Json{{"attempt", f.attempt},
                                 {"context_path", f.context_path},
                                 {"constraint_path", f.constraint_path},
                                 {"reason", f.reason},
                                 {"raw", f.raw}});
        }
        write_jsonl(failures, frows);
    }
    print(Json{{"apis", result.apis.size()}, {"failures", result.failures.size()}, {"out", out}});
    return 0;
}

int cmd_gen_dialogs(AppConfig cfg, const std::string& tools_path, std::optional<std::size_t> episodes,
                    const std::string& out, const std::string& samples_out, const std::string& discards,
                    bool fake_tools, bool no_judge) {
    if (episodes) cfg.dialog.episodes = *episodes;
    const auto catalog = read_tool_catalog(tools_path);
    const auto prompts = load_prompts(cfg);
    ForgeOptions opt{prompts, cfg.current_time, fake_tools ? ToolResultMode::Fake : cfg.tool_results, 8};
    const auto gen = make_backend(BackendRole::Generator, cfg);
    std::optional<BackendHandle> judge;
    if (!no_judge) judge = make_backend(BackendRole::Judge, cfg);

    const auto result = simulate_corpus(catalog, cfg.dialog, gen, judge ? &*judge : nullptr, opt);
    std::vector<Json> rows;
    std::vector<TrainSample> samples;
    for (const auto& ep : result.episodes) {
        rows.push_back(to_json(ep, prompts.instruction));
        for (auto& s : explode_to_samples(ep)) samples.push_back(std::move(s));
    }
    write_jsonl(out, rows);
    if (!samples_out.empty()) write_samples(samples_out, samples);
    if (!discards.empty()) {
        std::vector<Json> drows;
        for (const auto& d : result.discarded) {
            drows.push_back(Json{{"seed", d.seed}, {"episode_id", d.episode_id}, {"reason", d.reason}});
        }
        write_jsonl(discards, drows);
    }
    print(Json{{"episodes", result.episodes.size()},
               {"discarded", result.discarded.size()},
               {"samples", samples.size()}});
    return 0;
}

int cmd_probe(const AppConfig& cfg, const std::string& dataset, const std::string& out,
              const std::string& summary_path) {
    const auto samples = read_samples(dataset);
    const auto prompts = load_prompts(cfg);
    const auto policy = make_backend(BackendRole::Policy, cfg);
    const auto records =
        probe_dataset(samples, policy, ProbeOptions{prompts.instruction, cfg.current_time, cfg.max_inflight});
    write_probe_records(out, records);
    const auto summary = probe_summary(records);
    if (!summary_path.empty()) write_text_atomic(summary_path, summary.dump(2) + "\n");
    print(summary);
    return 0;
}

int cmd_judge(const AppConfig& cfg, const std::string& dataset, const std::string& probe,
              const std::string& out_dir) {
    const auto samples = read_samples(dataset);
    std::map<std::string, const TrainSample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    std::vector<JudgeCase> cases;
    for (const auto& r : read_probe_records(probe)) {
        if (r.failed() || r.mastered()) continue;
        const auto it = by_id.find(r.sample_id);
        if (it == by_id.end()) throw DataError("probe record for unknown sample " + r.sample_id);
        cases.push_back({*it->second, r.prediction ? r.prediction->calls : std::vector<ToolCall>{}, r.raw});
    }
    const auto prompts = load_prompts(cfg);
    const CourtOptions opt{prompts.judge, cfg.both_correct_to_hppl, cfg.max_inflight};
    const auto judge = make_backend(BackendRole::Judge, cfg);
    const auto routing = route_verdicts(judge_cases(cases, judge, opt), opt);

    fs::create_directories(out_dir);
    write_jsonl(fs::path(out_dir) / "judge_audit.jsonl", routing.audit);
    std::vector<Json> pw, lr, bc;
    for (const auto& c : routing.d_pw) pw.push_back(to_json(c));
    for (const auto& c : routing.d_lr) lr.push_back(to_json(c));
    for (const auto& s : routing.hppl_candidates) bc.push_back(to_json(s));
    write_jsonl(fs::path(out_dir) / "d_pw.jsonl", pw);
    write_jsonl(fs::path(out_dir) / "d_lr.jsonl", lr);
    write_jsonl(fs::path(out_dir) / "hppl_candidates.jsonl", bc);
    print(Json{{"judged", cases.size()},
               {"d_pw", routing.d_pw.size()},
               {"d_lr", routing.d_lr.size()},
               {"hppl_candidates", routing.hppl_candidates.size()},
               {"discarded", routing.discarded.size()}});
    return 0;
}

int cmd_expand(const AppConfig& cfg, const std::string& d_pw_path, const std::string& d_lr_path,
               int iteration, const std::string& out, const std::string& audit_path) {
    const auto d_pw = read_rows<PredWrongCase>(d_pw_path, pred_wrong_case_from_json);
    const auto d_lr = read_rows<RepairedCase>(d_lr_path, repaired_case_from_json);
    const auto seeds = seeds_from_verdicts(d_pw, d_lr);
    ExpandOptions opt;
    opt.prompts = load_prompts(cfg);
    opt.iteration = iteration;
    opt.k = cfg.k;
    opt.seed = cfg.seed + static_cast<std::uint64_t>(iteration);
    opt.workers = cfg.max_inflight;
    const auto gen = make_backend(BackendRole::Generator, cfg);
    const auto judge = make_backend(BackendRole::Judge, cfg);
    const auto expansion = expand_all(seeds, builtin_constraints(), gen, opt);
    const auto verified = verify_expanded(expansion.candidates, judge, opt);
    write_samples(out, verified.accepted);
    if (!audit_path.empty()) {
        std::vector<Json> rows;
        for (const auto& f : expansion.failures) {
            rows.push_back(Json{{"event", "generation_failed"}, {"seed_id", f.seed_id},
                                {"constraint_label", f.constraint_label}, {"reason", f.reason}});
        }
        for (const auto& r : verified.rejected) {
            rows.push_back(Json{{"event", "rejected"}, {"sample_id", r.sample_id}, {"tier", r.tier},
                                {"reason", r.reason}});
        }
        write_jsonl(audit_path, rows);
    }
    print(Json{{"seeds", seeds.size()},
               {"candidates", expansion.candidates.size()},
               {"accepted", verified.accepted.size()},
               {"rejected", verified.rejected.size()},
               {"generation_failures", expansion.failures.size()}});
    return 0;
}

struct MergeArgs {
    std::string es, ee, hppl, seed_pool, ledger, out, manifest;
    std::optional<std::size_t> q_es, q_ee, q_hppl, q_seed, total;
    int iteration = 1;
};

int cmd_merge(const AppConfig& cfg, const MergeArgs& a) {
    auto load = [](const std::string& p) { return p.empty() ? std::vector<TrainSample>{} : read_samples(p); };
    const auto es = load(a.es), ee = load(a.ee), hppl = load(a.hppl);
    auto pool = load(a.seed_pool);
    SeedLedger ledger;
    if (!a.ledger.empty() && fs::exists(a.ledger)) ledger = SeedLedger::load(a.ledger);
    std::vector<TrainSample> fresh;
    for (auto& s : pool) {
        if (!ledger.contains(s.id)) fresh.push_back(std::move(s));
    }

    auto quotas = quotas_for(cfg.quotas, a.iteration + 1);
    if (a.q_es) quotas.es = *a.q_es;
    if (a.q_ee) quotas.ee = *a.q_ee;
    if (a.q_hppl) quotas.hppl = *a.q_hppl;
    if (a.q_seed) quotas.seed_new = *a.q_seed;
    if (a.total) quotas.total = *a.total;

    const auto merged = merge_next_dataset(es, ee, hppl, fresh, quotas, ledger,
                                           cfg.seed * 1000003ULL + static_cast<std::uint64_t>(a.iteration),
                                           a.iteration);
    write_samples(a.out, merged.dataset);
    const auto manifest = to_json(merged.manifest);
    if (!a.manifest.empty()) write_text_atomic(a.manifest, manifest.dump(2) + "\n");
    if (!a.ledger.empty()) ledger.save(a.ledger);
    Json counts = Json::object();
    for (auto b : kBuckets) counts[std::string(b)] = merged.manifest.count(b);
    print(Json{{"counts", counts}, {"total", merged.manifest.total}, {"shortfall", manifest.at("shortfall")}});
    return 0;
}

int cmd_run_loop(AppConfig cfg, const std::string& workdir, std::optional<int> iterations,
                 const std::string& stop_after) {
    if (!workdir.empty()) cfg.workdir = fs::absolute(workdir);
    if (iterations) {
        if (*iterations < 1) throw ConfigError("--iterations must be at least 1");
        cfg.iterations = *iterations;
    }
    std::optional<Stage> stop;
    if (!stop_after.empty()) stop = stage_from_string(stop_after);
    auto gen = make_backend(BackendRole::Generator, cfg);
    auto judge = make_backend(BackendRole::Judge, cfg);
    auto policy = make_backend(BackendRole::Policy, cfg);
    LoopController loop(cfg, gen, judge, policy);
    const auto report = loop.run(stop);
    print(Json{{"status", to_string(report.status)},
               {"iteration", report.state.iteration},
               {"stage", to_string(report.state.stage)}});
    return report.status == RunStatus::WaitingForTrainer ? kExitWaiting : 0;
}

Json dataset_stats(const std::vector<TrainSample>& samples) {
    std::map<std::string, std::size_t> by_bucket, by_kind;
    std::set<std::string> tool_names;
    double tools = 0, turns = 0, calls = 0;
    std::size_t parallel = 0;
    for (const auto& s : samples) {
        ++by_bucket[s.provenance.bucket.empty() ? "(none)" : s.provenance.bucket];
        ++by_kind[s.provenance.kind];
        for (const auto& t : s.tools) tool_names.insert(t.name);
        tools += static_cast<double>(s.tools.size());
        turns += static_cast<double>(s.context.size());
        calls += static_cast<double>(s.label_calls.size());
        if (s.label_calls.size() > 1) ++parallel;
    }
    const double n = samples.empty() ? 1.0 : static_cast<double>(samples.size());
    Json buckets = Json::object(), kinds = Json::object();
    for (const auto& [k, v] : by_bucket) buckets[k] = v;
    for (const auto& [k, v] : by_kind) kinds[k] = v;
    return Json{{"samples", samples.size()},
                {"buckets", buckets},
                {"kinds", kinds},
                {"distinct_tools", tool_names.size()},
                {"mean_tools_per_sample", tools / n},
                {"mean_context_turns", turns / n},
                {"mean_calls_per_label", calls / n},
                {"multi_call_samples", parallel}};
}

int cmd_stats(const AppConfig& cfg, const std::string& dataset, const std::string& workdir) {
    if (!dataset.empty()) {
        print(dataset_stats(read_samples(dataset)));
        return 0;
    }
    const fs::path root = workdir.empty() ? cfg.resolve(cfg.workdir) : fs::path(workdir);
    if (!fs::exists(root / "state.json")) throw PreconditionError("no loop state under " + root.string());
    Json doc{{"state", read_json(root / "state.json")}};
    Json iterations = Json::array();
    for (int j = 1; fs::exists(root / ("iter_" + std::to_string(j))); ++j) {
        const auto dir = root / ("iter_" + std::to_string(j));
        Json row{{"iteration", j}};
        if (fs::exists(dir / "dataset.jsonl")) row["dataset"] = dataset_stats(read_samples(dir / "dataset.jsonl"));
        if (fs::exists(dir / "probe_summary.json")) row["probe"] = read_json(dir / "probe_summary.json");
        if (fs::exists(dir / "manifest.json")) {
            const auto m = read_json(dir / "manifest.json");
            Json counts = Json::object();
            for (const auto& [k, v] : m.at("buckets").items()) counts[k] = v.at("count");
            row["manifest"] = Json{{"counts", counts}, {"total", m.at("total")}};
        }
        iterations.push_back(std::move(row));
    }
    doc["iterations"] = std::move(iterations);
    print(doc);
    return 0;
}

// Rows {"sample_id", "outputs": [text, ...]} -> rewards and group advantages.
int cmd_score(const std::string& dataset, const std::string& rollouts, const std::string& out) {
    const auto samples = read_samples(dataset);
    std::map<std::string, const TrainSample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    std::vector<Json> rows;
    double total = 0, n = 0;
    for (const auto& row : read_jsonl(rollouts)) {
        const auto id = row.at("sample_id").get<std::string>();
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("rollout for unknown sample " + id);
        std::vector<double> rewards;
        for (const auto& o : row.at("outputs")) {
            rewards.push_back(binary_reward(*it->second, o.get<std::string>()));
        }
        for (double r : rewards) total += r;
        n += static_cast<double>(rewards.size());
        Json result{{"sample_id", id}, {"rewards", rewards}};
        result["advantages"] = rewards.size() >= 2 ? Json(group_advantage(rewards)) : Json();
        rows.push_back(std::move(result));
    }
    if (!out.empty()) write_jsonl(out, rows);
    print(Json{{"groups", rows.size()}, {"mean_reward", n == 0 ? 0.0 : total / n}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Closed-loop data pipeline for tool-calling model training"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed for every random draw");
    app.add_option("--mock", g.mock, "Mock script (JSONL) serving every backend role")->check(CLI::ExistingFile);
    app.add_option("--max-inflight", g.max_inflight, "Concurrent backend requests per role");

    std::string ctx_tree, cons_tree, out, failures;
    std::optional<std::size_t> count;
    auto* synth = app.add_subcommand("synth-apis", "Synthesize API specs from a context and a constraint tree");
    synth->add_option("--context-tree", ctx_tree)->required()->check(CLI::ExistingFile);
    synth->add_option("--constraint-tree", cons_tree)->required()->check(CLI::ExistingFile);
    synth->add_option("--count", count, "Synthesis attempts");
    synth->add_option("--out", out, "Output JSONL of tool specs")->required();
    synth->add_option("--failures", failures, "JSONL log of rejected attempts");

    std::string tools_path, samples_out, discards;
    std::optional<std::size_t> episodes;
    bool fake_tools = false, no_judge = false;
    auto* dialogs = app.add_subcommand("gen-dialogs", "Simulate dialogue episodes over a tool catalog");
    dialogs->add_option("--tools", tools_path, "JSONL tool catalog")->required()->check(CLI::ExistingFile);
    dialogs->add_option("--episodes", episodes);
    dialogs->add_option("--out", out, "Episode JSONL")->required();
    dialogs->add_option("--samples", samples_out, "Training-sample JSONL, one per tool-call step");
    dialogs->add_option("--discards", discards, "JSONL log of discarded episodes");
    dialogs->add_flag("--fake-tools", fake_tools, "Deterministic tool results instead of the generator");
    dialogs->add_flag("--no-judge", no_judge, "Skip the holistic judge tier");

    std::string dataset, probe_path, summary;
    auto* probe = app.add_subcommand("probe", "Greedy-probe a dataset with the policy");
    probe->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
    probe->add_option("--out", out, "Probe record JSONL")->required();
    probe->add_option("--summary", summary, "Summary JSON");

    std::string out_dir;
    auto* judge = app.add_subcommand("judge", "Judge probe mismatches and route them");
    judge->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
    judge->add_option("--probe", probe_path)->required()->check(CLI::ExistingFile);
    judge->add_option("--out-dir", out_dir)->required();

    std::string d_pw, d_lr, audit;
    int iteration = 1;
    auto* expand = app.add_subcommand("expand", "Expand verified error seeds");
    expand->add_option("--d-pw", d_pw)->check(CLI::ExistingFile);
    expand->add_option("--d-lr", d_lr)->check(CLI::ExistingFile);
    expand->add_option("--iteration", iteration);
    expand->add_option("--out", out)->required();
    expand->add_option("--audit", audit);

    MergeArgs merge_args;
    auto* merge = app.add_subcommand("merge", "Assemble the next dataset from its buckets");
    merge->add_option("--es", merge_args.es)->check(CLI::ExistingFile);
    merge->add_option("--ee", merge_args.ee)->check(CLI::ExistingFile);
    merge->add_option("--hppl", merge_args.hppl, "High-PPL samples, highest first")->check(CLI::ExistingFile);
    merge->add_option("--seed-pool", merge_args.seed_pool)->check(CLI::ExistingFile);
    merge->add_option("--ledger", merge_args.ledger, "Seed ledger JSON, read and updated");
    merge->add_option("--quota-es", merge_args.q_es);
    merge->add_option("--quota-ee", merge_args.q_ee);
    merge->add_option("--quota-hppl", merge_args.q_hppl);
    merge->add_option("--quota-seed-new", merge_args.q_seed);
    merge->add_option("--total", merge_args.total);
    merge->add_option("--iteration", merge_args.iteration);
    merge->add_option("--out", merge_args.out)->required();
    merge->add_option("--manifest", merge_args.manifest);

    std::string workdir, stop_after;
    std::optional<int> iterations;
    auto* run = app.add_subcommand("run-loop", "Run or resume the iterative loop");
    run->add_option("--workdir", workdir);
    run->add_option("--iterations", iterations);
    run->add_option("--stop-after", stop_after, "Return after this stage completes")
        ->check(CLI::IsMember({"training", "probing", "judging", "expanding", "merging"}));

    auto* stats = app.add_subcommand("stats", "Summarize a dataset or a loop workdir");
    stats->add_option("--dataset", dataset)->check(CLI::ExistingFile);
    stats->add_option("--workdir", workdir);

    std::string rollouts;
    auto* score = app.add_subcommand("score", "Binary rewards and group advantages for rollouts");
    score->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
    score->add_option("--rollouts", rollouts)->required()->check(CLI::ExistingFile);
    score->add_option("--out", out);

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = resolve_config(g);
        if (synth->parsed()) return cmd_synth(cfg, ctx_tree, cons_tree, count, out, failures);
        if (dialogs->parsed()) {
            return cmd_gen_dialogs(cfg, tools_path, episodes, out, samples_out, discards, fake_tools, no_judge);
        }
        if (probe->parsed()) return cmd_probe(cfg, dataset, out, summary);
        if (judge->parsed()) return cmd_judge(cfg, dataset, probe_path, out_dir);
        if (expand->parsed()) return cmd_expand(cfg, d_pw, d_lr, iteration, out, audit);
        if (merge->parsed()) return cmd_merge(cfg, merge_args);
        if (run->parsed()) return cmd_run_loop(cfg, workdir, iterations, stop_after);
        if (stats->parsed()) return cmd_stats(cfg, dataset, workdir);
        if (score->parsed()) return cmd_score(dataset, rollouts, out);
    } catch (const Error& e) {
        std::cerr << "looptool: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "looptool: unexpected failure: " << e.what() << "\n";
        return kExitError;
    }
    return 0;
}
