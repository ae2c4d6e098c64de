#include "looptool/config.hpp"

#include <set>

#include "looptool/errors.hpp"
#include "looptool/http_transport.hpp"

namespace looptool {

std::filesystem::path AppConfig::resolve(const std::filesystem::path& p) const {
    if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
}

namespace {

template <typename T>
void read(const Json& obj, const char* key, T& out) {
    if (!obj.contains(key) || obj.at(key).is_null()) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config key \"") + key + "\": " + e.what());
    }
}

void read_path(const Json& obj, const char* key, std::filesystem::path& out) {
    std::string s;
    read(obj, key, s);
    if (!s.empty()) out = s;
}

void check_keys(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (allowed.count(key) == 0) throw ConfigError("unknown config key " + where + "." + key);
    }
}

}  // namespace

BackendConfig backend_config_from_json(const Json& obj, const std::string& where) {
    check_keys(obj, {"url", "model", "api_key_env", "timeout_s", "logprobs", "mock", "temperature", "max_tokens"},
               where);
    BackendConfig b;
    read(obj, "url", b.url);
    read(obj, "model", b.model);
    read(obj, "api_key_env", b.api_key_env);
    read(obj, "timeout_s", b.timeout_s);
    read(obj, "logprobs", b.logprobs);
    read_path(obj, "mock", b.mock);
    read(obj, "temperature", b.temperature);
    read(obj, "max_tokens", b.max_tokens);
    return b;
}

namespace {

std::optional<std::size_t> read_opt(const Json& obj, const char* key) {
    if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
    std::size_t v = 0;
    read(obj, key, v);
    return v;
}

}  // namespace

AppConfig config_from_json(const Json& doc, const std::filesystem::path& base_dir) {
    check_keys(doc,
               {"seed", "max_inflight", "current_time", "mock", "backends", "prompts", "workdir",
                "seed_corpus", "iterations", "initial_size", "k", "both_correct", "quotas", "trainer",
                "objective", "dialog", "apis"},
               "config");
    AppConfig c;
    c.base_dir = base_dir;
    read(doc, "seed", c.seed);
    read(doc, "max_inflight", c.max_inflight);
    read(doc, "current_time", c.current_time);
    read_path(doc, "mock", c.mock_script);
    read_path(doc, "workdir", c.workdir);
    read_path(doc, "seed_corpus", c.seed_corpus);
    read(doc, "iterations", c.iterations);
    read(doc, "initial_size", c.initial_size);
    read(doc, "k", c.k);
    read(doc, "apis", c.apis);

    if (doc.contains("both_correct")) {
        std::string v;
        read(doc, "both_correct", v);
        if (v == "hppl") {
            c.both_correct_to_hppl = true;
        } else if (v == "discard") {
            c.both_correct_to_hppl = false;
        } else {
            throw ConfigError("both_correct must be \"hppl\" or \"discard\"");
        }
    }

    if (doc.contains("backends")) {
        const auto& b = doc.at("backends");
        check_keys(b, {"generator", "judge", "policy"}, "backends");
        if (b.contains("generator")) c.generator = backend_config_from_json(b.at("generator"), "backends.generator");
        if (b.contains("judge")) c.judge = backend_config_from_json(b.at("judge"), "backends.judge");
        if (b.contains("policy")) c.policy = backend_config_from_json(b.at("policy"), "backends.policy");
    }

    if (doc.contains("prompts")) {
        const auto& p = doc.at("prompts");
        check_keys(p, {"instruction", "judge", "expand_system", "expand_user", "holistic", "planner",
                       "user_agent", "tool_agent", "api"},
                   "prompts");
        for (const auto& [name, path] : p.items()) {
            if (!path.is_string()) throw ConfigError("prompts." + name + " must be a path");
            c.prompts[name] = path.get<std::string>();
        }
    }

    if (doc.contains("quotas")) {
        const auto& q = doc.at("quotas");
        check_keys(q, {"total", "es", "ee", "hppl", "seed_new_initial"}, "quotas");
        read(q, "total", c.quotas.total);
        c.quotas.es = read_opt(q, "es");
        c.quotas.ee = read_opt(q, "ee");
        c.quotas.hppl = read_opt(q, "hppl");
        c.quotas.seed_new_initial = read_opt(q, "seed_new_initial");
    }

    if (doc.contains("trainer")) {
        const auto& t = doc.at("trainer");
        check_keys(t, {"mode", "batch_size", "learning_rate", "rollouts", "max_prompt_length",
                       "max_response_length", "temperature", "epochs"},
                   "trainer");
        read(t, "mode", c.trainer.mode);
        read(t, "batch_size", c.trainer.batch_size);
        read(t, "learning_rate", c.trainer.learning_rate);
        read(t, "rollouts", c.trainer.rollouts);
        read(t, "max_prompt_length", c.trainer.max_prompt_length);
        read(t, "max_response_length", c.trainer.max_response_length);
        read(t, "temperature", c.trainer.temperature);
        read(t, "epochs", c.trainer.epochs);
        if (c.trainer.mode != "static" && c.trainer.mode != "external") {
            throw ConfigError("trainer.mode must be \"static\" or \"external\"");
        }
    }

    if (doc.contains("objective")) {
        const auto& o = doc.at("objective");
        check_keys(o, {"eps_low", "eps_high", "beta", "ratio_mode"}, "objective");
        read(o, "eps_low", c.objective.eps_low);
        read(o, "eps_high", c.objective.eps_high);
        read(o, "beta", c.objective.beta);
        std::string mode = "sequence";
        read(o, "ratio_mode", mode);
        if (mode == "sequence") {
            c.objective.ratio_mode = RatioMode::Sequence;
        } else if (mode == "token") {
            c.objective.ratio_mode = RatioMode::Token;
        } else {
            throw ConfigError("objective.ratio_mode must be \"sequence\" or \"token\"");
        }
        try {
            c.objective.validate();
        } catch (const PreconditionError& e) {
            throw ConfigError(std::string("objective: ") + e.what());
        }
    }

    if (doc.contains("dialog")) {
        const auto& d = doc.at("dialog");
        check_keys(d, {"episodes", "min_turns", "max_turns", "min_tools", "max_tools", "tool_results"},
                   "dialog");
        read(d, "episodes", c.dialog.episodes);
        read(d, "min_turns", c.dialog.min_turns);
        read(d, "max_turns", c.dialog.max_turns);
        read(d, "min_tools", c.dialog.min_tools);
        read(d, "max_tools", c.dialog.max_tools);
        std::string mode = "backend";
        read(d, "tool_results", mode);
        if (mode == "backend") {
            c.tool_results = ToolResultMode::Backend;
        } else if (mode == "fake") {
            c.tool_results = ToolResultMode::Fake;
        } else {
            throw ConfigError("dialog.tool_results must be \"backend\" or \"fake\"");
        }
    }

    if (c.iterations < 1) throw ConfigError("iterations must be at least 1");
    if (c.k < 1) throw ConfigError("k must be at least 1");
    if (c.max_inflight < 1) throw ConfigError("max_inflight must be at least 1");
    c.dialog.seed = c.seed;
    c.dialog.workers = c.max_inflight;
    return c;
}

AppConfig load_config(const std::filesystem::path& path) {
    Json doc;
    try {
        doc = parse_json_strict(read_text_file(path));
    } catch (const Json::exception& e) {
        throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
    } catch (const DataError& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(doc, path.parent_path());
}

PromptSet load_prompts(const AppConfig& config) {
    PromptSet set;
    for (const auto& [name, rel] : config.prompts) {
        const auto path = config.resolve(rel);
        if (name == "expand_system") {
            set.expand_system = read_text_file(path);
            continue;
        }
        auto tmpl = PromptTemplate::from_file(path);
        if (name == "instruction") set.instruction = std::move(tmpl);
        else if (name == "judge") set.judge = std::move(tmpl);
        else if (name == "expand_user") set.expand_user = std::move(tmpl);
        else if (name == "holistic") set.holistic = std::move(tmpl);
        else if (name == "planner") set.planner = std::move(tmpl);
        else if (name == "user_agent") set.user_agent = std::move(tmpl);
        else if (name == "tool_agent") set.tool_agent = std::move(tmpl);
        else if (name == "api") set.api = std::move(tmpl);
    }
    return set;
}

BackendHandle make_backend(BackendRole role, const BackendConfig& b, const AppConfig& config) {
    const DecodingParams params{b.temperature, b.max_tokens, role == BackendRole::Policy};
    const auto mock = !b.mock.empty() ? config.resolve(b.mock) : config.resolve(config.mock_script);
    if (!mock.empty()) {
        auto transport = std::make_shared<MockTransport>(MockScript::load(mock));
        return BackendHandle(role, std::move(transport), params, RetryPolicy{}, config.max_inflight);
    }
    if (b.url.empty()) {
        throw ConfigError("no endpoint or mock script configured for the " +
                          std::string(to_string(role)) + " backend");
    }
    HttpEndpoint ep{b.url, b.model, b.api_key_env, std::chrono::seconds(b.timeout_s), b.logprobs};
    return BackendHandle(role, std::make_shared<HttpTransport>(std::move(ep)), params, RetryPolicy{},
                         config.max_inflight);
}

BackendHandle make_backend(BackendRole role, const AppConfig& config) {
    const BackendConfig& b = role == BackendRole::Generator ? config.generator
                             : role == BackendRole::Judge   ? config.judge
                                                            : config.policy;
    return make_backend(role, b, config);
}

Json to_json(const BackendConfig& b) {
    Json doc{{"url", b.url}, {"model", b.model}, {"api_key_env", b.api_key_env},
             {"timeout_s", b.timeout_s}, {"logprobs", b.logprobs}};
    if (!b.mock.empty()) doc["mock"] = b.mock.string();
    doc["temperature"] = b.temperature;
    doc["max_tokens"] = b.max_tokens;
    return doc;
}

}  // namespace looptool
