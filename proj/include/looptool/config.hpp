#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "looptool/backend.hpp"
#include "looptool/dialog.hpp"
#include "looptool/grpo.hpp"
#include "looptool/templates.hpp"

namespace looptool {

struct BackendConfig {
    std::string url;
    std::string model;
    std::string api_key_env = "LOOPTOOL_API_KEY";
    int timeout_s = 120;
    bool logprobs = true;
    std::filesystem::path mock;  // per-role mock script; overrides the global one
    double temperature = 0.7;
    int max_tokens = 1024;
};

// Unset quotas fall back to the default bucket proportions scaled to `total`.
struct QuotaConfig {
    std::size_t total = 18304;
    std::optional<std::size_t> es;
    std::optional<std::size_t> ee;
    std::optional<std::size_t> hppl;
    std::optional<std::size_t> seed_new_initial;  // quota at j = 2, halved each later iteration
};

struct TrainerConfig {
    std::string mode = "static";  // static | external
    int batch_size = 128;
    double learning_rate = 1e-6;
    int rollouts = 16;
    int max_prompt_length = 4096;
    int max_response_length = 1024;
    double temperature = 1.0;
    int epochs = 2;
};

struct AppConfig {
    std::filesystem::path base_dir;  // relative paths resolve against this

    std::uint64_t seed = 0;
    std::size_t max_inflight = 8;
    std::string current_time = "2025-06-01 09:00:00";

    std::filesystem::path mock_script;
    BackendConfig generator;
    BackendConfig judge;
    BackendConfig policy;

    std::map<std::string, std::filesystem::path> prompts;  // name -> template file

    // loop
    std::filesystem::path workdir = "looptool_run";
    std::filesystem::path seed_corpus;
    int iterations = 1;
    std::size_t initial_size = 0;  // D_1 size; 0 takes the whole seed corpus
    std::size_t k = 4;
    bool both_correct_to_hppl = true;
    QuotaConfig quotas;
    TrainerConfig trainer;
    ObjectiveConfig objective;

    // corpus construction
    CorpusConfig dialog;
    ToolResultMode tool_results = ToolResultMode::Backend;
    std::size_t apis = 10;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
};

BackendConfig backend_config_from_json(const Json& obj, const std::string& where = "backend");
Json to_json(const BackendConfig& backend);

// Unknown top-level keys raise ConfigError so typos do not pass silently.
AppConfig config_from_json(const Json& doc, const std::filesystem::path& base_dir = {});
AppConfig load_config(const std::filesystem::path& path);

// Built-in templates with any configured file overrides applied.
PromptSet load_prompts(const AppConfig& config);

// A mock transport when a script is configured for the role (or globally),
// otherwise an HTTP transport. ConfigError when neither is available.
BackendHandle make_backend(BackendRole role, const AppConfig& config);
BackendHandle make_backend(BackendRole role, const BackendConfig& backend, const AppConfig& config);

}  // namespace looptool
