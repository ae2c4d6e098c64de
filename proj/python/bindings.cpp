#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "looptool/backend.hpp"
#include "looptool/call_codec.hpp"
#include "looptool/errors.hpp"
#include "looptool/grpo.hpp"
#include "looptool/label_court.hpp"
#include "looptool/loop.hpp"
#include "looptool/schema.hpp"
#include "looptool/verify.hpp"

namespace py = pybind11;
using namespace looptool;

namespace {

Json parse(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const Json::exception& e) {
        throw DataError(std::string("invalid JSON argument: ") + e.what());
    }
}

std::string report_json(const ValidationReport& report) {
    Json out = Json::array();
    for (const auto& v : report.violations) {
        out.push_back(Json{{"kind", to_string(v.kind)}, {"subject", v.subject}, {"message", v.message}});
    }
    return out.dump();
}

RewardedRollout rollout_from_json(const Json& doc) {
    RewardedRollout r;
    for (const auto& e : doc) {
        r.group.push_back({e.at("new_logprobs").get<std::vector<double>>(),
                           e.at("old_logprobs").get<std::vector<double>>(), e.at("reward").get<double>()});
    }
    return r;
}

ObjectiveConfig objective_config(double eps_low, double eps_high, double beta, const std::string& ratio_mode) {
    ObjectiveConfig cfg{eps_low, eps_high, beta, RatioMode::Sequence};
    if (ratio_mode == "token") cfg.ratio_mode = RatioMode::Token;
    else if (ratio_mode != "sequence") throw PreconditionError("ratio_mode must be \"sequence\" or \"token\"");
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_looptool, m) {
    m.doc() = "Native core of the looptool data pipeline";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<StructuralError>(m, "StructuralError", base.ptr());
    py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<VerdictParseError>(m, "VerdictParseError", base.ptr());

    m.def("group_advantage", [](const std::vector<double>& rewards) { return group_advantage(rewards); },
          py::arg("rewards"));

    m.def("perplexity", [](const std::vector<double>& lps) { return perplexity(lps); }, py::arg("token_logprobs"));

    m.def(
        "grpo_objective",
        [](const std::string& group, double eps_low, double eps_high, double beta, const std::string& ratio_mode) {
            return grpo_objective(rollout_from_json(parse(group)), objective_config(eps_low, eps_high, beta, ratio_mode));
        },
        py::arg("group_json"), py::arg("eps_low"), py::arg("eps_high"), py::arg("beta"), py::arg("ratio_mode"));

    m.def(
        "grpo_objective_with_grad",
        [](const std::string& group, double eps_low, double eps_high, double beta, const std::string& ratio_mode) {
            const auto g = grpo_objective_with_grad(rollout_from_json(parse(group)),
                                                    objective_config(eps_low, eps_high, beta, ratio_mode));
            return py::make_tuple(g.value, g.d_new_logprobs);
        },
        py::arg("group_json"), py::arg("eps_low"), py::arg("eps_high"), py::arg("beta"), py::arg("ratio_mode"));

    m.def(
        "parse_output",
        [](const std::string& raw) {
            const auto o = parse_output(raw);
            Json out{{"think", o.think ? Json(*o.think) : Json()}, {"calls", to_json(o.calls)}};
            return out.dump();
        },
        py::arg("raw"));

    m.def(
        "tool_match",
        [](const std::string& pred, const std::string& ref, const std::string& tools) {
            const auto v = tool_match(tool_calls_from_json(parse(pred)), tool_calls_from_json(parse(ref)),
                                      tool_set_from_json(parse(tools)));
            Json diffs = Json::array();
            for (const auto& d : v.diffs) diffs.push_back(Json{{"path", d.path}, {"expected", d.expected}, {"got", d.got}});
            return py::make_tuple(v.matched, diffs.dump());
        },
        py::arg("pred_json"), py::arg("ref_json"), py::arg("tools_json"));

    m.def(
        "binary_reward",
        [](const std::string& sample, const std::string& output) {
            return binary_reward(train_sample_from_json(parse(sample)), output);
        },
        py::arg("sample_json"), py::arg("output"));

    m.def(
        "verify_sample",
        [](const std::string& sample) { return report_json(verify_sample_rules(train_sample_from_json(parse(sample)))); },
        py::arg("sample_json"));

    m.def(
        "validate_api", [](const std::string& spec) { return report_json(validate_api(tool_spec_from_json(parse(spec)))); },
        py::arg("spec_json"));

    m.def(
        "parse_verdict",
        [](const std::string& text) {
            const auto v = parse_verdict(text);
            return py::make_tuple(std::string(to_string(v.decision)), v.e_message);
        },
        py::arg("text"));

    m.def(
        "sample_leaf_path",
        [](const std::string& tree, std::uint64_t seed) { return sample_leaf_path(domain_tree_from_json(parse(tree)), seed); },
        py::arg("tree_json"), py::arg("seed"));

    m.def(
        "request_fingerprint",
        [](const std::string& messages) { return request_fingerprint(message_list_from_json(parse(messages))); },
        py::arg("messages_json"));

    m.def("seed_schedule", &seed_schedule, py::arg("j"), py::arg("initial_quota"));

    m.def(
        "merge_quotas",
        [](std::size_t total, int next_j) {
            QuotaConfig cfg;
            cfg.total = total;
            const auto q = quotas_for(cfg, next_j);
            return py::dict(py::arg("es") = q.es, py::arg("ee") = q.ee, py::arg("hppl") = q.hppl,
                            py::arg("seed_new") = q.seed_new);
        },
        py::arg("total"), py::arg("next_j"));
}
