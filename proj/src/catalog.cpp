#include "looptool/catalog.hpp"

#include <optional>
#include <set>

#include "looptool/errors.hpp"
#include "looptool/parallel.hpp"

namespace looptool {

CatalogResult synthesize_catalog(const DomainTree& context_tree, const DomainTree& constraint_tree,
                                 std::size_t count, const BackendHandle& gen,
                                 const PromptTemplate& tmpl, std::uint64_t seed, std::size_t workers) {
    if (context_tree.kind != TreeKind::Context) throw PreconditionError("first tree must be a context tree");
    if (constraint_tree.kind != TreeKind::Constraint) {
        throw PreconditionError("second tree must be a constraint tree");
    }

    struct Slot {
        std::optional<ToolSpec> spec;
        CatalogFailure failure;
    };
    std::vector<Slot> slots(count);
    parallel_for(count, workers, [&](std::size_t i) {
        auto& slot = slots[i];
        slot.failure.attempt = i;
        slot.failure.context_path = sample_leaf_path(context_tree, seed + i);
        slot.failure.constraint_path = sample_leaf_path(constraint_tree, (seed + i) ^ 0x9e3779b97f4a7c15ULL);
        try {
            const auto prompt = build_api_prompt(slot.failure.context_path, slot.failure.constraint_path, tmpl);
            auto spec = synthesize_api(prompt, gen);
            const auto report = validate_api(spec);
            if (!report.ok()) {
                slot.failure.reason = "invalid spec: " + report.summary();
                slot.failure.raw = to_json(spec).dump();
                return;
            }
            slot.spec = std::move(spec);
        } catch (const SynthesisError& e) {
            slot.failure.reason = e.what();
            slot.failure.raw = e.raw();
        }
    });

    CatalogResult result;
    std::set<std::string> names;
    for (auto& s : slots) {
        if (s.spec && !names.insert(s.spec->name).second) {
            s.failure.reason = "duplicate tool name " + s.spec->name;
            s.failure.raw = to_json(*s.spec).dump();
            s.spec.reset();
        }
        if (s.spec) {
            result.apis.push_back(std::move(*s.spec));
        } else {
            result.failures.push_back(std::move(s.failure));
        }
    }
    return result;
}

}  // namespace looptool
