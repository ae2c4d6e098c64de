#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "looptool/backend.hpp"
#include "looptool/schema.hpp"

namespace looptool {

struct CatalogFailure {
    std::size_t attempt = 0;
    LeafPath context_path;
    LeafPath constraint_path;
    std::string reason;
    std::string raw;
};

struct CatalogResult {
    std::vector<ToolSpec> apis;
    std::vector<CatalogFailure> failures;
};

// `count` synthesis attempts. Attempt i samples both trees with seeds derived
// from `seed + i`; specs that fail validate_api or repeat an earlier name are
// recorded as failures, never returned.
CatalogResult synthesize_catalog(const DomainTree& context_tree, const DomainTree& constraint_tree,
                                 std::size_t count, const BackendHandle& gen,
                                 const PromptTemplate& tmpl, std::uint64_t seed,
                                 std::size_t workers = 4);

}  // namespace looptool
