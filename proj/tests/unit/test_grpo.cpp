#include <doctest.h>

#include <cmath>

#include "../support/gen.hpp"
#include "../support/oracles.hpp"
#include "../support/toy_world.hpp"
#include "looptool/errors.hpp"
#include "looptool/grpo.hpp"

using namespace looptool;

namespace {

RolloutEntry entry(double new_sum, double old_sum, double reward) {
    return RolloutEntry{{new_sum}, {old_sum}, reward};
}

}  // namespace

TEST_SUITE("grpo") {

TEST_CASE("binary reward") {
    const auto s = toy::corpus().front();
    CHECK(binary_reward(s, serialize_calls(s.label_calls)) == 1);
    CHECK(binary_reward(s, "the weather is nice") == 0);
    auto wrong = s.label_calls;
    wrong[0].arguments["city"] = "Atlantis";
    CHECK(binary_reward(s, serialize_calls(wrong)) == 0);
}

TEST_CASE("group advantage examples") {
    const std::vector<double> r{1, 0, 0, 1};
    const auto a = group_advantage(r);
    const std::vector<double> expected{1, -1, -1, 1};
    for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == doctest::Approx(expected[i]).epsilon(1e-15));

    const std::vector<double> same{1, 1, 1, 1};
    for (double v : group_advantage(same)) CHECK(v == 0.0);

    const std::vector<double> one{1};
    CHECK_THROWS_AS(group_advantage(one), PreconditionError);
}

TEST_CASE("property: advantages standardized and matching the oracle") {
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        const auto g = 2 + gen::below(rng, 15);
        std::vector<double> r(g);
        for (auto& x : r) x = gen::coin(rng, 0.3) ? std::round(uniform_unit(rng)) : uniform_unit(rng) * 4 - 2;
        const auto a = group_advantage(r);
        const auto o = oracle::advantage(r);
        for (std::size_t k = 0; k < g; ++k) CHECK(std::fabs(a[k] - static_cast<double>(o[k])) <= 1e-12);
        bool varied = false;
        for (auto x : r) varied = varied || x != r[0];
        if (varied) {
            double mean = 0, sq = 0;
            for (auto x : a) mean += x;
            mean /= g;
            for (auto x : a) sq += (x - mean) * (x - mean);
            CHECK(std::fabs(mean) <= 1e-12);
            CHECK(std::fabs(std::sqrt(sq / g) - 1) <= 1e-12);
        }
    }
}

TEST_CASE("objective examples") {
    ObjectiveConfig cfg;
    RewardedRollout ro{{entry(-1, -1, 1), entry(-2, -2, 0), entry(-3, -3, 0), entry(-4, -4, 1)}};
    CHECK(std::fabs(grpo_objective(ro, cfg)) <= 1e-15);

    CHECK(static_cast<double>(oracle::clip_term(1.5L, 1.0L, 0.2L, 0.28L)) == doctest::Approx(1.28).epsilon(1e-15));
    CHECK(static_cast<double>(oracle::clip_term(0.5L, -1.0L, 0.2L, 0.28L)) == doctest::Approx(-0.8).epsilon(1e-15));

    // G = 2 with rewards (1, 0) gives A = (+1, -1); pick ratios 1.5 and 0.5.
    RewardedRollout two{{entry(std::log(1.5), 0, 1), entry(std::log(0.5), 0, 0)}};
    CHECK(grpo_objective(two, cfg) == doctest::Approx((1.28 + -0.8) / 2).epsilon(1e-12));

    RewardedRollout bad{{RolloutEntry{{-1, -2}, {-1}, 1}, entry(0, 0, 0)}};
    CHECK_THROWS_AS(grpo_objective(bad, cfg), StructuralError);
    ObjectiveConfig inverted;
    inverted.eps_low = 0.3;
    inverted.eps_high = 0.2;
    CHECK_THROWS_AS(grpo_objective(two, inverted), PreconditionError);
}

TEST_CASE("property: symmetric clip inside the trust region equals the plain surrogate") {
    Rng rng(17);
    for (int i = 0; i < 300; ++i) {
        ObjectiveConfig cfg;
        cfg.eps_low = cfg.eps_high = 0.25;
        RewardedRollout ro;
        const auto g = 2 + gen::below(rng, 8);
        for (std::size_t k = 0; k < g; ++k) {
            const double log_rho = std::log(0.76 + 0.48 * uniform_unit(rng));
            ro.group.push_back(entry(-1.0 + log_rho, -1.0, gen::coin(rng) ? 1.0 : 0.0));
        }
        std::vector<double> r;
        for (const auto& e : ro.group) r.push_back(e.reward);
        const auto a = group_advantage(r);
        double plain = 0;
        for (std::size_t k = 0; k < g; ++k) plain += std::exp(ro.group[k].new_logprobs[0] - ro.group[k].old_logprobs[0]) * a[k];
        plain /= g;
        CHECK(std::fabs(grpo_objective(ro, cfg) - plain) <= 1e-12);
    }
}

TEST_CASE("property: objective matches the long-double oracle in both ratio modes") {
    Rng rng(23);
    for (int i = 0; i < 400; ++i) {
        ObjectiveConfig cfg;
        cfg.beta = gen::coin(rng) ? 0.0 : 0.05;
        cfg.ratio_mode = gen::coin(rng) ? RatioMode::Sequence : RatioMode::Token;
        RewardedRollout ro;
        const auto g = 2 + gen::below(rng, 6);
        const auto len = 1 + gen::below(rng, 5);
        for (std::size_t k = 0; k < g; ++k) {
            RolloutEntry e;
            for (std::size_t t = 0; t < len; ++t) {
                const double old_lp = -3 * uniform_unit(rng);
                e.old_logprobs.push_back(old_lp);
                e.new_logprobs.push_back(std::min(0.0, old_lp + (uniform_unit(rng) - 0.5) * 0.6));
            }
            e.reward = gen::coin(rng) ? 1 : 0;
            ro.group.push_back(e);
        }
        CHECK(std::fabs(grpo_objective(ro, cfg) - static_cast<double>(oracle::objective(ro, cfg))) <= 1e-12);
    }
}

TEST_CASE("perplexity examples") {
    for (std::size_t L : {1u, 2u, 7u, 100u}) {
        const std::vector<double> lp(L, -std::log(4.0));
        CHECK(std::fabs(perplexity(lp) - 4.0) <= 1e-12);
    }
    const std::vector<double> certain{0.0};
    CHECK(perplexity(certain) == 1.0);
    const std::vector<double> mixed{-std::log(2.0), -std::log(8.0)};
    CHECK(std::fabs(perplexity(mixed) - 4.0) <= 1e-12);
    CHECK_THROWS_AS(perplexity(std::vector<double>{}), PreconditionError);
    CHECK_THROWS_AS(perplexity(std::vector<double>{-1.0, 0.5}), DataError);
    CHECK_THROWS_AS(perplexity(std::vector<double>{NAN}), DataError);
}

TEST_CASE("property: perplexity decreases as any logprob rises") {
    Rng rng(8);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> lp(1 + gen::below(rng, 10));
        for (auto& x : lp) x = -5 * uniform_unit(rng) - 1e-3;
        const auto k = gen::below(rng, lp.size());
        auto up = lp;
        up[k] = std::min(0.0, lp[k] + 1e-3 + uniform_unit(rng));
        CHECK(perplexity(up) < perplexity(lp));
        CHECK(std::fabs(perplexity(lp) - static_cast<double>(oracle::perplexity(lp))) <= 1e-12 * perplexity(lp));
    }
}

TEST_CASE("toy policy gradient through log-softmax") {
    SoftmaxToyPolicy pol(2, 5, {0.1, -0.2, 0.3, 0.0, 0.5, 1.0, 0.0, -1.0, 0.2, 0.1});
    const std::vector<int> toks{2, 0};
    const auto lp = pol.logprobs(toks);
    double z0 = 0;
    for (int v = 0; v < 5; ++v) z0 += std::exp(pol.logits()[v]);
    CHECK(lp[0] == doctest::Approx(0.3 - std::log(z0)).epsilon(1e-14));
    std::vector<double> grad;
    const std::vector<double> ones{1.0, 1.0};
    pol.backprop(toks, ones, grad);
    double row_sum = 0;
    for (int v = 0; v < 5; ++v) row_sum += grad[v];
    CHECK(std::fabs(row_sum) <= 1e-14);
    CHECK_THROWS_AS(SoftmaxToyPolicy(2, 5, {1.0}), StructuralError);
}

}
