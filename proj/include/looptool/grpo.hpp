#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "looptool/backend.hpp"
#include "looptool/sample.hpp"

namespace looptool {

// 1 iff `output` parses and its calls ToolMatch the sample's label; every
// failure mode (malformed output, corrupt reference) scores 0.
int binary_reward(const TrainSample& sample, std::string_view output);

// (r_i - mean) / std with the population std. A group whose rewards are all
// equal has zero variance and gets all-zero advantages. Needs G >= 2.
std::vector<double> group_advantage(std::span<const double> rewards);

enum class RatioMode {
    Sequence,  // one ratio per rollout: exp(sum new - sum old)
    Token,     // PPO-style per-token ratios averaged over the rollout
};

struct ObjectiveConfig {
    double eps_low = 0.2;
    double eps_high = 0.28;
    double beta = 0.0;  // KL weight
    RatioMode ratio_mode = RatioMode::Sequence;

    // 0 < eps_low <= eps_high < 1 and beta >= 0, else PreconditionError.
    void validate() const;
};

struct RolloutEntry {
    std::vector<double> new_logprobs;  // per output token under the current policy
    std::vector<double> old_logprobs;  // same tokens under the sampling policy
    double reward = 0.0;
};

struct RewardedRollout {
    std::vector<RolloutEntry> group;

    // G >= 2 and equal-length logprob vectors per entry, else StructuralError.
    void validate() const;
};

// Clipped group-relative surrogate:
//   (1/G) sum_i min(rho_i A_i, clip(rho_i, 1 - eps_low, 1 + eps_high) A_i) - beta * KL
// KL uses the per-token k3 estimator exp(o - n) - (o - n) - 1, summed over a
// rollout and averaged over the group; it is only evaluated when beta > 0.
double grpo_objective(const RewardedRollout& rollout, const ObjectiveConfig& cfg);

struct ObjectiveGradient {
    double value = 0.0;
    // d objective / d new_logprobs[i][t]
    std::vector<std::vector<double>> d_new_logprobs;
};

// Objective value plus its analytic gradient with respect to the new-policy
// token logprobs. On a clip boundary the unclipped branch's slope is used.
ObjectiveGradient grpo_objective_with_grad(const RewardedRollout& rollout, const ObjectiveConfig& cfg);

// exp(-(1/L) sum logprobs). Empty input is a PreconditionError; a positive or
// NaN entry is a DataError.
double perplexity(std::span<const double> token_logprobs);
double perplexity(const TokenLogprobs& token_logprobs);

// Independent-position softmax policy over a small vocabulary, for gradient
// checks: token t of a sequence is scored by logits row t.
class SoftmaxToyPolicy {
public:
    SoftmaxToyPolicy(std::size_t positions, std::size_t vocab, std::vector<double> logits);

    std::size_t positions() const noexcept { return positions_; }
    std::size_t vocab() const noexcept { return vocab_; }
    const std::vector<double>& logits() const noexcept { return logits_; }
    std::vector<double>& logits() noexcept { return logits_; }

    std::vector<double> logprobs(std::span<const int> tokens) const;

    // Chain rule through log-softmax: accumulates d/d logits given
    // d/d logprobs for `tokens` into `grad` (size positions * vocab).
    void backprop(std::span<const int> tokens, std::span<const double> d_logprobs,
                  std::vector<double>& grad) const;

private:
    std::size_t positions_;
    std::size_t vocab_;
    std::vector<double> logits_;
};

}  // namespace looptool
