#include "looptool/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "looptool/errors.hpp"

namespace looptool {

int binary_reward(const TrainSample& sample, std::string_view output) {
    try {
        const auto parsed = parse_output(output);
        return tool_match(parsed.calls, sample.label_calls, sample.tools).matched ? 1 : 0;
    } catch (const Error&) {
        return 0;
    }
}

std::vector<double> group_advantage(std::span<const double> rewards) {
    const auto g = rewards.size();
    if (g < 2) throw PreconditionError("group advantage needs at least 2 rewards");
    const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
    std::vector<double> adv(g, 0.0);
    if (*lo == *hi) return adv;

    const double n = static_cast<double>(g);
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double ss = 0.0;
    for (double r : rewards) ss += (r - mean) * (r - mean);
    const double sd = std::sqrt(ss / n);
    for (std::size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / sd;
    return adv;
}

void ObjectiveConfig::validate() const {
    if (!(eps_low > 0.0 && eps_low <= eps_high && eps_high < 1.0)) {
        throw PreconditionError("clip range must satisfy 0 < eps_low <= eps_high < 1");
    }
    if (!(beta >= 0.0)) throw PreconditionError("KL weight beta must be >= 0");
}

void RewardedRollout::validate() const {
    if (group.size() < 2) throw StructuralError("rollout group needs at least 2 entries");
    for (std::size_t i = 0; i < group.size(); ++i) {
        if (group[i].new_logprobs.size() != group[i].old_logprobs.size()) {
            throw StructuralError("rollout entry " + std::to_string(i) +
                                  " has mismatched new/old logprob lengths");
        }
    }
}

namespace {

struct Surrogate {
    double value;
    double slope;  // d value / d log rho
};

// min(rho A, clip(rho) A) and its derivative with respect to log rho.
Surrogate clipped_term(double rho, double adv, double lo, double hi) {
    const double unclipped = rho * adv;
    const double clipped = std::clamp(rho, lo, hi) * adv;
    if (clipped < unclipped) return {clipped, 0.0};
    return {unclipped, unclipped};
}

}  // namespace

ObjectiveGradient grpo_objective_with_grad(const RewardedRollout& rollout, const ObjectiveConfig& cfg) {
    cfg.validate();
    rollout.validate();

    const auto g = rollout.group.size();
    std::vector<double> rewards(g);
    for (std::size_t i = 0; i < g; ++i) rewards[i] = rollout.group[i].reward;
    const auto adv = group_advantage(rewards);

    const double lo = 1.0 - cfg.eps_low;
    const double hi = 1.0 + cfg.eps_high;
    const double inv_g = 1.0 / static_cast<double>(g);

    ObjectiveGradient out;
    out.d_new_logprobs.resize(g);
    double surrogate = 0.0;
    double kl = 0.0;

    for (std::size_t i = 0; i < g; ++i) {
        const auto& e = rollout.group[i];
        const auto len = e.new_logprobs.size();
        auto& grad = out.d_new_logprobs[i];
        grad.assign(len, 0.0);

        if (cfg.ratio_mode == RatioMode::Sequence) {
            double log_ratio = 0.0;
            for (std::size_t t = 0; t < len; ++t) log_ratio += e.new_logprobs[t] - e.old_logprobs[t];
            const auto term = clipped_term(std::exp(log_ratio), adv[i], lo, hi);
            surrogate += term.value;
            std::fill(grad.begin(), grad.end(), term.slope * inv_g);
        } else if (len > 0) {
            const double inv_len = 1.0 / static_cast<double>(len);
            for (std::size_t t = 0; t < len; ++t) {
                const auto term =
                    clipped_term(std::exp(e.new_logprobs[t] - e.old_logprobs[t]), adv[i], lo, hi);
                surrogate += term.value * inv_len;
                grad[t] = term.slope * inv_len * inv_g;
            }
        }

        if (cfg.beta > 0.0) {
            for (std::size_t t = 0; t < len; ++t) {
                const double x = e.old_logprobs[t] - e.new_logprobs[t];
                const double ex = std::exp(x);
                kl += ex - x - 1.0;
                grad[t] -= cfg.beta * inv_g * (1.0 - ex);
            }
        }
    }
    out.value = surrogate * inv_g - cfg.beta * kl * inv_g;
    return out;
}

double grpo_objective(const RewardedRollout& rollout, const ObjectiveConfig& cfg) {
    return grpo_objective_with_grad(rollout, cfg).value;
}

double perplexity(std::span<const double> token_logprobs) {
    if (token_logprobs.empty()) throw PreconditionError("perplexity of an empty sequence");
    long double sum = 0.0L;
    for (double lp : token_logprobs) {
        if (std::isnan(lp) || lp > 0.0) {
            throw DataError("token logprob " + std::to_string(lp) + " is not a log-probability");
        }
        sum += lp;
    }
    return static_cast<double>(std::exp(-sum / static_cast<long double>(token_logprobs.size())));
}

double perplexity(const TokenLogprobs& token_logprobs) {
    std::vector<double> lps;
    lps.reserve(token_logprobs.size());
    for (const auto& t : token_logprobs) lps.push_back(t.logprob);
    return perplexity(lps);
}

// ---------------------------------------------------------------------------

SoftmaxToyPolicy::SoftmaxToyPolicy(std::size_t positions, std::size_t vocab, std::vector<double> logits)
    : positions_(positions), vocab_(vocab), logits_(std::move(logits)) {
    if (logits_.size() != positions_ * vocab_) {
        throw StructuralError("toy policy logits must have positions * vocab entries");
    }
}

namespace {

double log_sum_exp(std::span<const double> row) {
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double x : row) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace

std::vector<double> SoftmaxToyPolicy::logprobs(std::span<const int> tokens) const {
    if (tokens.size() > positions_) throw StructuralError("sequence longer than toy policy");
    std::vector<double> out(tokens.size());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const std::span<const double> row(logits_.data() + t * vocab_, vocab_);
        out[t] = row[static_cast<std::size_t>(tokens[t])] - log_sum_exp(row);
    }
    return out;
}

void SoftmaxToyPolicy::backprop(std::span<const int> tokens, std::span<const double> d_logprobs,
                                std::vector<double>& grad) const {
    grad.resize(logits_.size(), 0.0);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const std::span<const double> row(logits_.data() + t * vocab_, vocab_);
        const double lse = log_sum_exp(row);
        for (std::size_t v = 0; v < vocab_; ++v) {
            const double p = std::exp(row[v] - lse);
            const double indicator = static_cast<std::size_t>(tokens[t]) == v ? 1.0 : 0.0;
            grad[t * vocab_ + v] += d_logprobs[t] * (indicator - p);
        }
    }
}

}  // namespace looptool
