"""Python access to the looptool native core.

Structured arguments are plain dicts and lists; they cross into C++ as JSON.
"""

import json

from . import _looptool
from ._looptool import (
    DataError,
    Error,
    ParseError,
    PreconditionError,
    StructuralError,
    VerdictParseError,
    group_advantage,
    perplexity,
    seed_schedule,
    merge_quotas,
)

__all__ = [
    "DataError",
    "Error",
    "ParseError",
    "PreconditionError",
    "StructuralError",
    "VerdictParseError",
    "binary_reward",
    "grpo_objective",
    "grpo_objective_with_grad",
    "group_advantage",
    "merge_quotas",
    "parse_output",
    "parse_verdict",
    "perplexity",
    "request_fingerprint",
    "sample_leaf_path",
    "seed_schedule",
    "tool_match",
    "validate_api",
    "verify_sample",
]


def _dump(value):
    return json.dumps(value)


def grpo_objective(group, eps_low=0.2, eps_high=0.28, beta=0.0, ratio_mode="sequence"):
    """Clipped group-relative surrogate for one group of rollouts.

    Each entry of ``group`` is ``{"new_logprobs", "old_logprobs", "reward"}``.
    """
    return _looptool.grpo_objective(_dump(group), eps_low, eps_high, beta, ratio_mode)


def grpo_objective_with_grad(group, eps_low=0.2, eps_high=0.28, beta=0.0, ratio_mode="sequence"):
    """Objective value and its gradient with respect to each new logprob."""
    return _looptool.grpo_objective_with_grad(_dump(group), eps_low, eps_high, beta, ratio_mode)


def parse_output(raw):
    """Splits a model turn into ``{"think": str | None, "calls": [...]}``."""
    return json.loads(_looptool.parse_output(raw))


def tool_match(pred, ref, tools):
    """Returns ``(matched, diffs)`` for two call lists under a tool set."""
    matched, diffs = _looptool.tool_match(_dump(pred), _dump(ref), _dump(tools))
    return matched, json.loads(diffs)


def binary_reward(sample, output):
    return _looptool.binary_reward(_dump(sample), output)


def verify_sample(sample):
    """Rule-tier violations of a training sample; empty when it passes."""
    return json.loads(_looptool.verify_sample(_dump(sample)))


def validate_api(spec):
    return json.loads(_looptool.validate_api(_dump(spec)))


def parse_verdict(text):
    """Returns ``(decision, error_analysis)`` from a judge reply."""
    return _looptool.parse_verdict(text)


def sample_leaf_path(tree, seed):
    return _looptool.sample_leaf_path(_dump(tree), seed)


def request_fingerprint(messages):
    return _looptool.request_fingerprint(_dump(messages))
