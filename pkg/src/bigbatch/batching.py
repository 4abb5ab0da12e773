"""Batch sampling, the batch gradient variance estimate, and batch growth.

A batch is grown until its mean gradient dominates its own noise::

    theta^2 * ||G_B||^2 > V_B / K

where ``V_B`` is the unbiased sample variance (trace) of the per-sample
gradients in the batch. Growth extends the current batch without
replacement, so only the newly added samples are evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .problems import Problem, per_sample


class BatchExhausted(ValueError):
    """Raised when a batch cannot be extended because the complement is too small."""


@dataclass(frozen=True, eq=False)
class BatchState:
    """Current batch at one iterate.

    ``mean_grad`` and ``m2`` (sum of squared deviations from the mean) are
    maintained incrementally; ``var_est`` is ``m2 / (K - 1)``.
    """

    indices: np.ndarray
    per_sample_grads: np.ndarray
    per_sample_values: np.ndarray
    mean_grad: np.ndarray
    m2: float

    @property
    def K(self) -> int:
        return len(self.indices)

    @property
    def var_est(self) -> float:
        return self.m2 / (self.K - 1)

    @property
    def grad_norm2(self) -> float:
        return float(self.mean_grad @ self.mean_grad)


@dataclass(frozen=True)
class GrowthPolicy:
    increment_fraction: float = 0.1
    theta: float = 1.0
    cap: int | None = None

    def __post_init__(self):
        if not 0 < self.increment_fraction <= 1:
            raise ValueError(
                f"increment_fraction must lie in (0, 1], got {self.increment_fraction}"
            )
        if not 0 < self.theta <= 1:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")

    def increment(self, K: int) -> int:
        # round() keeps e.g. 0.1 * 30 from ceiling to 4
        return max(1, math.ceil(round(self.increment_fraction * K, 9)))


def draw_batch(rng: np.random.Generator, n: int, K: int) -> np.ndarray:
    """``K`` distinct indices drawn uniformly from ``range(n)``."""
    if K > n:
        raise BatchExhausted(f"batch size {K} exceeds dataset size {n}")
    if K < 1:
        raise ValueError(f"batch size must be positive, got {K}")
    return rng.choice(n, size=K, replace=False)


def estimate_variance(per_sample_grads, mean_grad=None) -> float:
    """Unbiased trace variance ``sum ||g_i - mean||^2 / (K - 1)``."""
    g = np.asarray(per_sample_grads, dtype=np.float64)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[0] < 2:
        raise ValueError("need at least two gradients to estimate a variance")
    mean = g.mean(axis=0) if mean_grad is None else np.asarray(mean_grad, dtype=np.float64)
    dev = g - mean
    return float(np.einsum("ij,ij->", dev, dev) / (g.shape[0] - 1))


def _stats(grads: np.ndarray):
    mean = grads.mean(axis=0)
    dev = grads - mean
    return mean, float(np.einsum("ij,ij->", dev, dev))


def make_batch_state(problem: Problem, x, indices) -> BatchState:
    """Evaluate a fresh batch. Indices are stored in ascending order."""
    idx = np.sort(np.asarray(indices, dtype=np.intp))
    values, grads = per_sample(problem, x, idx)
    mean, m2 = _stats(grads)
    return BatchState(idx, grads, values, mean, m2)


def extend_batch(rng: np.random.Generator, state: BatchState, delta: int, n: int,
                 problem: Problem, x) -> BatchState:
    """Add ``delta`` new distinct indices drawn uniformly from the complement.

    Only the new samples are evaluated; mean and variance are merged with the
    pairwise update of Chan, Golub and LeVeque.
    """
    if delta == 0:
        return state
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    if state.K + delta > n:
        raise BatchExhausted(f"cannot add {delta} samples to a batch of {state.K} (n={n})")
    mask = np.ones(n, dtype=bool)
    mask[state.indices] = False
    new = np.sort(rng.choice(np.flatnonzero(mask), size=delta, replace=False))
    values, grads = per_sample(problem, x, new)
    mean_b, m2_b = _stats(grads)

    n_a, n_b = state.K, delta
    total = n_a + n_b
    shift = mean_b - state.mean_grad
    mean = state.mean_grad + shift * (n_b / total)
    m2 = state.m2 + m2_b + float(shift @ shift) * n_a * n_b / total

    idx = np.concatenate([state.indices, new])
    order = np.argsort(idx, kind="stable")
    return BatchState(
        idx[order],
        np.concatenate([state.per_sample_grads, grads])[order],
        np.concatenate([state.per_sample_values, values])[order],
        mean,
        m2,
    )


def condition_holds(state: BatchState, theta: float) -> bool:
    # theta < 1 demands a smaller noise ratio; theta = 1 is the practical default
    return theta * theta * state.grad_norm2 > state.var_est / state.K


def grow_until_condition(problem: Problem, x, state: BatchState, policy: GrowthPolicy,
                         rng: np.random.Generator) -> tuple[BatchState, int]:
    """Extend the batch until the signal-to-noise test passes or K reaches the cap.

    Returns the final state and the number of per-sample gradients evaluated.
    """
    cap = problem.n if policy.cap is None else min(policy.cap, problem.n)
    evals = 0
    while state.K < cap and not condition_holds(state, policy.theta):
        delta = min(policy.increment(state.K), cap - state.K)
        state = extend_batch(rng, state, delta, problem.n, problem, x)
        evals += delta
    return state, evals


def recompute(state: BatchState) -> BatchState:
    """Rebuild mean and variance from the stored per-sample gradients."""
    mean, m2 = _stats(state.per_sample_grads)
    return replace(state, mean_grad=mean, m2=m2)
