"""Big batch SGD variants and baselines, written as stepwise state machines.

Every step function takes an :class:`OptimizerState` and returns the next
state together with one :class:`StepInfo` per parameter update performed.
:func:`iter_run` drives a method under an epoch budget and turns step
information into :class:`TraceRecord` rows with full-objective diagnostics.

Methods
-------
``gd``          full-batch gradient descent with a fixed stepsize
``sgd-decay``   small with-replacement batches, stepsize ``a / (b + t)``
``sf``          batch multiplied by a constant factor every iteration
``bbs-fixed``   big batch SGD, fixed stepsize
``bbs-armijo``  big batch SGD, backtracking line search (doubling on growth)
``bbs-bb``      big batch SGD, noise-corrected Barzilai-Borwein stepsizes
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np

from .batching import (
    BatchState,
    GrowthPolicy,
    draw_batch,
    grow_until_condition,
    make_batch_state,
)
from .problems import Problem, batch_loss, batch_value, full_loss

METHODS = ("gd", "sgd-decay", "sf", "bbs-fixed", "bbs-armijo", "bbs-bb")

DIVERGENCE_LIMIT = 1e12


class DivergenceError(RuntimeError):
    """The iterate or the loss left the finite/bounded region."""


class LineSearchError(RuntimeError):
    """Backtracking exhausted its halvings without sufficient decrease."""

    def __init__(self, message: str, alpha: float):
        super().__init__(message)
        self.alpha = alpha


class CurvatureError(ValueError):
    """No usable curvature estimate (zero displacement or nonpositive curvature)."""


# -- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class ArmijoConfig:
    c: float = 0.1
    shrink: float = 2.0
    max_halvings: int = 60

    def __post_init__(self):
        if not 0 < self.c <= 0.5:
            raise ValueError(f"c must lie in (0, 0.5], got {self.c}")
        if not self.shrink > 1:
            raise ValueError(f"shrink must exceed 1, got {self.shrink}")
        if self.max_halvings < 1:
            raise ValueError(f"max_halvings must be positive, got {self.max_halvings}")


@dataclass(frozen=True)
class DecaySchedule:
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")

    def __call__(self, t: int) -> float:
        return self.a / (self.b + t)


def _ceil_mul(factor: float, K: int) -> int:
    return math.ceil(round(factor * K, 9))


@dataclass(frozen=True)
class SfPolicy:
    growth_factor: float = 1.1
    k0: int = 10

    def __post_init__(self):
        if not self.growth_factor > 1:
            raise ValueError(f"growth_factor must exceed 1, got {self.growth_factor}")
        if self.k0 < 1:
            raise ValueError(f"k0 must be positive, got {self.k0}")

    def next_size(self, K: int, n: int) -> int:
        return min(n, _ceil_mul(self.growth_factor, K))


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs for every method; each method reads only the ones it needs."""

    alpha: float = 1.0
    a: float = 1.0
    b: float = 1.0
    c: float = 0.1
    max_halvings: int = 60
    k0: int = 10
    increment_fraction: float = 0.1
    theta: float = 1.0
    sf_growth: float = 1.1
    sgd_batch: int = 10
    tol: float = 1e-6
    diag_every: int = 1
    x0: np.ndarray | None = None
    audit: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.k0 < 2:
            raise ValueError(f"k0 must be at least 2, got {self.k0}")
        if self.sgd_batch < 1:
            raise ValueError(f"sgd_batch must be positive, got {self.sgd_batch}")
        if not self.tol >= 0:
            raise ValueError(f"tol must be nonnegative, got {self.tol}")
        if self.diag_every < 1:
            raise ValueError(f"diag_every must be positive, got {self.diag_every}")
        # delegate range checks to the owning types
        self.armijo, self.growth, self.decay, self.sf_policy

    @property
    def armijo(self) -> ArmijoConfig:
        return ArmijoConfig(c=self.c, max_halvings=self.max_halvings)

    @property
    def growth(self) -> GrowthPolicy:
        return GrowthPolicy(increment_fraction=self.increment_fraction, theta=self.theta)

    @property
    def decay(self) -> DecaySchedule:
        return DecaySchedule(self.a, self.b)

    @property
    def sf_policy(self) -> SfPolicy:
        return SfPolicy(self.sf_growth, self.k0)


# -- state and records -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class OptimizerState:
    x: np.ndarray
    alpha: float
    K: int
    t: int = 0
    grew_flag: bool = False
    prev_x: np.ndarray | None = None
    prev_batch_grad: np.ndarray | None = None
    grad_evals: int = 0


@dataclass(frozen=True, eq=False)
class StepInfo:
    """One parameter update ``x_after = x_before - alpha * direction``."""

    K: int
    alpha: float
    grad_evals: int
    x_before: np.ndarray
    direction: np.ndarray
    batch: np.ndarray | None
    batch_var: float = float("nan")
    exact: bool = False  # direction is the full gradient
    curvature: float = float("nan")


@dataclass(eq=False)
class TraceRecord:
    method: str
    seed: int
    t: int
    epoch: float
    K: int
    alpha: float
    loss_full: float
    grad_norm_full: float
    elapsed_ms: float
    grad_evals: int = 0
    x: np.ndarray | None = field(default=None, repr=False)
    step: StepInfo | None = field(default=None, repr=False)


def _check_finite(x: np.ndarray, loss: float | None = None) -> None:
    if not np.all(np.isfinite(x)) or float(np.linalg.norm(x)) > DIVERGENCE_LIMIT:
        raise DivergenceError(f"iterate diverged (||x|| = {np.linalg.norm(x):.3g})")
    if loss is not None and (not math.isfinite(loss) or abs(loss) > DIVERGENCE_LIMIT):
        raise DivergenceError(f"loss diverged ({loss:.3g})")


# -- building blocks -------------------------------------------------------


def armijo_search(loss_at: Callable[[np.ndarray], float], x, g, alpha0: float,
                  cfg: ArmijoConfig = ArmijoConfig(), f0: float | None = None) -> float:
    """Largest ``alpha0 / 2**k`` with ``loss(x - a g) <= loss(x) - c a ||g||^2``.

    ``loss_at`` must evaluate the same batch loss that produced ``g``.
    """
    if not alpha0 > 0:
        raise ValueError(f"initial stepsize must be positive, got {alpha0}")
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    f0 = loss_at(x) if f0 is None else f0
    gg = float(g @ g)
    alpha = alpha0
    for _ in range(cfg.max_halvings + 1):
        trial = x - alpha * g
        if np.all(np.isfinite(trial)):
            f = loss_at(trial)
            if f <= f0 - cfg.c * alpha * gg:
                return alpha
        alpha /= cfg.shrink
    raise LineSearchError(
        f"no sufficient decrease after {cfg.max_halvings} halvings", alpha * cfg.shrink
    )


def bb_curvature(x_t, x_prev, g_t, g_prev) -> float:
    """Secant curvature ``<s, y> / <s, s>`` from two gradients on one batch."""
    s = np.asarray(x_t, dtype=np.float64) - np.asarray(x_prev, dtype=np.float64)
    y = np.asarray(g_t, dtype=np.float64) - np.asarray(g_prev, dtype=np.float64)
    ss = float(s @ s)
    if ss == 0.0:
        raise CurvatureError("zero displacement between iterates")
    return float(s @ y) / ss


def bb_stepsize(nu: float, var_est: float, K: int, grad_norm2: float,
                n: int | None = None) -> float:
    """Noise-corrected BB stepsize ``(1 - V / (K ||G||^2)) / nu``.

    ``n=None`` means an unbounded data stream. With ``K >= n`` the gradient
    is exact and the plain ``1 / nu`` is returned.
    """
    if not nu > 0:
        raise CurvatureError(f"curvature must be positive, got {nu}")
    if n is not None and K >= n:
        return 1.0 / nu
    if K < 2:
        raise ValueError(f"batch size must be at least 2, got {K}")
    if not grad_norm2 > 0:
        raise ValueError("batch gradient norm must be positive")
    return (1.0 - var_est / (K * grad_norm2)) / nu


def smooth_stepsize(alpha_prev: float, alpha_tilde: float, K: int, n: int) -> float:
    w = K / n
    return (1.0 - w) * alpha_prev + w * alpha_tilde


def _grown_batch(problem: Problem, state: OptimizerState, policy: GrowthPolicy,
                 rng: np.random.Generator) -> tuple[BatchState, int]:
    K = min(state.K, problem.n)
    batch = make_batch_state(problem, state.x, draw_batch(rng, problem.n, K))
    batch, grown = grow_until_condition(problem, state.x, batch, policy, rng)
    return batch, K + grown


def _batch_loss_fn(problem: Problem, batch: BatchState):
    return lambda y: batch_value(problem, y, batch.indices)


def _info(state, batch, alpha, evals, g, x_before, n, audit):
    return StepInfo(
        K=batch.K,
        alpha=alpha,
        grad_evals=evals,
        x_before=x_before,
        direction=g,
        batch=batch.indices if audit else None,
        batch_var=batch.var_est,
        exact=batch.K == n,
    )


# -- step functions --------------------------------------------------------


def step_bbs_fixed(problem: Problem, state: OptimizerState, policy: GrowthPolicy,
                   alpha: float, rng: np.random.Generator, *, audit: bool = False):
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    batch, evals = _grown_batch(problem, state, policy, rng)
    g = batch.mean_grad
    x = state.x - alpha * g
    _check_finite(x, float(batch.per_sample_values.mean()))
    grad_evals = state.grad_evals + evals
    info = _info(state, batch, alpha, grad_evals, g, state.x, problem.n, audit)
    new = replace(state, x=x, alpha=alpha, K=batch.K, t=state.t + 1,
                  grew_flag=batch.K > state.K, grad_evals=grad_evals)
    return new, [info]


def step_bbs_armijo(problem: Problem, state: OptimizerState, policy: GrowthPolicy,
                    cfg: ArmijoConfig, rng: np.random.Generator, *, audit: bool = False):
    batch, evals = _grown_batch(problem, state, policy, rng)
    grew = batch.K > min(state.K, problem.n)
    alpha = 2.0 * state.alpha if grew else state.alpha
    g = batch.mean_grad
    loss_at = _batch_loss_fn(problem, batch)
    f0 = loss_at(state.x)
    _check_finite(state.x, f0)
    alpha = armijo_search(loss_at, state.x, g, alpha, cfg, f0=f0)
    x = state.x - alpha * g
    _check_finite(x)
    grad_evals = state.grad_evals + evals
    info = _info(state, batch, alpha, grad_evals, g, state.x, problem.n, audit)
    # the flag is consumed by the doubling above, so it is stored reset
    new = replace(state, x=x, alpha=alpha, K=batch.K, t=state.t + 1,
                  grew_flag=False, grad_evals=grad_evals)
    return new, [info]


def step_bbs_bb(problem: Problem, state: OptimizerState, policy: GrowthPolicy,
                cfg: ArmijoConfig, rng: np.random.Generator, *, audit: bool = False):
    """One batch draw, two safeguarded updates.

    The first update uses the current stepsize. The batch gradient is then
    re-evaluated at the new iterate, giving a same-batch secant curvature,
    a noise-corrected BB stepsize, and a smoothed stepsize for the second
    update. Without a usable curvature the current stepsize is kept.
    """
    n = problem.n
    batch, evals = _grown_batch(problem, state, policy, rng)
    K = batch.K
    g0 = batch.mean_grad
    loss_at = _batch_loss_fn(problem, batch)

    x0 = state.x
    f0 = loss_at(x0)
    _check_finite(x0, f0)
    alpha = armijo_search(loss_at, x0, g0, state.alpha, cfg, f0=f0)
    x1 = x0 - alpha * g0
    _check_finite(x1)
    grad_evals = state.grad_evals + evals
    first = _info(state, batch, alpha, grad_evals, g0, x0, n, audit)

    f1, g1 = batch_loss(problem, x1, batch.indices)
    grad_evals += K
    nu = float("nan")
    try:
        nu = bb_curvature(x1, x0, g1, g0)
        alpha_tilde = bb_stepsize(nu, batch.var_est, K, batch.grad_norm2, n)
        alpha2 = smooth_stepsize(alpha, alpha_tilde, K, n)
    except ValueError:
        alpha2 = alpha
    if not alpha2 > 0:
        alpha2 = alpha
    alpha2 = armijo_search(loss_at, x1, g1, alpha2, cfg, f0=f1)
    x2 = x1 - alpha2 * g1
    _check_finite(x2)
    second = replace(_info(state, batch, alpha2, grad_evals, g1, x1, n, audit), curvature=nu)

    new = replace(state, x=x2, alpha=alpha2, K=K, t=state.t + 2, grew_flag=False,
                  prev_x=x1, prev_batch_grad=g1, grad_evals=grad_evals)
    return new, [first, second]


def step_gd(problem: Problem, state: OptimizerState, alpha: float, *, audit: bool = False):
    f, g = full_loss(problem, state.x)
    _check_finite(state.x, f)
    x = state.x - alpha * g
    _check_finite(x)
    grad_evals = state.grad_evals + problem.n
    info = StepInfo(problem.n, alpha, grad_evals, state.x, g,
                    np.arange(problem.n) if audit else None, exact=True)
    return replace(state, x=x, K=problem.n, t=state.t + 1, grad_evals=grad_evals), [info]


def step_sgd_decay(problem: Problem, state: OptimizerState, schedule: DecaySchedule,
                   batch_size: int, rng: np.random.Generator, *, audit: bool = False):
    idx = np.sort(rng.integers(0, problem.n, size=batch_size))
    f, g = batch_loss(problem, state.x, idx)
    _check_finite(state.x, f)
    alpha = schedule(state.t)
    x = state.x - alpha * g
    _check_finite(x)
    grad_evals = state.grad_evals + batch_size
    info = StepInfo(batch_size, alpha, grad_evals, state.x, g, idx if audit else None)
    return replace(state, x=x, alpha=alpha, K=batch_size, t=state.t + 1,
                   grad_evals=grad_evals), [info]


def step_sf(problem: Problem, state: OptimizerState, policy: SfPolicy, alpha: float,
            rng: np.random.Generator, *, audit: bool = False):
    K = min(state.K, problem.n)
    idx = np.sort(draw_batch(rng, problem.n, K))
    f, g = batch_loss(problem, state.x, idx)
    _check_finite(state.x, f)
    x = state.x - alpha * g
    _check_finite(x)
    grad_evals = state.grad_evals + K
    info = StepInfo(K, alpha, grad_evals, state.x, g, idx if audit else None,
                    exact=K == problem.n)
    return replace(state, x=x, K=policy.next_size(K, problem.n), t=state.t + 1,
                   grad_evals=grad_evals), [info]


# -- driver ----------------------------------------------------------------


def initial_state(method: str, problem: Problem, config: OptimizerConfig) -> OptimizerState:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    x0 = np.zeros(problem.d) if config.x0 is None else np.array(config.x0, dtype=np.float64)
    if x0.shape != (problem.d,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({problem.d},)")
    n = problem.n
    K = {
        "gd": n,
        "sgd-decay": config.sgd_batch,
        "sf": min(config.k0, n),
    }.get(method, min(config.k0, n))
    alpha = config.decay(0) if method == "sgd-decay" else config.alpha
    return OptimizerState(x=x0, alpha=alpha, K=K)


def make_stepper(method: str, problem: Problem, config: OptimizerConfig,
                 rng: np.random.Generator):
    """Return ``state -> (state, [StepInfo])`` for ``method``."""
    audit = config.audit
    if method == "gd":
        return lambda s: step_gd(problem, s, config.alpha, audit=audit)
    if method == "sgd-decay":
        schedule = config.decay
        return lambda s: step_sgd_decay(problem, s, schedule, config.sgd_batch, rng,
                                        audit=audit)
    if method == "sf":
        policy = config.sf_policy
        return lambda s: step_sf(problem, s, policy, config.alpha, rng, audit=audit)
    growth = config.growth
    if method == "bbs-fixed":
        return lambda s: step_bbs_fixed(problem, s, growth, config.alpha, rng, audit=audit)
    if method == "bbs-armijo":
        return lambda s: step_bbs_armijo(problem, s, growth, config.armijo, rng,
                                         audit=audit)
    if method == "bbs-bb":
        return lambda s: step_bbs_bb(problem, s, growth, config.armijo, rng, audit=audit)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def iter_run(method: str, problem: Problem, config: OptimizerConfig = OptimizerConfig(),
             epochs: float = 10.0, seed: int = 0) -> Iterator[TraceRecord]:
    """Yield the initial record, then one record per parameter update.

    The run stops once ``epochs * n`` per-sample gradients have been spent,
    or when the batch covers the dataset and its gradient norm is at most
    ``config.tol``. Full-objective diagnostics are not counted as gradient
    evaluations. With ``diag_every > 1`` only every ``diag_every``-th update
    (and the last one) is recorded.
    """
    if epochs < 0:
        raise ValueError(f"epochs must be nonnegative, got {epochs}")
    rng = np.random.default_rng(seed)
    state = initial_state(method, problem, config)
    step = make_stepper(method, problem, config, rng)
    n = problem.n
    budget = epochs * n
    start = time.perf_counter()

    def record(t, info, x):
        f, g = full_loss(problem, x)
        return TraceRecord(
            method=method,
            seed=seed,
            t=t,
            epoch=(info.grad_evals if info else 0) / n,
            K=info.K if info else state.K,
            alpha=info.alpha if info else state.alpha,
            loss_full=f,
            grad_norm_full=float(np.linalg.norm(g)),
            elapsed_ms=(time.perf_counter() - start) * 1e3,
            grad_evals=info.grad_evals if info else 0,
            x=x.copy() if config.audit else None,
            step=info,
        )

    yield record(0, None, state.x)
    t = 0
    stop_on_exact = method != "sgd-decay"
    while state.grad_evals < budget:
        new_state, infos = step(state)
        done = False
        after = [info.x_before for info in infos[1:]] + [new_state.x]
        for info, x_after in zip(infos, after):
            t += 1
            if stop_on_exact and info.exact and \
                    float(np.linalg.norm(info.direction)) <= config.tol:
                done = True
            last = info is infos[-1] and new_state.grad_evals >= budget
            if done or last or t % config.diag_every == 0:
                yield record(t, info, x_after)
            if done:
                return
        state = new_state
