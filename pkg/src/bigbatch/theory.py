"""Analytic rate constants, closed forms, and brute-force oracles.

Everything here is a pure function. The oracles (Hessian spectra, reference
minimisers, Monte Carlo gradient error) are kept independent of the
optimizer code paths they are used to check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import Problem, full_loss, per_sample


@dataclass(frozen=True)
class RateParams:
    mu: float
    L: float
    theta: float = 0.5
    Lz: float = 0.0
    c: float = 0.1

    def __post_init__(self):
        if not (self.L >= self.mu > 0):
            raise ValueError(f"need L >= mu > 0, got mu={self.mu}, L={self.L}")
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.Lz >= 0:
            raise ValueError(f"Lz must be nonnegative, got {self.Lz}")
        if not 0 < self.c <= 0.5:
            raise ValueError(f"c must lie in (0, 0.5], got {self.c}")

    @property
    def beta(self) -> float:
        return beta(self.theta)


@dataclass(frozen=True)
class QuadModel:
    """Isotropic quadratic with Gaussian data: f(x; phi) = nu/2 ||x - phi||^2."""

    nu: float
    sigma: float
    d: int
    K: int

    def __post_init__(self):
        if not self.nu > 0 or not self.sigma >= 0 or self.d < 1 or self.K < 1:
            raise ValueError(f"invalid quadratic model {self}")

    @property
    def grad_trace_var(self) -> float:
        """Trace variance of a single-sample gradient, d nu^2 sigma^2."""
        return self.d * self.nu**2 * self.sigma**2


def beta(theta: float) -> float:
    """Noise inflation factor ``(theta^2 + (1 - theta)^2) / (1 - theta)^2``."""
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    return (theta**2 + (1 - theta) ** 2) / (1 - theta) ** 2


def linear_rate_gamma(params: RateParams, alpha: float) -> float:
    b = params.beta
    if not 0 <= alpha < 2 / (params.L * b):
        raise ValueError(f"alpha must lie in [0, {2 / (params.L * b)}), got {alpha}")
    return 1 - 2 * params.mu * (alpha - params.L * alpha**2 * b / 2)


def optimal_alpha(params: RateParams) -> float:
    return 1 / (params.beta * params.L)


def armijo_rate_gamma(params: RateParams, alpha0: float) -> float:
    if not alpha0 > 0:
        raise ValueError(f"alpha0 must be positive, got {alpha0}")
    return 1 - 2 * params.c * params.mu * min(alpha0, 1 / (2 * params.beta * params.L))


def sublinear_bound(L: float, beta_: float, x0_dist2: float, t: int) -> float:
    """Suboptimality bound ``2 L beta ||x0 - x*||^2 / (t + 1)`` for convex objectives."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return 2 * L * beta_ * x0_dist2 / (t + 1)


def variance_bound(Lz: float, trace_var_z: float, K: int) -> float:
    """Uniform bound ``4 Lz^2 TrVar(z) / K`` on the batch gradient error."""
    if Lz < 0 or trace_var_z < 0 or K < 1:
        raise ValueError("need Lz >= 0, trace_var_z >= 0, K >= 1")
    return 4 * Lz**2 * trace_var_z / K


def descent_condition_holds(g_batch, g_true) -> bool:
    """Whether ``||g_B - g||^2 < ||g_B||^2``, which makes ``-g_B`` a descent direction."""
    g_batch = np.asarray(g_batch, dtype=np.float64)
    err = g_batch - np.asarray(g_true, dtype=np.float64)
    return bool(err @ err < g_batch @ g_batch)


def quad_expected_loss(model: QuadModel, alpha, dist2: float):
    """Expected loss after one batch step of size ``alpha`` on the quadratic model.

    ``nu/2 * ((1 - nu alpha)^2 dist2 + (1 + nu^2 alpha^2 / K) d sigma^2)``;
    vectorises over ``alpha``.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    nu, ds2 = model.nu, model.d * model.sigma**2
    out = 0.5 * nu * ((1 - nu * alpha) ** 2 * dist2 + (1 + nu**2 * alpha**2 / model.K) * ds2)
    return out if out.ndim else float(out)


def quad_optimal_alpha(model: QuadModel, dist2: float) -> float:
    """Analytic minimiser of :func:`quad_expected_loss` over ``alpha``."""
    noise = model.d * model.sigma**2 / model.K
    return dist2 / (model.nu * (dist2 + noise))


def bb_lower_bound(nu: float, theta: float) -> float:
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    if not 0 <= theta < 1:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")
    return (1 - theta**2) / nu


# -- oracles ---------------------------------------------------------------


def least_squares_hessian(problem: Problem) -> np.ndarray:
    A = problem.dataset.features
    return 2.0 / problem.n * (A.T @ A) + 2.0 * problem.lam * np.eye(problem.d)


def hessian_extremes(problem: Problem) -> tuple[float, float]:
    """``(mu, L)`` from an exact eigendecomposition.

    Least-squares and quadratic objectives have a constant Hessian. For
    logistic regression only an upper bound on ``L`` is available and
    ``mu`` is reported as 0.
    """
    if problem.kind == "quadratic":
        return problem.nu, problem.nu
    A = problem.dataset.features
    if problem.kind == "least-squares":
        eig = np.linalg.eigvalsh(least_squares_hessian(problem))
        return float(eig[0]), float(eig[-1])
    lmax = float(np.linalg.eigvalsh(A.T @ A)[-1])
    return 0.0, lmax / (4.0 * problem.n) + 2.0 * problem.lam


def reference_minimum(problem: Problem, x0=None, tol: float = 1e-12,
                      max_iter: int = 100_000) -> tuple[np.ndarray, float]:
    """Minimise the full objective with Armijo gradient descent.

    Stops at ``||grad|| <= tol`` or when the line search can no longer
    decrease the loss in floating point.
    """
    x = np.zeros(problem.d) if x0 is None else np.array(x0, dtype=np.float64)
    f, g = full_loss(problem, x)
    alpha = 1.0
    stalled = 0
    for _ in range(max_iter):
        gg = float(g @ g)
        if np.sqrt(gg) <= tol or stalled >= 20:
            break
        alpha *= 2.0
        while True:
            x_new = x - alpha * g
            f_new, g_new = full_loss(problem, x_new)
            if f_new <= f - 0.5 * alpha * gg:
                break
            alpha /= 2.0
            if alpha < 1e-30:
                return x, f
        # once the decrease is below one ulp of f the test passes vacuously
        stalled = stalled + 1 if f_new >= f else 0
        x, f, g = x_new, f_new, g_new
    return x, f


def batch_gradient_error(problem: Problem, x, K: int, n_batches: int,
                         rng: np.random.Generator, replace: bool = True) -> np.ndarray:
    """Monte Carlo samples of ``||grad l_B(x) - grad l(x)||^2`` for batches of size K."""
    x = np.asarray(x, dtype=np.float64)
    _, grads = per_sample(problem, x, np.arange(problem.n))
    true = grads.mean(axis=0)
    out = np.empty(n_batches)
    chunk = max(1, 200_000 // K)
    for start in range(0, n_batches, chunk):
        m = min(chunk, n_batches - start)
        if replace:
            idx = rng.integers(0, problem.n, size=(m, K))
        else:
            idx = np.stack([rng.choice(problem.n, K, replace=False) for _ in range(m)])
        err = grads[idx].mean(axis=1) - true
        out[start:start + m] = np.einsum("ij,ij->i", err, err)
    return out
