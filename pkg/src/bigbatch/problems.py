"""Finite-sum objectives, their per-sample gradients, and dataset ingestion.

Three problem kinds are supported:

* ``logistic``: f(x; a, b) = log(1 + exp(-b a^T x)) + lam ||x||^2
* ``least-squares``: f(x; a, b) = (a^T x - b)^2 + lam ||x||^2
* ``quadratic``: f(x; phi) = (nu / 2) ||x - phi||^2 with phi ~ N(x_star, sigma^2 I)

Per-sample work is vectorised over the rows of a batch. Batches are always
evaluated in ascending index order so that a batch covering the whole
dataset reproduces :func:`full_loss` bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

KINDS = ("logistic", "least-squares", "quadratic")
FORMATS = ("svm-sparse", "dense-csv")


class DatasetFormatError(ValueError):
    """Raised when a data file cannot be parsed."""


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.float64).reshape(-1)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {features.shape}")
        if features.shape[0] != labels.shape[0]:
            raise ValueError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if features.shape[0] < 1 or features.shape[1] < 1:
            raise ValueError("dataset needs at least one sample and one feature")
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(labels))):
            raise ValueError("dataset contains non-finite entries")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class Problem:
    """A finite-sum objective over a dataset.

    For ``quadratic`` problems the feature rows hold the draws ``phi_i`` and
    the labels are ignored.
    """

    kind: str
    dataset: Dataset
    lam: float = 0.0
    nu: float = 1.0
    sigma: float = 0.0
    x_star: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}; expected one of {KINDS}")
        if not self.lam >= 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.kind == "quadratic":
            if not self.nu > 0:
                raise ValueError(f"nu must be positive, got {self.nu}")
            if not self.sigma >= 0:
                raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.kind == "logistic":
            bad = ~np.isin(self.dataset.labels, (-1.0, 1.0))
            if bad.any():
                raise ValueError(
                    f"logistic labels must be -1/+1, found {self.dataset.labels[bad][0]}"
                )
        if self.x_star is not None:
            object.__setattr__(self, "x_star", np.asarray(self.x_star, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def d(self) -> int:
        return self.dataset.d


class GradSample(NamedTuple):
    value: float
    gradient: np.ndarray


def _check_iterate(problem: Problem, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (problem.d,):
        raise ValueError(f"iterate has shape {x.shape}, expected ({problem.d},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("iterate contains non-finite entries")
    return x


def _check_indices(problem: Problem, indices) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.intp).reshape(-1)
    if idx.size == 0:
        raise ValueError("empty index list")
    if idx.min() < 0 or idx.max() >= problem.n:
        raise IndexError(f"sample index out of range [0, {problem.n})")
    return idx


def _sigmoid_neg(z: np.ndarray) -> np.ndarray:
    # 1 / (1 + exp(z)) without overflow
    return np.exp(-np.logaddexp(0.0, z))


def per_sample(problem: Problem, x, indices, *, with_grad: bool = True):
    """Evaluate f(x; z_i) (and gradients) for every index, in the given order.

    Returns ``(values, grads)`` with shapes ``(K,)`` and ``(K, d)``;
    ``grads`` is None when ``with_grad`` is False.
    """
    x = _check_iterate(problem, x)
    idx = _check_indices(problem, indices)
    A = problem.dataset.features[idx]
    if problem.kind == "quadratic":
        diff = x - A
        values = 0.5 * problem.nu * np.einsum("ij,ij->i", diff, diff)
        grads = problem.nu * diff if with_grad else None
        return values, grads

    b = problem.dataset.labels[idx]
    margin = A @ x
    reg = problem.lam * float(x @ x)
    if problem.kind == "logistic":
        z = b * margin
        values = np.logaddexp(0.0, -z) + reg
        if with_grad:
            grads = (-b * _sigmoid_neg(z))[:, None] * A
    else:
        r = margin - b
        values = r * r + reg
        if with_grad:
            grads = (2.0 * r)[:, None] * A
    if not with_grad:
        return values, None
    if problem.lam:
        grads = grads + 2.0 * problem.lam * x
    return values, grads


def sample_loss(problem: Problem, x, i: int) -> GradSample:
    if not 0 <= i < problem.n:
        raise IndexError(f"sample index {i} out of range [0, {problem.n})")
    values, grads = per_sample(problem, x, [i])
    return GradSample(float(values[0]), grads[0])


def batch_loss(problem: Problem, x, indices: Sequence[int]) -> GradSample:
    """Mean loss and gradient over ``indices`` (summed in ascending index order)."""
    idx = np.sort(_check_indices(problem, indices))
    values, grads = per_sample(problem, x, idx)
    return GradSample(float(values.mean()), grads.mean(axis=0))


def batch_value(problem: Problem, x, indices: Sequence[int]) -> float:
    """Mean loss over ``indices`` without computing gradients."""
    idx = np.sort(_check_indices(problem, indices))
    values, _ = per_sample(problem, x, idx, with_grad=False)
    return float(values.mean())


def full_loss(problem: Problem, x) -> GradSample:
    return batch_loss(problem, x, np.arange(problem.n))


# -- data handling ---------------------------------------------------------


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Map 0/1 labels to -1/+1; -1/+1 labels pass through."""
    labels = np.asarray(labels, dtype=np.float64)
    values = set(np.unique(labels).tolist())
    if values <= {-1.0, 1.0}:
        return labels.copy()
    if values <= {0.0, 1.0}:
        return np.where(labels > 0, 1.0, -1.0)
    bad = sorted(values - {-1.0, 0.0, 1.0})
    raise DatasetFormatError(f"label value {bad[0] if bad else 0} not usable for logistic regression")


def _parse_svm(lines, d):
    rows, labels = [], []
    max_idx = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
            entries = {}
            for tok in tokens[1:]:
                key, val = tok.split(":")
                j = int(key)
                if j < 1:
                    raise ValueError(f"feature index {j} is not 1-based")
                entries[j] = float(val)
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: malformed sample ({exc})") from None
        if entries:
            max_idx = max(max_idx, max(entries))
        if d is not None and entries and max(entries) > d:
            raise DatasetFormatError(
                f"line {lineno}: feature index {max(entries)} exceeds dimension {d}"
            )
        rows.append(entries)
        labels.append(label)
    if not rows:
        raise DatasetFormatError("no samples")
    d = d if d is not None else max(max_idx, 1)
    features = np.zeros((len(rows), d))
    for r, entries in enumerate(rows):
        for j, val in entries.items():
            features[r, j - 1] = val
    return features, np.array(labels)


def _parse_csv(lines, d):
    rows = []
    width = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            row = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: malformed sample ({exc})") from None
        if len(row) < 2:
            raise DatasetFormatError(f"line {lineno}: need at least one feature and a label")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DatasetFormatError(
                f"line {lineno}: {len(row) - 1} features, expected {width - 1}"
            )
        rows.append(row)
    if not rows:
        raise DatasetFormatError("no samples")
    data = np.array(rows)
    if d is not None and data.shape[1] - 1 != d:
        raise DatasetFormatError(f"file has {data.shape[1] - 1} features, expected {d}")
    return data[:, :-1], data[:, -1]


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower()
    return "dense-csv" if suffix in (".csv", ".txt") else "svm-sparse"


def load_dataset(path, format: str | None = None, *, d: int | None = None,
                 task: str | None = None) -> Dataset:
    """Read a dataset file.

    ``svm-sparse`` lines look like ``<label> <idx>:<val> ...`` with 1-based
    indices; ``dense-csv`` rows are header-free with the label last. When
    ``task`` is ``"logistic"`` the labels are canonicalised to -1/+1.
    """
    fmt = format or infer_format(path)
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    with open(path) as fh:
        lines = fh.readlines()
    parse = _parse_svm if fmt == "svm-sparse" else _parse_csv
    features, labels = parse(lines, d)
    if task == "logistic":
        labels = canonical_labels(labels)
    return Dataset(features, labels)


def dump_dataset(dataset: Dataset, path, format: str = "dense-csv") -> None:
    """Write ``dataset`` so that :func:`load_dataset` reads it back losslessly."""
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}")
    fmt = lambda v: repr(float(v))  # noqa: E731  shortest round-trip repr
    with open(path, "w") as fh:
        for row, label in zip(dataset.features, dataset.labels):
            if format == "dense-csv":
                fh.write(",".join([*map(fmt, row), fmt(label)]) + "\n")
            else:
                items = [f"{j + 1}:{fmt(v)}" for j, v in enumerate(row) if v != 0.0]
                fh.write(" ".join([fmt(label), *items]) + "\n")


def normalize_features(dataset: Dataset) -> Dataset:
    """Z-score every column using the population standard deviation.

    Constant columns become all zeros.
    """
    if dataset.n < 2:
        raise ValueError("normalization needs at least two samples")
    X = dataset.features
    mean = X.mean(axis=0)
    centered = X - mean
    std = np.sqrt((centered * centered).mean(axis=0))
    scale = np.where(std > 0, std, 1.0)
    out = centered / scale
    out[:, std == 0] = 0.0
    # one correction pass removes the rounding residue left in the column mean
    out -= out.mean(axis=0)
    return Dataset(out, dataset.labels.copy())


def generate_quadratic(d: int, n: int, nu: float, sigma: float, x_star=None,
                       seed: int = 0) -> Problem:
    """Draw ``n`` samples ``phi_i = x_star + sigma * xi_i`` for the quadratic model."""
    if d < 1 or n < 1:
        raise ValueError("d and n must be positive")
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    if not sigma >= 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if x_star is None:
        x_star = np.zeros(d)
    x_star = np.broadcast_to(np.asarray(x_star, dtype=np.float64), (d,)).copy()
    rng = np.random.default_rng(seed)
    phi = x_star + sigma * rng.standard_normal((n, d))
    return Problem("quadratic", Dataset(phi, np.zeros(n)), nu=nu, sigma=sigma,
                   x_star=x_star)


def make_classification(n: int, d: int, seed: int = 0, scale: float = 1.0) -> Dataset:
    """Synthetic binary data with labels drawn from a logistic model.

    Labels are random rather than separable, so the regularisation-free
    logistic loss has a finite minimiser.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    w = scale * rng.standard_normal(d) / math.sqrt(d)
    p = 1.0 / (1.0 + np.exp(-(A @ w)))
    b = np.where(rng.random(n) < p, 1.0, -1.0)
    return Dataset(A, b)


def make_regression(n: int, d: int, seed: int = 0, noise: float = 0.5) -> Dataset:
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    w = rng.standard_normal(d)
    return Dataset(A, A @ w + noise * rng.standard_normal(n))
