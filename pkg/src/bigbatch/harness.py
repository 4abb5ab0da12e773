"""Command line front end, run configuration, and CSV trace output.

Subcommands::

    bigbatch run --method bbs-armijo --problem logistic --data d.svm --epochs 10
    bigbatch compare --methods bbs-armijo,bbs-bb,sgd-decay --seeds 0,1,2 ...
    bigbatch gen-quadratic --d 10 --n 1000 --sigma 0.1 --output q.csv

A config file (``--config``) holds flat ``key = value`` lines whose keys
are the long flag names with dashes replaced by underscores. Flags given on
the command line override the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from statistics import median
from typing import Iterable, Sequence

import numpy as np

from . import problems as P
from .optimizers import (
    METHODS,
    DivergenceError,
    LineSearchError,
    OptimizerConfig,
    TraceRecord,
    iter_run,
)

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ("method", "seed", "t", "epoch", "K", "alpha", "loss_full",
               "grad_norm_full", "elapsed_ms")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_LINESEARCH = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    method: str = "bbs-armijo"
    problem: str = "logistic"
    data: str | None = None
    format: str | None = None
    normalize: bool = True
    # synthetic data when no file is given
    n: int = 1000
    d: int = 10
    nu: float = 1.0
    sigma: float = 0.1
    x_star: float = 1.0
    data_seed: int = 0
    lam: float = 0.0
    epochs: float = 10.0
    seed: int = 0
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
    output: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown method {self.method!r}; choose from {METHODS}")
        if self.problem not in P.KINDS:
            raise ConfigError(f"problem: unknown kind {self.problem!r}; choose from {P.KINDS}")
        if self.format is not None and self.format not in P.FORMATS:
            raise ConfigError(f"format: unknown format {self.format!r}")
        checks = {
            "n": self.n >= 2, "d": self.d >= 1, "nu": self.nu > 0, "sigma": self.sigma >= 0,
            "lam": self.lam >= 0, "epochs": self.epochs >= 0,
            "alpha": self.alpha > 0, "a": self.a > 0, "b": self.b > 0,
            "c": 0 < self.c <= 0.5, "max_halvings": self.max_halvings >= 1,
            "k0": self.k0 >= 2, "increment_fraction": 0 < self.increment_fraction <= 1,
            "theta": 0 < self.theta <= 1, "sf_growth": self.sf_growth > 1,
            "sgd_batch": self.sgd_batch >= 1, "tol": self.tol >= 0,
            "diag_every": self.diag_every >= 1,
        }
        for name, ok in checks.items():
            if not ok:
                raise ConfigError(f"{name}: value {getattr(self, name)!r} out of range")

    def optimizer_config(self, audit: bool = False) -> OptimizerConfig:
        return OptimizerConfig(
            alpha=self.alpha, a=self.a, b=self.b, c=self.c, max_halvings=self.max_halvings,
            k0=self.k0, increment_fraction=self.increment_fraction, theta=self.theta,
            sf_growth=self.sf_growth, sgd_batch=self.sgd_batch, tol=self.tol,
            diag_every=self.diag_every, audit=audit,
        )

    def problem_key(self) -> tuple:
        keys = ("problem", "data", "format", "normalize", "lam", "epochs")
        if self.data is None:
            keys += ("n", "d", "nu", "sigma", "x_star", "data_seed")
        return tuple(getattr(self, k) for k in keys)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw):
    kind = _FIELD_TYPES[name]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    if kind.startswith("str | None") and text.lower() in ("", "none"):
        return None
    return text


def read_config_file(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, value)
    return values


def _add_problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--problem", choices=P.KINDS)
    p.add_argument("--data", help="dataset path; synthetic data when omitted")
    p.add_argument("--format", choices=P.FORMATS)
    p.add_argument("--normalize", type=lambda s: _coerce("normalize", s))
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--nu", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--x-star", type=float)
    p.add_argument("--data-seed", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--epochs", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--max-halvings", type=int)
    p.add_argument("--k0", type=int)
    p.add_argument("--increment-fraction", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--sf-growth", type=float)
    p.add_argument("--sgd-batch", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--diag-every", type=int)
    p.add_argument("--output", help="CSV path (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bigbatch", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", argument_default=argparse.SUPPRESS,
                         help="run one method and write its trace CSV")
    run.add_argument("--method", choices=METHODS)
    run.add_argument("--seed", type=int)
    _add_problem_flags(run)

    cmp_ = sub.add_parser("compare", argument_default=argparse.SUPPRESS,
                          help="run several methods and seeds, tabulate final diagnostics")
    cmp_.add_argument("--methods", required=True, help="comma-separated method names")
    cmp_.add_argument("--seeds", default="0", help="comma-separated seeds")
    cmp_.add_argument("--alpha-grid", help="stepsizes tried for gd, sf, bbs-fixed")
    cmp_.add_argument("--a-grid", help="values of a tried for sgd-decay")
    cmp_.add_argument("--b-grid", help="values of b tried for sgd-decay")
    cmp_.add_argument("--trace-dir", help="write one trace CSV per run here")
    cmp_.add_argument("--workers", type=int, default=1)
    _add_problem_flags(cmp_)

    gen = sub.add_parser("gen-quadratic", help="write synthetic quadratic data as dense CSV")
    gen.add_argument("--d", type=int, default=10)
    gen.add_argument("--n", type=int, default=1000)
    gen.add_argument("--nu", type=float, default=1.0)
    gen.add_argument("--sigma", type=float, default=0.1)
    gen.add_argument("--x-star", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--output", required=True)
    return parser


_CMD_ONLY = {"command", "config", "methods", "seeds", "alpha_grid", "a_grid", "b_grid",
             "trace_dir", "workers"}


def parse_config(args: Sequence[str] | argparse.Namespace, config_file=None) -> RunConfig:
    """Merge defaults, an optional config file, and CLI flags (highest precedence)."""
    ns = build_parser().parse_args(args) if not isinstance(args, argparse.Namespace) else args
    given = vars(ns)
    values = {}
    path = config_file or given.get("config")
    if path:
        values.update(read_config_file(path))
    values.update({k: v for k, v in given.items() if k not in _CMD_ONLY})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def build_problem(cfg: RunConfig) -> P.Problem:
    if cfg.data is None:
        if cfg.problem == "quadratic":
            return P.generate_quadratic(cfg.d, cfg.n, cfg.nu, cfg.sigma, cfg.x_star,
                                        seed=cfg.data_seed)
        make = P.make_classification if cfg.problem == "logistic" else P.make_regression
        ds = make(cfg.n, cfg.d, seed=cfg.data_seed)
    else:
        ds = P.load_dataset(cfg.data, cfg.format,
                            task="logistic" if cfg.problem == "logistic" else None)
    if cfg.problem == "quadratic":
        return P.Problem("quadratic", ds, nu=cfg.nu, sigma=cfg.sigma)
    if cfg.normalize:
        ds = P.normalize_features(ds)
    return P.Problem(cfg.problem, ds, lam=cfg.lam)


# -- CSV -------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def record_row(rec: TraceRecord) -> list[str]:
    return [_fmt(getattr(rec, col)) for col in CSV_COLUMNS]


def write_trace(records: Iterable[TraceRecord], fh, error: BaseException | None = None):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow(record_row(rec))
    if error is not None:
        fh.write(f"# error: {type(error).__name__}: {error}\n")


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected trace header {header}")
    rows = []
    for row in reader:
        rec = dict(zip(header, row))
        for key in ("seed", "t", "K"):
            rec[key] = int(rec[key])
        for key in ("epoch", "alpha", "loss_full", "grad_norm_full", "elapsed_ms"):
            rec[key] = float(rec[key])
        rows.append(rec)
    return rows


def exit_code_for(error: BaseException | None) -> int:
    if error is None:
        return EXIT_OK
    if isinstance(error, LineSearchError):
        return EXIT_LINESEARCH
    if isinstance(error, DivergenceError):
        return EXIT_DIVERGENCE
    return EXIT_CONFIG


def run_experiment(cfg: RunConfig, problem: P.Problem | None = None, out=None,
                   audit: bool = False) -> tuple[list[TraceRecord], BaseException | None]:
    """Run ``cfg`` and write its CSV to ``out`` (a file object) or ``cfg.output``.

    Run-time failures are not raised: the partial trace is returned with the
    exception and the CSV ends with an ``# error:`` comment line.
    """
    problem = build_problem(cfg) if problem is None else problem
    records: list[TraceRecord] = []
    error = None
    try:
        for rec in iter_run(cfg.method, problem, cfg.optimizer_config(audit), cfg.epochs,
                            cfg.seed):
            records.append(rec)
    except (DivergenceError, LineSearchError) as exc:
        error = exc
    if out is not None:
        write_trace(records, out, error)
    elif cfg.output is not None:
        with open(cfg.output, "w") as fh:
            write_trace(records, fh, error)
    return records, error


# -- comparisons -----------------------------------------------------------


def log_grad_auc(records: Sequence[TraceRecord]) -> float:
    """Trapezoid area under log10(grad norm) against epochs."""
    if len(records) < 2:
        return 0.0
    x = np.array([r.epoch for r in records])
    y = np.log10(np.maximum([r.grad_norm_full for r in records], 1e-300))
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


@dataclass
class Summary:
    method: str
    seed: int
    params: str
    epochs: float
    loss_full: float
    grad_norm_full: float
    auc_log_grad: float
    status: str = "ok"


SUMMARY_COLUMNS = tuple(f.name for f in fields(Summary))


def _params_label(cfg: RunConfig) -> str:
    if cfg.method == "sgd-decay":
        return f"a={cfg.a:g};b={cfg.b:g}"
    if cfg.method in ("gd", "sf", "bbs-fixed"):
        return f"alpha={cfg.alpha:g}"
    return f"alpha0={cfg.alpha:g}"


def _summarise(cfg: RunConfig, records, error) -> Summary:
    last = records[-1]
    return Summary(cfg.method, cfg.seed, _params_label(cfg), last.epoch, last.loss_full,
                   last.grad_norm_full, log_grad_auc(records),
                   "ok" if error is None else type(error).__name__)


def _run_one(cfg: RunConfig, trace_dir: str | None):
    out = None
    if trace_dir is not None:
        name = f"{cfg.method}_{_params_label(cfg).replace(';', '_')}_seed{cfg.seed}.csv"
        out = str(Path(trace_dir) / name)
    records, error = run_experiment(replace(cfg, output=out))
    return _summarise(cfg, records, error)


def compare_methods(configs: Sequence[RunConfig], workers: int = 1,
                    trace_dir: str | None = None) -> list[Summary]:
    """Run each config and return one summary row per run, sorted by final gradient norm."""
    if not configs:
        return []
    key = configs[0].problem_key()
    for cfg in configs[1:]:
        if cfg.problem_key() != key:
            raise ConfigError("compare: configurations do not share problem and budget")
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, configs, [trace_dir] * len(configs)))
    else:
        rows = [_run_one(cfg, trace_dir) for cfg in configs]
    return sorted(rows, key=lambda r: (r.status != "ok", r.grad_norm_full, r.method, r.seed))


def best_per_method(rows: Sequence[Summary]) -> list[Summary]:
    """Keep, for each method, the parameter setting with the lowest median final gradient norm."""
    groups: dict[tuple[str, str], list[Summary]] = {}
    for r in rows:
        groups.setdefault((r.method, r.params), []).append(r)
    best: dict[str, tuple[float, str]] = {}
    for (method, params), rs in groups.items():
        score = median(r.grad_norm_full if r.status == "ok" else math.inf for r in rs)
        if method not in best or score < best[method][0]:
            best[method] = (score, params)
    keep = [r for r in rows if best[r.method][1] == r.params]
    return sorted(keep, key=lambda r: (r.status != "ok", r.grad_norm_full, r.method, r.seed))


def expand_grid(base: RunConfig, methods: Sequence[str], seeds: Sequence[int],
                alpha_grid=None, a_grid=None, b_grid=None) -> list[RunConfig]:
    configs = []
    for method in methods:
        if method == "sgd-decay":
            settings = [dict(a=a, b=b) for a in (a_grid or [base.a]) for b in (b_grid or [base.b])]
        elif method in ("gd", "sf", "bbs-fixed"):
            settings = [dict(alpha=al) for al in (alpha_grid or [base.alpha])]
        else:
            settings = [{}]
        for s in settings:
            for seed in seeds:
                configs.append(replace(base, method=method, seed=seed, **s))
    return configs


def format_table(rows: Sequence[Summary]) -> str:
    out = io.StringIO()
    out.write(f"{'method':<11} {'seed':>4} {'params':<18} {'epochs':>7} {'loss_full':>13} "
              f"{'grad_norm':>11} {'auc_log_g':>10} status\n")
    for r in rows:
        out.write(f"{r.method:<11} {r.seed:>4} {r.params:<18} {r.epochs:>7.3f} "
                  f"{r.loss_full:>13.6e} {r.grad_norm_full:>11.3e} {r.auc_log_grad:>10.3f} "
                  f"{r.status}\n")
    return out.getvalue()


def write_summary(rows: Sequence[Summary], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(v) for v in asdict(r).values()])


# -- rate fitting ----------------------------------------------------------


def fit_linear_rate(trace, window=None, f_star: float = 0.0) -> float:
    """Least-squares slope of ``log(loss_t - f_star)`` against ``t``.

    ``trace`` is a sequence of :class:`TraceRecord` or of raw loss values;
    ``window`` is an optional ``(start, stop)`` slice into it.
    """
    items = list(trace)
    if window is not None:
        items = items[slice(*window)]
    if items and isinstance(items[0], TraceRecord):
        t = np.array([r.t for r in items], dtype=float)
        loss = np.array([r.loss_full for r in items])
    else:
        loss = np.asarray(items, dtype=float)
        t = np.arange(len(loss), dtype=float)
    if len(loss) < 3:
        raise ValueError("need at least three records to fit a rate")
    gap = loss - f_star
    if np.any(gap <= 0):
        raise ValueError("nonpositive suboptimality in window")
    slope, _ = np.polyfit(t, np.log(gap), 1)
    return float(slope)


# -- entry point -----------------------------------------------------------


def _floats(text):
    return [float(v) for v in text.split(",")] if text else None


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.command == "gen-quadratic":
            prob = P.generate_quadratic(ns.d, ns.n, ns.nu, ns.sigma, ns.x_star, seed=ns.seed)
            P.dump_dataset(prob.dataset, ns.output, "dense-csv")
            return EXIT_OK
        cfg = parse_config(ns)
        problem = build_problem(cfg)
    except (ConfigError, P.DatasetFormatError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if ns.command == "run":
        if cfg.output is None:
            _, error = run_experiment(cfg, problem, out=sys.stdout)
        else:
            _, error = run_experiment(cfg, problem)
        if error is not None:
            print(f"run failed: {error}", file=sys.stderr)
        return exit_code_for(error)

    methods = [m.strip() for m in ns.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        print(f"config error: methods: unknown {bad}", file=sys.stderr)
        return EXIT_CONFIG
    seeds = [int(s) for s in ns.seeds.split(",")]
    configs = expand_grid(replace(cfg, output=None), methods, seeds,
                          _floats(getattr(ns, "alpha_grid", None)),
                          _floats(getattr(ns, "a_grid", None)),
                          _floats(getattr(ns, "b_grid", None)))
    rows = best_per_method(compare_methods(configs, ns.workers, getattr(ns, "trace_dir", None)))
    sys.stdout.write(format_table(rows))
    if cfg.output is not None:
        with open(cfg.output, "w") as fh:
            write_summary(rows, fh)
    return EXIT_OK if all(r.status == "ok" for r in rows) else EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
