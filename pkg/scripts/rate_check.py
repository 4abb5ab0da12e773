"""Empirical linear rate of fixed-stepsize big batch SGD on strongly convex least squares.

Prints the seed-averaged suboptimality ratio per update until the batch
covers the dataset, next to the predicted contraction factor.
"""

import argparse
import math

import numpy as np

from bigbatch import run
from bigbatch.harness import fit_linear_rate
from bigbatch.optimizers import OptimizerConfig
from bigbatch.problems import Problem, make_regression, normalize_features
from bigbatch.theory import RateParams, hessian_extremes, linear_rate_gamma, reference_minimum


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--epochs", type=float, default=30)
    args = p.parse_args(argv)

    prob = Problem("least-squares", normalize_features(make_regression(args.n, args.d, seed=0)))
    mu, L = hessian_extremes(prob)
    params = RateParams(mu=mu, L=L, theta=args.theta)
    alpha = 1 / (params.beta * L)
    gamma = linear_rate_gamma(params, alpha)
    _, f_star = reference_minimum(prob, np.zeros(prob.d))
    print(f"mu={mu:.4f} L={L:.4f} beta={params.beta:.3f} alpha={alpha:.4f} gamma={gamma:.4f}")

    cfg = OptimizerConfig(alpha=alpha, theta=args.theta, tol=0.0)
    ratios, gaps = {}, []
    for seed in range(args.seeds):
        trace = run("bbs-fixed", prob, cfg, epochs=args.epochs, seed=seed)
        gap = [trace[0].loss_full - f_star]
        for prev, cur in zip(trace, trace[1:]):
            if cur.K == prob.n:
                break
            ratios.setdefault(prev.t, []).append((cur.loss_full - f_star) /
                                                 (prev.loss_full - f_star))
            gap.append(cur.loss_full - f_star)
        gaps.append(gap)

    print(f"{'t':>3} {'seeds':>5} {'mean ratio':>10}")
    for t in sorted(ratios):
        print(f"{t:>3} {len(ratios[t]):>5} {np.mean(ratios[t]):>10.4f}")
    shared = min(len(g) for g in gaps)
    if shared >= 3:
        slope = fit_linear_rate(np.mean([g[:shared] for g in gaps], axis=0))
        print(f"fitted contraction exp(slope) = {math.exp(slope):.4f} over {shared} records")


if __name__ == "__main__":
    main()
