"""Final gradient norm of bbs-armijo and bbs-bb on desk logistic data across c and theta.

At the default c = 0.1 the Armijo variant can lose to a tuned decaying-step
SGD; this sweep shows how the outcome moves with the line-search constant
and the growth threshold.
"""

import argparse

import numpy as np

from bigbatch import run
from bigbatch.optimizers import OptimizerConfig
from bigbatch.problems import Problem, make_classification, normalize_features


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--scale", type=float, default=3.0, help="signal strength of the labels")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--epochs", type=float, default=10)
    args = p.parse_args(argv)

    prob = Problem("logistic", normalize_features(
        make_classification(args.n, args.d, seed=0, scale=args.scale)))
    settings = [dict(), dict(c=0.25), dict(c=0.5), dict(theta=0.7), dict(theta=0.5)]
    print(f"{'method':<11} {'setting':<12} {'median':>10} {'max':>10}")
    for method in ("bbs-armijo", "bbs-bb"):
        for kw in settings:
            final = [run(method, prob, OptimizerConfig(**kw), epochs=args.epochs,
                         seed=s)[-1].grad_norm_full for s in range(args.seeds)]
            label = ",".join(f"{k}={v}" for k, v in kw.items()) or "default"
            print(f"{method:<11} {label:<12} {np.median(final):>10.3e} {np.max(final):>10.3e}")


if __name__ == "__main__":
    main()
