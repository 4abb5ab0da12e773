"""Big batch SGD: stochastic gradient methods that grow the batch to keep the
gradient signal-to-noise ratio fixed."""

from .batching import (BatchState, GrowthPolicy, draw_batch, estimate_variance,
                       extend_batch, grow_until_condition, make_batch_state)
from .optimizers import (METHODS, ArmijoConfig, OptimizerConfig, TraceRecord,
                         armijo_search, bb_curvature, bb_stepsize, iter_run,
                         smooth_stepsize)
from .problems import (Dataset, Problem, batch_loss, full_loss, generate_quadratic,
                       load_dataset, normalize_features, sample_loss)


def run(method, problem, config=None, epochs=10.0, seed=0):
    """Run ``method`` on ``problem`` and return the list of trace records."""
    return list(iter_run(method, problem, config or OptimizerConfig(), epochs, seed))


__all__ = [
    "ArmijoConfig", "BatchState", "Dataset", "GrowthPolicy", "METHODS", "OptimizerConfig",
    "Problem", "TraceRecord", "armijo_search", "batch_loss", "bb_curvature", "bb_stepsize",
    "draw_batch", "estimate_variance", "extend_batch", "full_loss", "generate_quadratic",
    "grow_until_condition", "iter_run", "load_dataset", "make_batch_state",
    "normalize_features", "run", "sample_loss", "smooth_stepsize",
]
