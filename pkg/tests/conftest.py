import numpy as np
import pytest

from bigbatch.problems import (Dataset, Problem, generate_quadratic, make_classification,
                               make_regression, normalize_features)


def central_difference(fun, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        out[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return out


@pytest.fixture
def logistic_problem():
    return Problem("logistic", normalize_features(make_classification(300, 5, seed=1)))


@pytest.fixture
def lsq_problem():
    return Problem("least-squares", normalize_features(make_regression(300, 5, seed=2)))


@pytest.fixture
def quad_problem():
    return generate_quadratic(d=4, n=200, nu=1.5, sigma=0.3, x_star=np.arange(4.0), seed=3)


@pytest.fixture(params=["logistic", "least-squares", "quadratic", "ridge-logistic"])
def any_problem(request):
    if request.param == "logistic":
        return Problem("logistic", normalize_features(make_classification(200, 6, seed=4)))
    if request.param == "ridge-logistic":
        return Problem("logistic", normalize_features(make_classification(200, 6, seed=5)),
                       lam=0.05)
    if request.param == "least-squares":
        return Problem("least-squares", normalize_features(make_regression(200, 6, seed=6)),
                       lam=0.01)
    return generate_quadratic(d=6, n=200, nu=2.0, sigma=0.5, x_star=np.ones(6), seed=7)


@pytest.fixture
def hand_dataset():
    features = np.array([[1.0, 2.0], [-0.5, 0.3], [2.0, -1.0], [0.0, 1.5]])
    labels = np.array([1.0, -1.0, -1.0, 1.0])
    return Dataset(features, labels)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
