import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bigbatch.problems import (Dataset, DatasetFormatError, Problem, batch_loss, batch_value,
                               dump_dataset, full_loss, generate_quadratic, load_dataset,
                               normalize_features, per_sample, sample_loss)

from conftest import central_difference


def test_logistic_at_origin():
    ds = Dataset(np.array([[0.3, -2.0], [1.0, 1.0]]), np.array([1.0, -1.0]))
    prob = Problem("logistic", ds)
    for i in range(2):
        value, grad = sample_loss(prob, np.zeros(2), i)
        assert value == pytest.approx(math.log(2), abs=1e-15)
        np.testing.assert_allclose(grad, -ds.labels[i] * ds.features[i] / 2, atol=1e-15)


def test_least_squares_at_origin():
    prob = Problem("least-squares", Dataset(np.array([[1.0, 2.0], [0.0, 0.0]]),
                                            np.array([1.0, 0.0])))
    value, grad = sample_loss(prob, np.zeros(2), 0)
    assert value == 1.0
    np.testing.assert_array_equal(grad, [-2.0, -4.0])


def test_quadratic_at_sample():
    prob = generate_quadratic(d=3, n=5, nu=2.0, sigma=1.0, seed=0)
    phi = prob.dataset.features[2]
    value, grad = sample_loss(prob, phi, 2)
    assert value == 0.0
    np.testing.assert_array_equal(grad, np.zeros(3))


def test_logistic_stable_for_large_margins():
    prob = Problem("logistic", Dataset(np.array([[1.0], [1.0]]), np.array([1.0, -1.0])))
    x = np.array([800.0])
    v0, g0 = sample_loss(prob, x, 0)
    v1, g1 = sample_loss(prob, x, 1)
    assert v0 == 0.0 and g0[0] == pytest.approx(0.0, abs=1e-300)
    assert v1 == pytest.approx(800.0) and g1[0] == pytest.approx(1.0)


def test_sample_loss_errors(logistic_problem):
    with pytest.raises(IndexError):
        sample_loss(logistic_problem, np.zeros(5), logistic_problem.n)
    with pytest.raises(ValueError):
        sample_loss(logistic_problem, np.full(5, np.nan), 0)
    with pytest.raises(ValueError):
        batch_loss(logistic_problem, np.zeros(5), [])


def test_batch_of_one_equals_sample(any_problem):
    x = np.linspace(-1, 1, any_problem.d)
    a = sample_loss(any_problem, x, 7)
    b = batch_loss(any_problem, x, [7])
    assert a.value == b.value
    np.testing.assert_array_equal(a.gradient, b.gradient)


def test_symmetric_least_squares_cancels():
    ds = Dataset(np.array([[1.0, 2.0], [1.0, 2.0]]), np.array([1.0, -1.0]))
    prob = Problem("least-squares", ds)
    np.testing.assert_array_equal(sample_loss(prob, np.zeros(2), 1).gradient, [2.0, 4.0])
    np.testing.assert_array_equal(batch_loss(prob, np.zeros(2), [0, 1]).gradient, [0.0, 0.0])


def test_logistic_hand_dataset_against_scratch_sum(hand_dataset):
    # direct per-sample summation with the math module only
    x = (1.0, -1.0)
    value, grad = 0.0, [0.0, 0.0]
    for (a0, a1), b in zip(hand_dataset.features.tolist(), hand_dataset.labels.tolist()):
        m = b * (a0 * x[0] + a1 * x[1])
        value += math.log(1.0 + math.exp(-m))
        s = 1.0 / (1.0 + math.exp(m))
        grad[0] += -b * a0 * s
        grad[1] += -b * a1 * s
    value /= 4
    grad = [g / 4 for g in grad]

    prob = Problem("logistic", hand_dataset)
    out = batch_loss(prob, np.array(x), [0, 1, 2, 3])
    assert out.value == pytest.approx(value, rel=1e-14)
    np.testing.assert_allclose(out.gradient, grad, rtol=1e-14)


def test_full_loss_single_sample():
    prob = Problem("least-squares", Dataset(np.array([[2.0, -1.0]]), np.array([0.5])))
    x = np.array([0.3, 0.7])
    assert full_loss(prob, x).value == sample_loss(prob, x, 0).value


def test_full_gradient_vanishes_at_sample_mean(quad_problem):
    x = quad_problem.dataset.features.mean(axis=0)
    np.testing.assert_allclose(full_loss(quad_problem, x).gradient, 0.0, atol=1e-14)


def _fd_check(problem, rng, count, indices=None):
    for _ in range(count):
        x = rng.normal(size=problem.d)
        if indices is None:
            fun = lambda y: full_loss(problem, y).value  # noqa: E731
            g = full_loss(problem, x).gradient
        else:
            fun = lambda y: batch_loss(problem, y, indices).value  # noqa: E731
            g = batch_loss(problem, x, indices).gradient
        fd = central_difference(fun, x, 1e-5)
        rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel <= 1e-6, rel


def test_full_gradient_matches_finite_differences(any_problem):
    _fd_check(any_problem, np.random.default_rng(0), 5)


def test_batch_gradient_matches_finite_differences(any_problem):
    rng = np.random.default_rng(1)
    _fd_check(any_problem, rng, 10, indices=rng.choice(any_problem.n, 17, replace=False))


def test_linearity_of_batch_gradient(any_problem):
    rng = np.random.default_rng(2)
    idx = rng.choice(any_problem.n, 25, replace=False)
    x = rng.normal(size=any_problem.d)
    mean = np.mean([sample_loss(any_problem, x, int(i)).gradient for i in idx], axis=0)
    np.testing.assert_allclose(batch_loss(any_problem, x, idx).gradient, mean, atol=1e-12)


def test_batch_value_matches_batch_loss(any_problem):
    x = np.full(any_problem.d, 0.2)
    idx = [5, 1, 9, 3]
    assert batch_value(any_problem, x, idx) == batch_loss(any_problem, x, idx).value


def test_singleton_batches_are_unbiased(logistic_problem):
    rng = np.random.default_rng(3)
    x = rng.normal(size=logistic_problem.d)
    _, grads = per_sample(logistic_problem, x, rng.integers(0, logistic_problem.n, 20_000))
    se = grads.std(axis=0, ddof=1) / math.sqrt(len(grads))
    true = full_loss(logistic_problem, x).gradient
    assert np.all(np.abs(grads.mean(axis=0) - true) <= 3 * se + 1e-15)


# -- data files ------------------------------------------------------------


def test_sparse_line(tmp_path):
    path = tmp_path / "one.svm"
    path.write_text("+1 1:0.5 3:2.0\n")
    ds = load_dataset(path, "svm-sparse", d=3)
    np.testing.assert_array_equal(ds.features, [[0.5, 0.0, 2.0]])
    np.testing.assert_array_equal(ds.labels, [1.0])


def test_empty_file(tmp_path):
    path = tmp_path / "empty.svm"
    path.write_text("")
    with pytest.raises(DatasetFormatError, match="no samples"):
        load_dataset(path, "svm-sparse")


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "bad.svm"
    path.write_text("1 1:0.5\n-1 2:x\n")
    with pytest.raises(DatasetFormatError, match="line 2"):
        load_dataset(path, "svm-sparse")


def test_inconsistent_dimension(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2,1\n1,2,3,0\n")
    with pytest.raises(DatasetFormatError, match="line 2"):
        load_dataset(path, "dense-csv")
    svm = tmp_path / "wide.svm"
    svm.write_text("1 4:1.0\n")
    with pytest.raises(DatasetFormatError, match="exceeds"):
        load_dataset(svm, "svm-sparse", d=3)


def test_logistic_label_mapping(tmp_path):
    path = tmp_path / "zero_one.csv"
    path.write_text("0.5,1\n0.1,0\n")
    ds = load_dataset(path, "dense-csv", task="logistic")
    np.testing.assert_array_equal(ds.labels, [1.0, -1.0])
    path.write_text("0.5,2\n0.1,1\n")
    with pytest.raises(DatasetFormatError, match="label"):
        load_dataset(path, "dense-csv", task="logistic")


@pytest.mark.parametrize("fmt", ["svm-sparse", "dense-csv"])
def test_round_trip(tmp_path, fmt):
    src = tmp_path / "hand.txt"
    src.write_text("1,0.1,-2.5\n-1,3.0,1e-7\n1,-0.3333333333333333,0\n")
    original = load_dataset(src, "dense-csv")
    out = tmp_path / "dump"
    dump_dataset(original, out, fmt)
    again = load_dataset(out, fmt, d=original.d)
    np.testing.assert_allclose(again.features, original.features, atol=1e-12)
    np.testing.assert_allclose(again.labels, original.labels, atol=1e-12)


# -- normalization ---------------------------------------------------------


def test_normalize_two_points():
    ds = Dataset(np.array([[1.0], [3.0]]), np.zeros(2))
    out = normalize_features(ds)
    np.testing.assert_array_equal(out.features[:, 0], [-1.0, 1.0])
    assert out.features.mean() == 0.0


def test_normalize_constant_column_and_original_untouched():
    X = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]])
    ds = Dataset(X, np.zeros(3))
    out = normalize_features(ds)
    np.testing.assert_array_equal(out.features[:, 0], 0.0)
    np.testing.assert_array_equal(ds.features, X)


@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3)))
@settings(max_examples=60, deadline=None)
def test_normalize_statistics(X):
    out = normalize_features(Dataset(X, np.zeros(len(X)))).features
    assert np.all(np.abs(out.mean(axis=0)) <= 1e-9)
    std = out.std(axis=0)
    spread = np.ptp(X, axis=0)
    live = spread > 1e-6 * np.maximum(np.abs(X).max(axis=0), 1)
    np.testing.assert_allclose(std[live], 1.0, atol=1e-9)


def test_normalize_random_matrix():
    X = np.random.default_rng(0).normal(3, 7, size=(10, 4))
    out = normalize_features(Dataset(X, np.zeros(10))).features
    assert np.all(np.abs(out.mean(axis=0)) <= 1e-12)
    np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-9)


# -- synthetic quadratic ---------------------------------------------------


def test_noiseless_quadratic_gradient():
    x_star = np.array([1.0, -2.0, 0.5])
    prob = generate_quadratic(d=3, n=10, nu=2.0, sigma=0.0, x_star=x_star, seed=0)
    x = np.array([0.25, 4.0, -1.0])
    np.testing.assert_array_equal(full_loss(prob, x).gradient, 2.0 * (x - x_star))


def test_generate_quadratic_is_deterministic():
    a = generate_quadratic(5, 50, 1.0, 0.3, seed=11).dataset.features
    b = generate_quadratic(5, 50, 1.0, 0.3, seed=11).dataset.features
    assert a.tobytes() == b.tobytes()


def test_generate_quadratic_rejects_bad_curvature():
    with pytest.raises(ValueError):
        generate_quadratic(2, 5, 0.0, 0.1)


def test_quadratic_gradient_trace_variance():
    prob = generate_quadratic(d=10, n=100_000, nu=1.0, sigma=0.1, seed=0)
    _, grads = per_sample(prob, np.ones(10), np.arange(prob.n))
    tr_var = grads.var(axis=0, ddof=1).sum()
    assert abs(tr_var - 0.1) <= 0.05 * 0.1
