import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daguard.errors import ShapeError
from daguard.trainers import median_bandwidth, mmd, mmd2_and_grad

from oracles import brute_mmd2_rbf, numeric_grad, rel_err


def _pair(seed, ns=None, nt=None, d=None):
    r = np.random.default_rng(seed)
    d = d or int(r.integers(1, 5))
    return r.normal(size=(ns or int(r.integers(1, 8)), d)), r.normal(0.3, 1.0, size=(nt or int(r.integers(1, 8)), d))


@pytest.mark.parametrize("kernel", ["linear", "rbf"])
def test_mmd_of_a_sample_with_itself_is_zero(kernel):
    x, _ = _pair(0, ns=6)
    assert mmd(x, x, kernel) == 0.0


def test_linear_mmd_hand_example():
    assert mmd([[0, 0], [2, 0]], [[1, 1]], "linear") == pytest.approx(1.0, abs=1e-15)


def test_linear_mmd_is_mean_difference():
    xs, xt = _pair(1, ns=5, nt=7, d=3)
    assert mmd(xs, xt, "linear") == pytest.approx(np.linalg.norm(xs.mean(0) - xt.mean(0)), abs=1e-14)


def test_rbf_matches_triple_loop():
    for seed in range(20):
        xs, xt = _pair(seed)
        h = median_bandwidth(xs, xt)
        value, _, _ = mmd2_and_grad(xs, xt, "rbf")
        assert abs(value - brute_mmd2_rbf(xs.tolist(), xt.tolist(), h)) <= 1e-12


def test_explicit_bandwidth_is_used():
    xs, xt = _pair(3)
    value, _, _ = mmd2_and_grad(xs, xt, "rbf", bandwidth=2.5)
    assert value == pytest.approx(brute_mmd2_rbf(xs.tolist(), xt.tolist(), 2.5), abs=1e-12)


def test_median_bandwidth_by_hand():
    # pooled points 0, 1, 3 on a line: squared distances 1, 9, 4
    assert median_bandwidth(np.array([[0.0], [1.0]]), np.array([[3.0]])) == 4.0
    assert median_bandwidth(np.zeros((2, 2)), np.zeros((1, 2))) == 1.0


@pytest.mark.parametrize("kernel", ["linear", "rbf"])
def test_mmd_gradient_matches_finite_differences(kernel):
    for seed in range(10):
        xs, xt = _pair(seed + 100)
        h = median_bandwidth(xs, xt)
        _, gs, gt = mmd2_and_grad(xs, xt, kernel, h)
        num_s, num_t = numeric_grad(lambda: mmd2_and_grad(xs, xt, kernel, h)[0], [xs, xt])
        assert rel_err(gs, num_s).max() < 1e-4
        assert rel_err(gt, num_t).max() < 1e-4


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["linear", "rbf"]))
def test_mmd_symmetric_and_non_negative(seed, kernel):
    xs, xt = _pair(seed)
    a, b = mmd(xs, xt, kernel), mmd(xt, xs, kernel)
    assert a >= 0.0
    assert a == pytest.approx(b, abs=1e-12)


def test_mmd_rejects_bad_input():
    with pytest.raises(ShapeError):
        mmd(np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(ValueError):
        mmd(np.zeros((0, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        mmd(np.zeros((2, 3)), np.zeros((2, 3)), "laplace")
