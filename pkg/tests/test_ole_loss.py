import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ole.gradcheck import central_difference, random_conditioned_batch, rel_error
from ole.ole_loss import FeatureBatch, OleConfig, ole_backward, ole_forward, ole_value_and_grad, partition_by_class

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
PAIR = np.array([0, 1])


def batch(*cols, labels=PAIR):
    return FeatureBatch(np.column_stack(cols), labels)


def oracle_loss(X, labels, delta=1.0):
    """Direct transcription of the loss from singular values."""
    total = 0.0
    for c in set(labels.tolist()):
        total += max(delta, np.linalg.svd(X[:, labels == c], compute_uv=False).sum())
    return total - np.linalg.svd(X, compute_uv=False).sum()


@pytest.mark.parametrize(
    "cols, expected",
    [
        ((E1, E2), 0.0),
        ((E1, E1), 2 - np.sqrt(2)),
        ((0.5 * E1, 0.5 * E2), 1.0),
        ((2 * E1, 2 * E1), 4 - 2 * np.sqrt(2)),
    ],
)
def test_forward_examples(cols, expected):
    assert ole_forward(batch(*cols)) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize(
    "cols, expected",
    [
        ((3 * E1, 2 * E2), np.zeros((2, 2))),
        ((2 * E1, 2 * E1), (1 - 1 / np.sqrt(2)) * np.column_stack([E1, E1])),
        ((0.5 * E1, 0.5 * E2), -np.eye(2)),
    ],
)
def test_backward_examples(cols, expected):
    np.testing.assert_allclose(ole_backward(batch(*cols)), expected, atol=1e-12)


def test_backward_rank_one_matches_finite_differences():
    b = batch(2 * E1, 2 * E1)
    fd = central_difference(lambda Z: ole_forward(FeatureBatch(Z, PAIR)), b.features.copy())
    np.testing.assert_allclose(ole_backward(b), fd, atol=1e-6)


def test_backward_clamp_case_matches_one_sided_differences():
    # both classes sit strictly below the clamp, so one-sided steps stay on the flat side
    X = np.column_stack([0.5 * E1, 0.5 * E2])
    h = 1e-7
    g = ole_backward(FeatureBatch(X, PAIR))
    for i in range(2):
        for j in range(2):
            Z = X.copy()
            Z[i, j] += h
            fd = (ole_forward(FeatureBatch(Z, PAIR)) - ole_forward(FeatureBatch(X, PAIR))) / h
            assert g[i, j] == pytest.approx(fd, abs=1e-5)


def test_clamp_kink_takes_zero_block():
    # class 0 sits exactly at the clamp, so only the global term touches its column
    X = np.column_stack([E1, 3 * E2])
    expected = np.column_stack([-E1, np.zeros(2)])
    np.testing.assert_allclose(ole_backward(FeatureBatch(X, PAIR)), expected, atol=1e-12)


def test_partition_examples():
    X = np.arange(6.0).reshape(2, 3)
    parts = partition_by_class(FeatureBatch(X, [0, 1, 0]))
    assert [c for c, _ in parts] == [0, 1]
    np.testing.assert_array_equal(parts[0][1], X[:, [0, 2]])
    np.testing.assert_array_equal(parts[1][1], X[:, [1]])
    (only,) = partition_by_class(FeatureBatch(X, [2, 2, 2]))
    np.testing.assert_array_equal(only[1], X)
    assert partition_by_class(FeatureBatch(np.zeros((3, 0)), [])) == []


@given(st.integers(0, 2**32 - 1))
def test_partition_is_column_permutation(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 20))
    X, y = rng.standard_normal((3, n)), rng.integers(0, 4, n)
    blocks = np.hstack([b for _, b in partition_by_class(FeatureBatch(X, y))])
    order = np.argsort(y, kind="stable")
    np.testing.assert_array_equal(blocks, X[:, order])


def test_value_and_grad_agrees_with_separate_calls():
    rng = np.random.default_rng(5)
    b = FeatureBatch(rng.standard_normal((8, 16)), rng.integers(0, 4, 16), 4)
    value, grad = ole_value_and_grad(b)
    assert value == ole_forward(b)
    assert np.array_equal(grad, ole_backward(b))


@pytest.mark.parametrize("scale", [0.5, 1.0, 3.0])
def test_single_sample(scale):
    x = scale * np.array([[0.6], [0.8]])
    value, grad = ole_value_and_grad(FeatureBatch(x, [0]))
    assert value == pytest.approx(max(1.0, scale) - scale, abs=1e-12)
    if scale > 1:
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)


def test_absent_classes_contribute_nothing():
    X = np.column_stack([E1, 2 * E2])
    assert ole_forward(FeatureBatch(X, [0, 5], class_count=9)) == pytest.approx(oracle_loss(X, np.array([0, 5])))


@pytest.mark.parametrize(
    "features, labels, count",
    [(np.ones((2, 2)), [0], None), (np.ones((2, 2)), [0, -1], None), (np.ones((2, 2)), [0, 3], 3), (np.ones(2), [0, 1], None)],
)
def test_invalid_batches(features, labels, count):
    with pytest.raises(ValueError):
        FeatureBatch(features, labels, count)


def test_empty_batch_has_no_loss():
    with pytest.raises(ValueError):
        ole_forward(FeatureBatch(np.zeros((2, 0)), []))


@pytest.mark.parametrize("delta, thr", [(-1.0, 0.0), (1.0, -1e-6)])
def test_config_validation(delta, thr):
    with pytest.raises(ValueError):
        OleConfig(delta, thr)


@given(st.integers(0, 2**32 - 1))
def test_matches_direct_oracle(seed):
    rng = np.random.default_rng(seed)
    D, N = int(rng.integers(2, 10)), int(rng.integers(1, 20))
    X = rng.standard_normal((D, N)) * rng.uniform(0.1, 3)
    y = rng.integers(0, 4, N)
    assert ole_forward(FeatureBatch(X, y)) == pytest.approx(oracle_loss(X, y), abs=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_non_negative(seed):
    rng = np.random.default_rng(seed)
    D, N = int(rng.integers(2, 20)), int(rng.integers(2, 40))
    X = rng.standard_normal((D, N)) * 10 ** rng.uniform(-2, 2)
    assert ole_forward(FeatureBatch(X, rng.integers(0, 6, N))) >= -1e-9


@given(st.integers(0, 2**32 - 1))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, 15))
    X, y = rng.standard_normal((5, N)), rng.integers(0, 3, N)
    perm = rng.permutation(N)
    v, g = ole_value_and_grad(FeatureBatch(X, y))
    vp, gp = ole_value_and_grad(FeatureBatch(X[:, perm], y[perm]))
    assert vp == pytest.approx(v, abs=1e-10)
    np.testing.assert_allclose(gp, g[:, perm], atol=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_relabeling_invariance(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, 15))
    X, y = rng.standard_normal((5, N)), rng.integers(0, 4, N)
    relabel = rng.permutation(4)
    v, g = ole_value_and_grad(FeatureBatch(X, y))
    vr, gr = ole_value_and_grad(FeatureBatch(X, relabel[y]))
    assert vr == pytest.approx(v, abs=1e-10)
    np.testing.assert_allclose(gr, g, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(seed):
    b = random_conditioned_batch(np.random.default_rng(seed))
    fd = central_difference(lambda Z: ole_forward(FeatureBatch(Z, b.labels)), b.features.copy())
    assert rel_error(ole_backward(b), fd) <= 1e-4
