import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from gaussianface.exceptions import ContractViolation
from gaussianface.kernels import (
    HyperParams,
    anchor_approx,
    ard_kernel,
    cross_kernel,
    kernel_grads,
    kernel_matrix,
    kmeans_anchors,
    woodbury_kw_inverse,
    woodbury_reg_inverse,
)


def random_theta(rng, d):
    return HyperParams(rng.uniform(0.5, 2), rng.uniform(0.2, 2, d), rng.uniform(0.01, 0.5), rng.uniform(1, 20))


def test_kernel_zero_distance_with_delta():
    th = HyperParams(1.0, [1.0], 0.0, 2.0)
    assert ard_kernel([0.0], [0.0], th, same_index=True) == 1.5


def test_kernel_far_points_leave_bias():
    th = HyperParams(1.0, [1.0], 0.3, 2.0)
    assert ard_kernel([0.0], [1e3], th) == pytest.approx(0.3, abs=1e-15)


def test_kernel_dimension_mismatch():
    with pytest.raises(ContractViolation):
        ard_kernel([0.0, 1.0], [0.0, 1.0], HyperParams(1.0, [1.0], 0.0, 2.0))


def test_single_point_matrix():
    th = HyperParams(1.3, [0.4, 2.0], 0.2, 4.0)
    K = kernel_matrix(np.zeros((1, 2)), th)
    assert K.shape == (1, 1)
    assert K[0, 0] == pytest.approx(1.3 + 0.2 + 0.25, rel=1e-15)


def test_matrix_matches_scalar_kernel():
    rng = np.random.default_rng(3)
    Z = rng.normal(size=(3, 2))
    th = random_theta(rng, 2)
    K = kernel_matrix(Z, th)
    for i in range(3):
        for j in range(3):
            assert K[i, j] == pytest.approx(ard_kernel(Z[i], Z[j], th, i == j), rel=1e-13)


def test_cross_kernel_has_no_delta():
    rng = np.random.default_rng(4)
    Z = rng.normal(size=(5, 2))
    th = random_theta(rng, 2)
    C = cross_kernel(Z, Z, th)
    K = kernel_matrix(Z, th)
    off = ~np.eye(5, dtype=bool)
    np.testing.assert_allclose(C[off], K[off], rtol=1e-14)
    np.testing.assert_allclose(np.diag(K) - np.diag(C), th.noise, rtol=1e-12)
    far = cross_kernel(Z, np.array([[1e4, 1e4]]), th)
    np.testing.assert_allclose(far[:, 0], th.bias, rtol=1e-12)


def test_cross_kernel_matches_scalar_kernel():
    rng = np.random.default_rng(5)
    A, B = rng.normal(size=(4, 3)), rng.normal(size=(6, 3))
    th = random_theta(rng, 3)
    C = cross_kernel(A, B, th)
    ref = np.array([[ard_kernel(a, b, th) for b in B] for a in A])
    np.testing.assert_allclose(C, ref, rtol=1e-13)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 25), d=st.integers(1, 4))
def test_kernel_matrix_symmetric_and_psd(seed, n, d):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, d)) * rng.uniform(0.1, 5)
    th = random_theta(rng, d)
    K = kernel_matrix(Z, th)
    assert np.array_equal(K, K.T)
    jit = 1e-8 * np.mean(np.diag(K))
    assert np.min(linalg.eigvalsh(K + jit * np.eye(n))) >= 0


def test_hyperparams_log_roundtrip_and_positivity():
    th = HyperParams(1.5, [0.3, 2.0], 0.1, 7.0)
    back = HyperParams.from_log(th.to_log())
    np.testing.assert_allclose(back.to_vector(), th.to_vector(), rtol=1e-15)
    with pytest.raises(ContractViolation):
        HyperParams(-1.0, [1.0], 0.0, 1.0)
    with pytest.raises(ContractViolation):
        HyperParams(1.0, [1.0], -0.1, 1.0)


def test_kernel_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    Z = rng.normal(size=(7, 2))
    th = random_theta(rng, 2)
    G = kernel_grads(Z, th, log=True)
    lt, h = th.to_log(), 1e-6
    for j in range(lt.size):
        e = np.zeros_like(lt)
        e[j] = h
        fd = (kernel_matrix(Z, HyperParams.from_log(lt + e)) - kernel_matrix(Z, HyperParams.from_log(lt - e))) / (2 * h)
        assert np.max(np.abs(fd - G[j])) <= 1e-5 * max(np.max(np.abs(fd)), 1e-12)


def test_scalar_kernel_gradient_in_theta_m():
    rng = np.random.default_rng(7)
    zi, zj = rng.normal(size=2), rng.normal(size=2)
    th = random_theta(rng, 2)
    v, h = th.to_vector(), 1e-6
    for m in (1, 2):
        vp, vm = v.copy(), v.copy()
        vp[m] += h
        vm[m] -= h
        fd = (ard_kernel(zi, zj, HyperParams.from_vector(vp)) - ard_kernel(zi, zj, HyperParams.from_vector(vm))) / (2 * h)
        exact = -0.5 * (zi[m - 1] - zj[m - 1]) ** 2 * (ard_kernel(zi, zj, th) - th.bias)
        assert fd == pytest.approx(exact, rel=1e-6)


def test_kmeans_anchor_contracts():
    rng = np.random.default_rng(8)
    Z = rng.normal(size=(12, 2))
    full = kmeans_anchors(Z, 12)
    assert sorted(map(tuple, full)) == sorted(map(tuple, Z))
    np.testing.assert_allclose(kmeans_anchors(Z, 1)[0], Z.mean(0), atol=1e-12)
    with pytest.raises(ContractViolation):
        kmeans_anchors(Z, 13)
    np.testing.assert_array_equal(kmeans_anchors(Z, 4, seed=2), kmeans_anchors(Z, 4, seed=2))


def test_kmeans_finds_two_blobs():
    rng = np.random.default_rng(9)
    Z = np.vstack([rng.normal(size=(50, 2)) * 0.2, rng.normal(size=(50, 2)) * 0.2 + [5, 5]])
    A = kmeans_anchors(Z, 2, seed=0)
    A = A[np.argsort(A[:, 0])]
    np.testing.assert_allclose(A[0], Z[:50].mean(0), atol=0.1)
    np.testing.assert_allclose(A[1], Z[50:].mean(0), atol=0.1)


def rel_fro(a, b):
    return linalg.norm(a - b) / linalg.norm(b)


def test_woodbury_zero_q():
    Q = np.zeros((6, 2))
    np.testing.assert_allclose(woodbury_reg_inverse(Q, 4.0).dense(), np.eye(6) / 4.0)
    W = np.arange(1.0, 7.0)
    np.testing.assert_allclose(woodbury_kw_inverse(Q, W).dense(), np.diag(W))


@pytest.mark.parametrize("n,q", [(20, 20), (50, 10)])
def test_woodbury_matches_dense(n, q):
    rng = np.random.default_rng(n + q)
    Q = rng.normal(size=(n, q))
    s = 0.7
    assert rel_fro(woodbury_reg_inverse(Q, s).dense(), linalg.inv(s * np.eye(n) + Q @ Q.T)) <= 1e-8
    W = rng.uniform(0.2, 3.0, n)
    assert rel_fro(woodbury_kw_inverse(Q, W).dense(), linalg.inv(Q @ Q.T + np.diag(1 / W))) <= 1e-8
    op = woodbury_reg_inverse(Q, s)
    assert op.logdet() == pytest.approx(np.linalg.slogdet(s * np.eye(n) + Q @ Q.T)[1], rel=1e-10)


def test_woodbury_rejects_bad_inputs():
    Q = np.ones((3, 1))
    with pytest.raises(ContractViolation):
        woodbury_kw_inverse(Q, np.array([1.0, 0.0, 1.0]))
    with pytest.raises(ContractViolation):
        woodbury_reg_inverse(Q, 0.0)


def test_anchor_approx_with_all_points_is_exact():
    rng = np.random.default_rng(10)
    Z = rng.normal(size=(30, 2))
    th = random_theta(rng, 2)
    ap = anchor_approx(Z, Z, th)
    assert rel_fro(ap.dense(), kernel_matrix(Z, th)) <= 1e-8
    Kinv = linalg.inv(kernel_matrix(Z, th))
    assert rel_fro(woodbury_reg_inverse(ap.Q, ap.noise).dense(), Kinv) <= 1e-8


def test_nystrom_error_shrinks_with_nested_anchors():
    rng = np.random.default_rng(11)
    Z = rng.normal(size=(60, 2))
    th = HyperParams(1.0, [1.0, 1.0], 0.0, 50.0)
    K = cross_kernel(Z, Z, th)
    order = rng.permutation(60)
    errs = []
    for q in (5, 10, 20, 40, 60):
        Q = anchor_approx(Z, Z[order[:q]], th).Q
        errs.append(linalg.norm(K - Q @ Q.T))
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))
