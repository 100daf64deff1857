"""
Binary GP classification with the Laplace approximation.

The likelihood is the cumulative Gaussian, ``p(y|f) = Φ(y f)``, for both
training and prediction. Mode finding follows the usual Newton scheme on
``a = K^{-1} f`` with ``B = I + W^½ K W^½``; on the low-rank path ``K`` is
``QQᵀ + sI`` and every ``B`` solve goes through a ``q × q`` system.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import log_ndtr, ndtr

from .exceptions import ContractViolation, OptimizationFailure
from .kernels import (
    AnchorApprox,
    HyperParams,
    LowRankInverse,
    anchor_approx,
    cross_kernel,
    default_jitter,
    kernel_matrix,
    kmeans_anchors,
    rbf_part,
    woodbury_kw_inverse,
)

log = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 1 or not np.all(np.isin(y, (-1.0, 1.0))):
        raise ContractViolation("labels must be a non-empty vector of ±1")
    return y


def probit_derivatives(y, f):
    """``log Φ(y f)`` and its first three derivatives with respect to ``f``."""
    z = y * f
    logp = log_ndtr(z)
    # φ/Φ through logs; log_ndtr uses its asymptotic series for very negative z
    r = np.exp(-0.5 * z**2 - _LOG_SQRT_2PI - logp)
    d1 = y * r
    d2 = -r * (z + r)
    d3 = y * (-r + r * (z + r) * (z + 2.0 * r))
    return logp, d1, d2, d3


class _DenseCov:
    def __init__(self, K, jitter=None):
        K = np.asarray(K, dtype=float)
        if jitter is None:
            jitter = default_jitter(K)
        self.K = K + jitter * np.eye(K.shape[0])
        self.n = K.shape[0]

    def matvec(self, b):
        return self.K @ b

    def b_factor(self, sW):
        B = np.eye(self.n) + sW[:, None] * self.K * sW[None, :]
        L = linalg.cholesky(B, lower=True)
        return _DenseBSolver(L)


class _DenseBSolver:
    def __init__(self, L):
        self.L = L

    def solve(self, b):
        return linalg.cho_solve((self.L, True), b)

    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    def half_solve(self, b):
        """``L^{-1} b`` so that ``bᵀB^{-1}b = ‖L^{-1}b‖²``."""
        return linalg.solve_triangular(self.L, b, lower=True)


class _LowRankCov:
    def __init__(self, approx: AnchorApprox):
        self.approx = approx
        self.n = approx.n

    def matvec(self, b):
        Q = self.approx.Q
        return Q @ (Q.T @ b) + self.approx.noise * b

    def b_factor(self, sW):
        # B = diag(1 + sW) + (sW Q)(sW Q)ᵀ
        base = 1.0 + self.approx.noise * sW**2
        return _LowRankBSolver(LowRankInverse(sW[:, None] * self.approx.Q, 1.0 / base))


class _LowRankBSolver:
    def __init__(self, op: LowRankInverse):
        self.op = op

    def solve(self, b):
        return self.op(b)

    def logdet(self):
        return self.op.logdet()


def _as_cov(K):
    if isinstance(K, AnchorApprox):
        return _LowRankCov(K)
    return _DenseCov(K)


@dataclass
class LaplaceResult:
    f_hat: np.ndarray
    W: np.ndarray
    log_marginal: float
    a: np.ndarray
    grad_norm: float
    iterations: int
    solver: object = field(default=None, repr=False)
    cov: object = field(default=None, repr=False)


def _psi(a, f, y):
    return -0.5 * a @ f + np.sum(log_ndtr(y * f))


def laplace_mode(K, y, max_iter: int = 100, tol: float = 1e-8, max_halvings: int = 20) -> LaplaceResult:
    """Posterior mode of ``f`` by damped Newton iterations.

    ``K`` is either a dense covariance matrix or an :class:`AnchorApprox`.
    Raises :class:`OptimizationFailure` if the stationarity residual does
    not drop below ``tol`` within ``max_iter`` iterations.
    """
    y = check_labels(y)
    cov = _as_cov(K)
    if cov.n != y.size:
        raise ContractViolation(f"K is {cov.n}x{cov.n} but got {y.size} labels")
    a = np.zeros_like(y)
    f = np.zeros_like(y)
    _, d1, d2, _ = probit_derivatives(y, f)
    psi = _psi(a, f, y)
    grad_norm = float(np.max(np.abs(d1 - a)))
    it = 0
    while grad_norm > tol and it < max_iter:
        it += 1
        W = -d2
        sW = np.sqrt(W)
        solver = cov.b_factor(sW)
        b = W * f + d1
        a_new = b - sW * solver.solve(sW * cov.matvec(b))
        step = a_new - a
        for _ in range(max_halvings + 1):
            a_try = a + step
            f_try = cov.matvec(a_try)
            psi_try = _psi(a_try, f_try, y)
            if psi_try >= psi:
                break
            step = 0.5 * step
        a, f, psi = a_try, f_try, psi_try
        _, d1, d2, _ = probit_derivatives(y, f)
        grad_norm = float(np.max(np.abs(d1 - a)))
    if grad_norm > tol:
        raise OptimizationFailure(
            f"Laplace mode did not converge in {max_iter} iterations (|grad|={grad_norm:.3e})", grad_norm
        )
    W = -d2
    sW = np.sqrt(W)
    solver = cov.b_factor(sW)
    logZ = psi - 0.5 * solver.logdet()
    return LaplaceResult(f, W, float(logZ), a, grad_norm, it, solver, cov)


def log_marginal_laplace(K, y, **kw) -> float:
    return laplace_mode(K, y, **kw).log_marginal


def log_marginal_grad(K, dK, y, **kw) -> np.ndarray:
    """Gradient of the Laplace log marginal w.r.t. each slice ``dK[j]`` (dense path).

    Includes the implicit dependence of ``f̂`` on the hyper-parameters.
    """
    y = check_labels(y)
    res = laplace_mode(K, y, **kw)
    Kj = res.cov.K
    sW = np.sqrt(res.W)
    L = res.solver.L
    R = sW[:, None] * linalg.cho_solve((L, True), np.diag(sW))
    C = linalg.solve_triangular(L, sW[:, None] * Kj, lower=True)
    _, d1, _, d3 = probit_derivatives(y, res.f_hat)
    # ∂(−½ log|B|)/∂f̂ = +½ diag(Σ) ∇³log p, since ∂W/∂f̂ = −∇³log p
    s2 = 0.5 * (np.diag(Kj) - np.sum(C**2, 0)) * d3
    out = np.empty(len(dK))
    for j, Cj in enumerate(dK):
        s1 = 0.5 * res.a @ Cj @ res.a - 0.5 * np.sum(R * Cj)
        b = Cj @ d1
        s3 = b - Kj @ (R @ b)
        out[j] = s1 + s2 @ s3
    return out


def probit_predict(mean, variance):
    """``Φ(mean / sqrt(1 + variance))``."""
    return ndtr(np.asarray(mean) / np.sqrt(1.0 + np.asarray(variance)))


class LaplaceGP:
    """Fitted Laplace classifier over latent inputs ``Z``.

    Uses the anchor path (``K ≈ QQᵀ + sI``) when ``n > anchor_threshold``.
    """

    def __init__(self, Z, y, theta: HyperParams, laplace: LaplaceResult, anchors=None):
        self.Z = np.asarray(Z, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.theta = theta
        self.laplace = laplace
        self.anchors = anchors
        self.n_clamped = 0
        self.n_queries = 0
        W = np.maximum(laplace.W, np.finfo(float).tiny)
        if anchors is None:
            self._kw = None
            self._L = laplace.solver.L
            self._sW = np.sqrt(laplace.W)
        else:
            approx = laplace.cov.approx
            # K + W^{-1} ≈ QQᵀ + (s + 1/W): fold the noise diagonal into W
            self._kw = woodbury_kw_inverse(approx.Q, W / (1.0 + approx.noise * W))

    @classmethod
    def fit(cls, Z, y, theta, anchor_threshold=500, n_anchors=100, seed=0, **kw):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        y = check_labels(y)
        if Z.shape[0] > anchor_threshold:
            anchors = kmeans_anchors(Z, min(n_anchors, Z.shape[0]), seed)
            res = laplace_mode(anchor_approx(Z, anchors, theta), y, **kw)
        else:
            anchors = None
            res = laplace_mode(kernel_matrix(Z, theta), y, **kw)
        return cls(Z, y, theta, res, anchors)

    @classmethod
    def restore(cls, Z, y, theta, f_hat, W, a, log_marginal, anchors=None):
        """Rebuild a fitted state from stored mode quantities (no Newton iterations)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if anchors is None:
            cov = _DenseCov(kernel_matrix(Z, theta))
        else:
            cov = _LowRankCov(anchor_approx(Z, anchors, theta))
        solver = cov.b_factor(np.sqrt(W))
        res = LaplaceResult(f_hat, W, log_marginal, a, 0.0, 0, solver, cov)
        return cls(Z, y, theta, res, anchors)

    @classmethod
    def unlabeled(cls, Z, theta, w=1.0):
        """Variance-only state with a constant curvature ``w`` (labels unused)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        n = Z.shape[0]
        K = kernel_matrix(Z, theta)
        W = np.full(n, float(w))
        cov = _DenseCov(K)
        solver = cov.b_factor(np.sqrt(W))
        res = LaplaceResult(np.zeros(n), W, float("nan"), np.zeros(n), 0.0, 0, solver, cov)
        return cls(Z, np.zeros(n), theta, res, None)

    def _ktilde_inv(self, Ks):
        """``K̃^{-1} K_*ᵀ`` for a block of cross-kernel rows ``Ks`` (m × n)."""
        if self._kw is not None:
            return self._kw(Ks.T)
        sW = self._sW
        return sW[:, None] * linalg.cho_solve((self._L, True), sW[:, None] * Ks.T)

    def predict_latent(self, Zs):
        """Predictive mean and variance of ``f_*`` at each row of ``Zs``."""
        Zs = np.atleast_2d(np.asarray(Zs, dtype=float))
        Ks = cross_kernel(Zs, self.Z, self.theta)
        mean = Ks @ self.laplace.a
        var = self.theta.prior_variance - np.sum(Ks * self._ktilde_inv(Ks).T, 1)
        neg = var < 0
        if np.any(neg):
            if np.any(var < -1e-10):
                warnings.warn(f"predictive variance below -1e-10 (min {var.min():.3e}) clamped to 0")
            self.n_clamped += int(neg.sum())
            var = np.where(neg, 0.0, var)
        self.n_queries += Zs.shape[0]
        if self.n_queries and self.n_clamped > 0.01 * self.n_queries:
            warnings.warn(f"{self.n_clamped}/{self.n_queries} predictive variances clamped")
        return mean, var

    def predict_prob(self, Zs):
        mean, var = self.predict_latent(Zs)
        return probit_predict(mean, var)

    def variance(self, Zs):
        return self.predict_latent(Zs)[1]

    def variance_gradient(self, Zs):
        """``∇σ²`` at each row of ``Zs``, shape ``(m, d)``."""
        Zs = np.atleast_2d(np.asarray(Zs, dtype=float))
        Ks = cross_kernel(Zs, self.Z, self.theta)
        E = rbf_part(Zs, self.Z, self.theta)
        V = self._ktilde_inv(Ks).T  # m × n
        G = np.empty_like(Zs)
        for m in range(Zs.shape[1]):
            diff = Zs[:, m, None] - self.Z[None, :, m]
            dK = -self.theta.ard[m] * diff * E
            G[:, m] = -2.0 * np.sum(dK * V, 1)
        return G
