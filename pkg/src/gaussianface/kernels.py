"""
Covariance function, kernel matrices and the anchor-graph low-rank machinery.

The covariance used throughout the package is the ARD squared exponential
with a constant bias and a white-noise diagonal,

    k(z_i, z_j) = θ0 exp(-½ Σ_m θ_m (z_i^m - z_j^m)²) + θ_{d+1} + δ_ij / θ_{d+2}.

The delta term follows index identity: it sits on the diagonal of a
self-kernel matrix and never appears in a cross-kernel.

Low-rank path
-------------
For large ``n`` the smooth part of ``K`` is replaced by ``QQᵀ`` built from
``q`` anchors, so that ``K ≈ QQᵀ + sI`` with ``s = 1/θ_{d+2}``. Every inverse
of the form ``(D + QQᵀ)^{-1}`` with diagonal ``D`` is then applied through a
``q × q`` system (see :class:`LowRankInverse`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from sklearn.cluster import KMeans

from .exceptions import ContractViolation, NumericalFailure

JITTER = 1e-8


@dataclass(frozen=True)
class HyperParams:
    """Kernel hyper-parameters ``θ0, θ1..θd, θ_{d+1}, θ_{d+2}``."""

    theta0: float
    ard: np.ndarray
    bias: float
    noise_inv: float

    def __post_init__(self):
        ard = np.atleast_1d(np.asarray(self.ard, dtype=float)).copy()
        ard.setflags(write=False)
        object.__setattr__(self, "ard", ard)
        object.__setattr__(self, "theta0", float(self.theta0))
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "noise_inv", float(self.noise_inv))
        if ard.ndim != 1 or ard.size < 1:
            raise ContractViolation("ard must be a non-empty vector")
        if not (self.theta0 > 0 and np.all(ard > 0) and self.noise_inv > 0 and self.bias >= 0):
            raise ContractViolation(f"hyper-parameters out of range: {self.to_vector()}")

    @property
    def d(self) -> int:
        return self.ard.size

    @property
    def noise(self) -> float:
        """Diagonal variance ``1/θ_{d+2}`` contributed by the delta term."""
        return 1.0 / self.noise_inv

    @property
    def prior_variance(self) -> float:
        """``k(z, z)`` for a single point, delta term included."""
        return self.theta0 + self.bias + self.noise

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.theta0], self.ard, [self.bias, self.noise_inv]])

    @classmethod
    def from_vector(cls, v) -> "HyperParams":
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1:-2], v[-2], v[-1])

    def to_log(self) -> np.ndarray:
        return np.log(self.to_vector())

    @classmethod
    def from_log(cls, logv) -> "HyperParams":
        return cls.from_vector(np.exp(np.asarray(logv, dtype=float)))

    @classmethod
    def default(cls, d, theta0=1.0, lengthscale_precision=1.0, bias=0.1, noise_inv=10.0):
        return cls(theta0, np.full(d, lengthscale_precision), bias, noise_inv)


def _check_dims(Z, theta, name="Z"):
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != theta.d:
        raise ContractViolation(f"{name} has dimension {Z.shape[1]}, hyper-parameters expect {theta.d}")
    return Z


def ard_kernel(zi, zj, theta: HyperParams, same_index: bool = False) -> float:
    zi = np.atleast_1d(np.asarray(zi, dtype=float))
    zj = np.atleast_1d(np.asarray(zj, dtype=float))
    if zi.shape != (theta.d,) or zj.shape != (theta.d,):
        raise ContractViolation(f"latent points must have dimension {theta.d}")
    r2 = np.sum(theta.ard * (zi - zj) ** 2)
    value = theta.theta0 * np.exp(-0.5 * r2) + theta.bias
    if same_index:
        value += theta.noise
    return float(value)


def _scaled_sqdist(Za, Zb, ard):
    # per-dimension differences: no cancellation for nearby points
    d2 = np.zeros((Za.shape[0], Zb.shape[0]))
    for m in range(Za.shape[1]):
        d2 += ard[m] * (Za[:, m, None] - Zb[None, :, m]) ** 2
    return d2


def rbf_part(Za, Zb, theta: HyperParams) -> np.ndarray:
    """``θ0 exp(-½ r²)`` without bias or delta term."""
    Za = _check_dims(Za, theta, "Za")
    Zb = _check_dims(Zb, theta, "Zb")
    return theta.theta0 * np.exp(-0.5 * _scaled_sqdist(Za, Zb, theta.ard))


def cross_kernel(Za, Zb, theta: HyperParams) -> np.ndarray:
    return rbf_part(Za, Zb, theta) + theta.bias


def kernel_matrix(Z, theta: HyperParams) -> np.ndarray:
    Z = _check_dims(Z, theta)
    K = cross_kernel(Z, Z, theta)
    K[np.diag_indices_from(K)] = theta.theta0 + theta.bias + theta.noise
    return K


def kernel_grads(Z, theta: HyperParams, log: bool = True) -> np.ndarray:
    """Stack of ``∂K/∂θ_j`` (or ``∂K/∂log θ_j``), shape ``(d+3, N, N)``."""
    Z = _check_dims(Z, theta)
    n = Z.shape[0]
    E = rbf_part(Z, Z, theta) / theta.theta0
    np.fill_diagonal(E, 1.0)
    out = np.empty((theta.d + 3, n, n))
    out[0] = E
    for m in range(theta.d):
        diff = Z[:, m, None] - Z[None, :, m]
        out[1 + m] = -0.5 * theta.theta0 * diff**2 * E
    out[-2] = 1.0
    out[-1] = 0.0
    out[-1][np.diag_indices(n)] = -1.0 / theta.noise_inv**2
    if log:
        out *= theta.to_vector()[:, None, None]
    return out


def cross_kernel_grads(Za, Zb, theta: HyperParams, log: bool = True) -> np.ndarray:
    """Stack of cross-kernel derivatives, shape ``(d+3, A, B)``; the noise slice is zero."""
    Za = _check_dims(Za, theta, "Za")
    Zb = _check_dims(Zb, theta, "Zb")
    E = rbf_part(Za, Zb, theta) / theta.theta0
    out = np.zeros((theta.d + 3, Za.shape[0], Zb.shape[0]))
    out[0] = E
    for m in range(theta.d):
        diff = Za[:, m, None] - Zb[None, :, m]
        out[1 + m] = -0.5 * theta.theta0 * diff**2 * E
    out[-2] = 1.0
    if log:
        out *= theta.to_vector()[:, None, None]
    return out


def default_jitter(K) -> float:
    return JITTER * float(np.mean(np.diag(K)))


def cholesky(K, jitter=None):
    """Lower Cholesky factor of ``K + jitter·I``."""
    if jitter is None:
        jitter = default_jitter(K)
    try:
        return linalg.cholesky(K + jitter * np.eye(K.shape[0]), lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalFailure(f"Cholesky failed on {K.shape[0]}x{K.shape[0]} matrix") from exc


def kmeans_anchors(Z, q: int, seed: int = 0, max_iter: int = 100) -> np.ndarray:
    """``q`` k-means centres of the rows of ``Z`` (k-means++ seeding, single run)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n = Z.shape[0]
    if not 1 <= q <= n:
        raise ContractViolation(f"need 1 <= q <= n, got q={q}, n={n}")
    if q == n:
        return Z.copy()
    km = KMeans(n_clusters=q, n_init=1, max_iter=max_iter, random_state=seed, algorithm="lloyd")
    km.fit(Z)
    return km.cluster_centers_


@dataclass(frozen=True)
class AnchorApprox:
    """Anchor-graph factor with ``K ≈ QQᵀ + noise·I``.

    ``Q = K_nq R`` where ``R Rᵀ`` is the pseudo-inverse of the anchor Gram
    matrix, so with anchors at every data point ``QQᵀ`` reproduces the smooth
    part of ``K``.
    """

    anchors: np.ndarray
    Q: np.ndarray
    Knq: np.ndarray
    Kqq_pinv: np.ndarray
    noise: float

    @property
    def q(self) -> int:
        return self.anchors.shape[0]

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def dense(self) -> np.ndarray:
        return self.Q @ self.Q.T + self.noise * np.eye(self.n)


def anchor_approx(Z, anchors, theta: HyperParams, rcond: float = 1e-13) -> AnchorApprox:
    Knq = cross_kernel(Z, anchors, theta)
    Kqq = cross_kernel(anchors, anchors, theta)
    evals, evecs = linalg.eigh(0.5 * (Kqq + Kqq.T))
    keep = evals > rcond * evals.max()
    scale = np.zeros_like(evals)
    scale[keep] = 1.0 / np.sqrt(evals[keep])
    R = evecs * scale
    return AnchorApprox(np.asarray(anchors, dtype=float), Knq @ R, Knq, R @ R.T, theta.noise)


class LowRankInverse:
    """Applies ``(diag(base) + QQᵀ)^{-1}`` through a ``q × q`` Cholesky factor.

    Built from ``base_inv = 1/base`` so that a vanishing base precision
    (e.g. ``W → 0``) stays finite.
    """

    def __init__(self, Q, base_inv):
        Q = np.asarray(Q, dtype=float)
        base_inv = np.broadcast_to(np.asarray(base_inv, dtype=float), (Q.shape[0],)).copy()
        self.Q = Q
        self.base_inv = base_inv
        DQ = base_inv[:, None] * Q
        C = np.eye(Q.shape[1]) + Q.T @ DQ
        try:
            self._chol = linalg.cho_factor(C, lower=True)
        except linalg.LinAlgError:
            try:
                self._chol = linalg.cho_factor(C + default_jitter(C) * np.eye(C.shape[0]), lower=True)
            except linalg.LinAlgError as exc:
                raise NumericalFailure("singular q x q Woodbury system") from exc
        self._DQ = DQ

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def __call__(self, B):
        B = np.asarray(B, dtype=float)
        vec = B.ndim == 1
        if vec:
            B = B[:, None]
        DB = self.base_inv[:, None] * B
        out = DB - self._DQ @ linalg.cho_solve(self._chol, self._DQ.T @ B)
        return out[:, 0] if vec else out

    def core_inverse(self) -> np.ndarray:
        """``(I + Qᵀ D^{-1} Q)^{-1}``."""
        return linalg.cho_solve(self._chol, np.eye(self.Q.shape[1]))

    def logdet(self) -> float:
        """``log|diag(base) + QQᵀ|``."""
        return float(-np.sum(np.log(self.base_inv)) + 2.0 * np.sum(np.log(np.diag(self._chol[0]))))

    def dense(self) -> np.ndarray:
        return self(np.eye(self.n))


def woodbury_reg_inverse(Q, scale: float) -> LowRankInverse:
    """``(scale·I_n + QQᵀ)^{-1}``."""
    if not scale > 0:
        raise ContractViolation(f"scale must be positive, got {scale}")
    return LowRankInverse(Q, 1.0 / scale)


def woodbury_kw_inverse(Q, W) -> LowRankInverse:
    """``(QQᵀ + W^{-1})^{-1} = W - WQ(I_q + QᵀWQ)^{-1}QᵀW``."""
    W = np.asarray(W, dtype=float)
    if np.any(W <= 0):
        raise ContractViolation("all W entries must be positive")
    return LowRankInverse(Q, W)
