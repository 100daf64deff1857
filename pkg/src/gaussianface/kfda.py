"""
Kernel Fisher discriminant in closed form, and the discriminative prior.

For labels split into ``N+`` positives and ``N-`` negatives,

    J* = (1/λ) (aᵀKa - aᵀKA(λI + AKA)^{-1}AKa)

with ``a`` the signed class-mean indicator and ``A`` the block-diagonal,
scaled centring matrix. ``J*`` equals the optimum of the regularized Fisher
ratio in the feature space induced by ``K``.

The derivative with respect to ``K`` is rank one,

    ∂J*/∂K = (1/λ) v vᵀ,    v = a - ÃKa,    Ã = A(λI + AKA)^{-1}A,

which gives every hyper-parameter and latent-position gradient by a
single contraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import ContractViolation, NumericalFailure
from .kernels import AnchorApprox, LowRankInverse


@dataclass(frozen=True)
class PriorConfig:
    sigma: float = 1.0
    lam: float = 1e-8

    def __post_init__(self):
        if not (self.sigma > 0 and self.lam > 0):
            raise ContractViolation("sigma and lambda must be positive")


@dataclass(frozen=True)
class KfdaStructure:
    """Class bookkeeping for ``J*``.

    ``a`` is stored in the caller's index order. ``order`` lists positives
    first, then negatives; ``A[np.ix_(order, order)]`` is the block-diagonal
    matrix ``diag(A+, A-)``.
    """

    n_pos: int
    n_neg: int
    a: np.ndarray
    pos: np.ndarray
    order: np.ndarray
    lam: float

    @property
    def n(self) -> int:
        return self.n_pos + self.n_neg

    @property
    def A(self) -> np.ndarray:
        n = self.n
        A = np.zeros((n, n))
        for mask, m in ((self.pos, self.n_pos), (~self.pos, self.n_neg)):
            idx = np.flatnonzero(mask)
            A[np.ix_(idx, idx)] = (np.eye(m) - 1.0 / m) / np.sqrt(m)
        return A

    def apply_A(self, X):
        """``A @ X`` without forming ``A``."""
        X = np.array(X, dtype=float, copy=True)
        for mask, m in ((self.pos, self.n_pos), (~self.pos, self.n_neg)):
            block = X[mask]
            X[mask] = (block - block.mean(axis=0)) / np.sqrt(m)
        return X

    def block_scale(self) -> np.ndarray:
        """Per-entry ``1/N_c`` for the class of each index (the action of ``A²`` on centred vectors)."""
        return np.where(self.pos, 1.0 / self.n_pos, 1.0 / self.n_neg)


def build_kfda(labels, lam: float = 1e-8) -> KfdaStructure:
    y = np.asarray(labels, dtype=float).ravel()
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ContractViolation("labels must be ±1")
    pos = y > 0
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractViolation("KFDA undefined without both classes")
    if not lam > 0:
        raise ContractViolation("lambda must be positive")
    a = np.where(pos, 1.0 / n_pos, -1.0 / n_neg)
    order = np.concatenate([np.flatnonzero(pos), np.flatnonzero(~pos)])
    pos.setflags(write=False)
    a.setflags(write=False)
    return KfdaStructure(n_pos, n_neg, a, pos, order, float(lam))


def kfda_terms(K, s: KfdaStructure):
    """``(J*, v)`` with ``v = a - ÃKa`` so that ``∂J*/∂K = vvᵀ/λ``.

    ``K`` may be a dense matrix or an :class:`AnchorApprox`.
    """
    if isinstance(K, AnchorApprox):
        return _kfda_terms_lowrank(K, s)
    K = np.asarray(K, dtype=float)
    if K.shape != (s.n, s.n):
        raise ContractViolation(f"K is {K.shape}, labels give n={s.n}")
    a, lam = s.a, s.lam
    Ka = K @ a
    b = s.apply_A(Ka)
    AK = s.apply_A(K)
    M = s.apply_A(AK.T).T
    M[np.diag_indices_from(M)] += lam
    try:
        x = linalg.cho_solve(linalg.cho_factor(M, lower=True), b)
    except linalg.LinAlgError as exc:
        raise NumericalFailure("λI + AKA is not positive definite") from exc
    J = (a @ Ka - b @ x) / lam
    v = a - s.apply_A(x)
    return float(J), v


def _kfda_terms_lowrank(approx: AnchorApprox, s: KfdaStructure):
    # K ≈ QQᵀ + sI. Aa = 0, so AKa = AQ(Qᵀa) and the solve with λI + AKA
    # stays in the centred subspace, where A² acts as the scalar 1/N_c.
    a, lam, Q, noise = s.a, s.lam, approx.Q, approx.noise
    Qa = Q.T @ a
    U = s.apply_A(Q)
    b = U @ Qa
    op = LowRankInverse(U, 1.0 / (lam + noise * s.block_scale()))
    x = op(b)
    J = (Qa @ Qa + noise * a @ a - b @ x) / lam
    v = a - s.apply_A(x)
    return float(J), v


def kfda_objective(K, s: KfdaStructure) -> float:
    return kfda_terms(K, s)[0]


def kfda_grad_theta(K, dK, s: KfdaStructure):
    """``∂J*/∂θ_j`` for one derivative matrix ``dK`` or a stack of them."""
    _, v = kfda_terms(K, s)
    dK = np.asarray(dK, dtype=float)
    if dK.ndim == 2:
        return float(v @ dK @ v) / s.lam
    return np.einsum("i,kij,j->k", v, dK, v) / s.lam


def prior_log_density(K, s: KfdaStructure, cfg: PriorConfig) -> float:
    """``log p(Z) = -J*/σ²`` up to the dropped normalizer."""
    return -kfda_objective(K, s) / cfg.sigma**2
