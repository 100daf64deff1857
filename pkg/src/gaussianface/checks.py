"""
Oracle batteries behind ``gradcheck`` and ``selfcheck``.

Each check returns a :class:`CheckResult`; none of them raise on a failed
comparison, so a caller can report every result before deciding the exit
status.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .cluster import build_codebook, cluster
from .kernels import HyperParams, woodbury_kw_inverse, woodbury_reg_inverse
from .kfda import PriorConfig, build_kfda, kfda_objective
from .laplace import LaplaceGP
from .model import DomainData, ModelConfig, Objective


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (limit {self.limit:.1e})"


# ---------------------------------------------------------------------------
# gradients of the training objective


def gradient_instance(seed: int, S: int, beta: float, n_max: int = 20, d: int = 2, D: int = 4):
    """Random domains, latents and hyper-parameters for one gradient check."""
    rng = np.random.default_rng(seed)
    doms = []
    for i in range(S + 1):
        n = int(rng.integers(6, n_max + 1))
        y = np.where(rng.permutation(n) < n // 2, 1.0, -1.0)
        doms.append(DomainData(rng.normal(size=(n, D)), y, rng.normal(size=(n, d)), "target" if i == 0 else "source"))
    theta = HyperParams(
        float(rng.uniform(0.5, 2.0)),
        rng.uniform(0.3, 2.0, size=d),
        float(rng.uniform(0.05, 0.5)),
        float(rng.uniform(2.0, 20.0)),
    )
    cfg = ModelConfig(beta=beta, latent_dim=d, prior=PriorConfig(sigma=float(rng.choice([1e2, 1e3, 1e4]))))
    return doms, theta, cfg


def fd_gradient(fun, x, h=1e-5):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def gradient_suite(n_instances: int = 20, seed: int = 0, rtol: float = 1e-4) -> CheckResult:
    """Analytic ``∂L/∂log θ`` against central differences on seeded instances."""
    t0 = time.perf_counter()
    grid = [(S, beta) for S in (0, 1, 2) for beta in (0.0, 0.1, 1.0)]
    worst = 0.0
    rows = []
    for k in range(n_instances):
        S, beta = grid[k % len(grid)]
        doms, theta, cfg = gradient_instance(seed * 1000 + k, S, beta)
        obj = Objective(doms, cfg)
        Zs = [dm.Z for dm in doms]
        _, g, _, _ = obj.evaluate(theta, Zs, want_z=False)
        fd = fd_gradient(lambda lt: obj.evaluate(HyperParams.from_log(lt), Zs, want_grad=False)[0], theta.to_log())
        err = float(np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-300))
        worst = max(worst, err)
        rows.append({"instance": k, "S": S, "beta": beta, "rel_err": err})
    runtime = time.perf_counter() - t0
    return CheckResult("gradient suite", worst <= rtol, worst, rtol, {"instances": rows, "runtime": runtime})


# ---------------------------------------------------------------------------
# KFDA


def kfda_eigen_oracle(K, labels, lam: float) -> float:
    """Largest ratio ``(wᵀμ)² / wᵀ(S_w + λI)w`` over ``w`` in an explicit feature space.

    The feature map is the Cholesky factor of ``K``; ``μ`` is the difference
    of class means and ``S_w`` the sum of per-class covariances.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(labels) > 0
    Phi = linalg.cholesky(K, lower=True)  # row i is φ(z_i)
    mu = Phi[y].mean(0) - Phi[~y].mean(0)
    Sw = np.zeros_like(K)
    for mask in (y, ~y):
        C = Phi[mask] - Phi[mask].mean(0)
        Sw += C.T @ C / mask.sum()
    vals = linalg.eigh(np.outer(mu, mu), Sw + lam * np.eye(K.shape[0]), eigvals_only=True)
    return float(vals[-1])


def random_pd_kernel(rng, n):
    B = rng.normal(size=(n, n))
    return B @ B.T / n + 0.1 * np.eye(n)


def kfda_suite(n_kernels: int = 100, seed: int = 0, rtol: float = 1e-6, lam: float = 1e-8) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_kernels):
        n = int(rng.integers(4, 13))
        n_pos = int(rng.integers(1, n))
        y = np.r_[np.ones(n_pos), -np.ones(n - n_pos)][rng.permutation(n)]
        K = random_pd_kernel(rng, n)
        J = kfda_objective(K, build_kfda(y, lam))
        ref = kfda_eigen_oracle(K, y, lam)
        worst = max(worst, abs(J - ref) / abs(ref))
    # identity kernel has a closed form
    lam_i = 1e-8
    J_eye = kfda_objective(np.eye(4), build_kfda([1, 1, -1, -1], lam_i))
    exact = (1.0 / lam_i) * (1.0 / 2 + 1.0 / 2)
    eye_err = abs(J_eye - exact) / exact
    return CheckResult(
        "KFDA eigen oracle", worst <= rtol and eye_err <= 1e-12, worst, rtol, {"identity_rel_err": eye_err}
    )


# ---------------------------------------------------------------------------
# Woodbury operators


def woodbury_suite(n: int = 60, seed: int = 0, rtol: float = 1e-8) -> CheckResult:
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(n, n)) / np.sqrt(n)
    s = 0.3
    dense = linalg.inv(Q @ Q.T + s * np.eye(n))
    e1 = linalg.norm(woodbury_reg_inverse(Q, s).dense() - dense) / linalg.norm(dense)
    W = rng.uniform(0.1, 2.0, size=n)
    dense_kw = linalg.inv(Q @ Q.T + np.diag(1.0 / W))
    e2 = linalg.norm(woodbury_kw_inverse(Q, W).dense() - dense_kw) / linalg.norm(dense_kw)
    worst = float(max(e1, e2))
    return CheckResult("Woodbury q=n", worst <= rtol, worst, rtol, {"reg": float(e1), "kw": float(e2)})


# ---------------------------------------------------------------------------
# clustering


BLOB_CENTERS = np.array([[0.0, 0.0], [4.0, 0.0], [2.0, 3.5]])


def three_blobs(seed: int = 0, per_blob: int = 40, spread: float = 0.4):
    rng = np.random.default_rng(seed)
    Z = np.vstack([c + spread * rng.standard_normal((per_blob, 2)) for c in BLOB_CENTERS])
    truth = np.repeat(np.arange(len(BLOB_CENTERS)), per_blob)
    return Z, truth


def blob_model(Z, truth):
    """Laplace classifier (blob 0 against the rest) that supplies the variance field."""
    theta = HyperParams(1.0, np.array([2.0, 2.0]), 1e-6, 100.0)
    y = np.where(truth == 0, 1.0, -1.0)
    return LaplaceGP.fit(Z, y, theta)


def rand_index(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    iu = np.triu_indices(a.size, 1)
    same_a = (a[:, None] == a[None, :])[iu]
    same_b = (b[:, None] == b[None, :])[iu]
    return float(np.mean(same_a == same_b))


def cluster_suite(seed: int = 0, min_rand: float = 0.95) -> CheckResult:
    Z, truth = three_blobs(seed)
    gp = blob_model(Z, truth)
    res = cluster(Z, gp)
    ri = rand_index(res.labels, truth)
    book = build_codebook(Z, res.labels, gp)
    wsum_err = abs(float(book.weights.sum()) - 1.0)
    ok = ri >= min_rand and res.descent_ok and wsum_err <= 1e-10
    detail = {"clusters": int(res.labels.max() + 1), "descent_ok": res.descent_ok, "weight_sum_err": wsum_err}
    return CheckResult("3-blob clustering (Rand index)", ok, ri, min_rand, detail)


def selfcheck(include_gradients: bool = True) -> list:
    out = [woodbury_suite(), kfda_suite(), cluster_suite()]
    if include_gradients:
        out.append(gradient_suite())
    return out
