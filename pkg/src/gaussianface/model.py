"""
Multi-task discriminative GPLVM: objective, gradients and training.

Each domain contributes a log posterior

    ℓ = log p(X | Z, θ) + log p(Z) + log p(θ)

(GPLVM likelihood, KFDA prior, ``log p(θ) = Σ log θ_j``) with all
normalizers dropped. With ``S ≥ 1`` source domains the training objective is

    L = -ℓ_T + β P_T log P_T + (β/S) Σ_i (P_{T,i} log P_i - P_{T,i} log P_{T,i})

where every ``P`` is the per-point geometric mean ``exp(ℓ/N)`` of the
corresponding posterior and ``ℓ_{T,i}`` is evaluated on the concatenation
of the target and the i-th source. Hyper-parameters are optimized in log
space; gradients for both ``log θ`` and ``Z`` come from a single matrix
``G = ∂ℓ/∂K`` per term.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import linalg

from . import __version__
from .exceptions import ContractViolation, NumericalFailure
from .kernels import (
    HyperParams,
    anchor_approx,
    cross_kernel,
    cross_kernel_grads,
    default_jitter,
    kernel_matrix,
    kmeans_anchors,
    rbf_part,
    woodbury_reg_inverse,
)
from .kfda import PriorConfig, build_kfda, kfda_terms
from .laplace import LaplaceGP, check_labels
from .scg import ScgOptions, scg_minimize

log = logging.getLogger(__name__)

MODEL_SCHEMA = "gaussianface-model/1"
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class DomainData:
    X: np.ndarray
    y: np.ndarray
    Z: np.ndarray | None = None
    role: str = "source"
    name: str = ""

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = check_labels(self.y)
        if not np.all(np.isfinite(self.X)):
            raise ContractViolation(f"domain {self.name!r}: observations must be finite")
        if self.X.shape[0] != self.y.size:
            raise ContractViolation(f"domain {self.name!r}: {self.X.shape[0]} rows but {self.y.size} labels")
        if self.role not in ("target", "source"):
            raise ContractViolation(f"unknown domain role {self.role!r}")
        if self.Z is not None:
            self.Z = np.atleast_2d(np.asarray(self.Z, dtype=float))

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass
class ModelConfig:
    beta: float = 0.1
    latent_dim: int = 2
    prior: PriorConfig = field(default_factory=PriorConfig)
    anchor_threshold: int = 500
    n_anchors: int = 100
    tau: float = 1e-6  # anchor-path regularizer, relative to mean(diag K)
    multitask: bool = True
    theta_scg: ScgOptions = field(default_factory=lambda: ScgOptions(max_iter=50))
    z_scg: ScgOptions = field(default_factory=lambda: ScgOptions(max_iter=50))
    outer_max: int = 20
    outer_tol: float = 1e-6
    estimate_iters: int = 100
    newton_max_iter: int = 100
    newton_halvings: int = 20
    init_noise_fraction: float = 0.1
    init_bias_fraction: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ContractViolation("latent_dim must be >= 1")
        if self.beta < 0:
            raise ContractViolation("beta must be >= 0")


# ---------------------------------------------------------------------------
# per-term log posterior and gradients


@dataclass
class TermValue:
    ell: float
    grad_log_theta: np.ndarray
    grad_Z: np.ndarray | None
    gplvm: float = 0.0
    prior: float = 0.0


def gplvm_loglik(X, Z, theta: HyperParams) -> float:
    """``-(ND/2) log 2π - (D/2) log|K| - ½ tr(K^{-1}XXᵀ)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = kernel_matrix(Z, theta)
    L = linalg.cholesky(K + default_jitter(K) * np.eye(K.shape[0]), lower=True)
    alpha = linalg.cho_solve((L, True), X)
    n, D = X.shape
    return float(-0.5 * n * D * _LOG_2PI - D * np.sum(np.log(np.diag(L))) - 0.5 * np.sum(X * alpha))


def _term_dense(X, Z, y, theta, prior, want_grad, want_z):
    n, D = X.shape
    K = kernel_matrix(Z, theta)
    L = linalg.cholesky(K + default_jitter(K) * np.eye(n), lower=True)
    alpha = linalg.cho_solve((L, True), X)
    gp = -0.5 * n * D * _LOG_2PI - D * np.sum(np.log(np.diag(L))) - 0.5 * np.sum(X * alpha)
    s = build_kfda(y, prior.lam)
    J, v = kfda_terms(K, s)
    pr = -J / prior.sigma**2
    ell = gp + pr + np.sum(np.log(theta.to_vector()))
    if not want_grad:
        return TermValue(float(ell), None, None, float(gp), float(pr))

    Kinv, info = linalg.lapack.dpotri(L, lower=1)
    if info != 0:
        raise NumericalFailure("inverse from Cholesky factor failed")
    Kinv = np.tril(Kinv) + np.tril(Kinv, -1).T
    G = -0.5 * D * Kinv + 0.5 * alpha @ alpha.T - np.outer(v, v) / (prior.lam * prior.sigma**2)
    G = 0.5 * (G + G.T)
    E = rbf_part(Z, Z, theta)
    GE = G * E
    tv = theta.to_vector()
    g = np.empty(theta.d + 3)
    g[0] = np.sum(GE)
    for m in range(theta.d):
        diff = Z[:, m, None] - Z[None, :, m]
        g[1 + m] = -0.5 * theta.ard[m] * np.sum(GE * diff**2)
    g[-2] = tv[-2] * np.sum(G)
    g[-1] = -theta.noise * np.trace(G)
    g += 1.0
    gz = None
    if want_z:
        rows = GE.sum(1)
        gz = np.empty_like(Z)
        for m in range(theta.d):
            gz[:, m] = -2.0 * theta.ard[m] * (rows * Z[:, m] - GE @ Z[:, m])
    return TermValue(float(ell), g, gz, float(gp), float(pr))


def _term_lowrank(X, Z, y, theta, prior, anchors, tau, want_grad, want_z):
    n, D = X.shape
    ap = anchor_approx(Z, anchors, theta)
    tau_abs = tau * theta.prior_variance
    op = woodbury_reg_inverse(ap.Q, ap.noise + tau_abs)
    alpha = op(X)
    gp = -0.5 * n * D * _LOG_2PI - 0.5 * D * op.logdet() - 0.5 * np.sum(X * alpha)
    s = build_kfda(y, prior.lam)
    J, v = kfda_terms(ap, s)
    pr = -J / prior.sigma**2
    ell = gp + pr + np.sum(np.log(theta.to_vector()))
    if not want_grad:
        return TermValue(float(ell), None, None, float(gp), float(pr))

    # G = g0·I + Lf Rfᵀ
    binv = op.base_inv[0]
    DQ = binv * ap.Q
    c = 1.0 / (prior.lam * prior.sigma**2)
    g0 = -0.5 * D * binv
    Lf = np.hstack([DQ, alpha, v[:, None]])
    Rf = np.hstack([0.5 * D * DQ @ op.core_inverse(), 0.5 * alpha, -c * v[:, None]])
    M = ap.Knq @ ap.Kqq_pinv
    GM = g0 * M + 0.5 * (Lf @ (Rf.T @ M) + Rf @ (Lf.T @ M))
    H = 2.0 * GM
    Gqq = -(g0 * M.T @ M + 0.5 * ((M.T @ Lf) @ (Rf.T @ M) + (M.T @ Rf) @ (Lf.T @ M)))
    trG = g0 * n + np.sum(Lf * Rf)
    # τ shifts only the GPLVM kernel, so its trace excludes the KFDA block
    trG_gp = trG + c * (v @ v)

    dKnq = cross_kernel_grads(Z, anchors, theta)
    dKqq = cross_kernel_grads(anchors, anchors, theta)
    g = np.einsum("kij,ij->k", dKnq, H) + np.einsum("kij,ij->k", dKqq, Gqq)
    g[-1] += -theta.noise * trG
    if tau:
        g[0] += tau * theta.theta0 * trG_gp
        g[-2] += tau * theta.bias * trG_gp
        g[-1] -= tau * theta.noise * trG_gp
    g += 1.0
    gz = None
    if want_z:
        HE = H * rbf_part(Z, anchors, theta)
        gz = np.empty_like(Z)
        for m in range(theta.d):
            gz[:, m] = -theta.ard[m] * (HE.sum(1) * Z[:, m] - HE @ anchors[:, m])
    return TermValue(float(ell), g, gz, float(gp), float(pr))


def log_posterior_term(X, Z, y, theta, prior: PriorConfig, anchors=None, tau=0.0, want_grad=True, want_z=True):
    """Log posterior of one (possibly concatenated) dataset and its gradients.

    With ``anchors`` the kernel is replaced by ``QQᵀ + sI``; anchors are
    held fixed in the gradient.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if anchors is None:
        return _term_dense(X, Z, y, theta, prior, want_grad, want_z)
    return _term_lowrank(X, Z, y, theta, prior, np.asarray(anchors, dtype=float), tau, want_grad, want_z)


def domain_log_posterior(dom: DomainData, theta: HyperParams, cfg: ModelConfig, anchors=None) -> float:
    return log_posterior_term(dom.X, dom.Z, dom.y, theta, cfg.prior, anchors, cfg.tau, want_grad=False).ell


def _concat(target: DomainData, source: DomainData):
    return (
        np.vstack([target.X, source.X]),
        np.vstack([target.Z, source.Z]),
        np.concatenate([target.y, source.y]),
    )


def joint_log_posterior(target: DomainData, source: DomainData, theta, cfg: ModelConfig, anchors=None) -> float:
    X, Z, y = _concat(target, source)
    return log_posterior_term(X, Z, y, theta, cfg.prior, anchors, cfg.tau, want_grad=False).ell


# ---------------------------------------------------------------------------
# full objective


def split_domains(domains):
    targets = [d for d in domains if d.role == "target"]
    if len(targets) != 1:
        raise ContractViolation(f"exactly one target domain required, got {len(targets)}")
    sources = [d for d in domains if d.role == "source"]
    D = targets[0].X.shape[1]
    dz = targets[0].Z.shape[1] if targets[0].Z is not None else None
    for s in sources:
        if s.X.shape[1] != D:
            raise ContractViolation("all domains must share the observation dimension")
        if dz is not None and s.Z is not None and s.Z.shape[1] != dz:
            raise ContractViolation("all domains must share the latent dimension")
    return targets[0], sources


def multitask_active(sources, cfg: ModelConfig) -> bool:
    return cfg.multitask and cfg.beta > 0 and len(sources) > 0


class Objective:
    """``L_Model`` and its gradient over a flat vector of ``log θ`` and latents.

    ``anchors`` maps a term key (``"T"``, ``("S", i)`` or ``("TS", i)``) to a
    fixed anchor set; terms without an entry use the dense path.
    """

    def __init__(self, domains, cfg: ModelConfig, anchors=None):
        self.target, self.sources = split_domains(domains)
        self.cfg = cfg
        self.anchors = anchors or {}
        self.active = multitask_active(self.sources, cfg)

    def _term(self, key, X, Z, y, theta, want_grad, want_z):
        return log_posterior_term(
            X, Z, y, theta, self.cfg.prior, self.anchors.get(key), self.cfg.tau, want_grad, want_z
        )

    def evaluate(self, theta: HyperParams, Zs, want_grad=True, want_z=True):
        """Return ``(L, grad_log_theta, [grad_Z per domain], parts)``.

        ``Zs`` lists latents for the target followed by each source.
        """
        cfg = self.cfg
        tgt = self.target
        ZT = Zs[0]
        tT = self._term("T", tgt.X, ZT, tgt.y, theta, want_grad, want_z)
        parts = {"ell_T": tT.ell}
        if not self.active:
            if not want_grad:
                return -tT.ell, None, None, parts
            gz = [-tT.grad_Z if want_z else None] + [np.zeros_like(Z) for Z in Zs[1:]]
            return -tT.ell, -tT.grad_log_theta, gz, parts

        beta, S, nT = cfg.beta, len(self.sources), tgt.n
        lbT = tT.ell / nT
        PT = np.exp(lbT)
        L = -tT.ell + beta * PT * lbT
        wT = -1.0 + beta * PT * (lbT + 1.0) / nT
        if want_grad:
            g = wT * tT.grad_log_theta
            gz = [wT * tT.grad_Z if want_z else None] + [None] * S
        for i, src in enumerate(self.sources):
            Zi = Zs[1 + i]
            tS = self._term(("S", i), src.X, Zi, src.y, theta, want_grad, want_z)
            Xc = np.vstack([tgt.X, src.X])
            Zc = np.vstack([ZT, Zi])
            yc = np.concatenate([tgt.y, src.y])
            tJ = self._term(("TS", i), Xc, Zc, yc, theta, want_grad, want_z)
            nJ = nT + src.n
            lbS, lbJ = tS.ell / src.n, tJ.ell / nJ
            PJ = np.exp(lbJ)
            L += beta / S * (PJ * lbS - PJ * lbJ)
            parts[f"ell_S{i}"] = tS.ell
            parts[f"ell_TS{i}"] = tJ.ell
            if want_grad:
                wS = beta / S * PJ / src.n
                wJ = beta / S * PJ * (lbS - lbJ - 1.0) / nJ
                g += wS * tS.grad_log_theta + wJ * tJ.grad_log_theta
                if want_z:
                    gz[0] = gz[0] + wJ * tJ.grad_Z[:nT]
                    gz[1 + i] = wS * tS.grad_Z + wJ * tJ.grad_Z[nT:]
        if not want_grad:
            return float(L), None, None, parts
        return float(L), g, gz, parts


def model_objective(domains, theta: HyperParams, cfg: ModelConfig, anchors=None) -> float:
    tgt, srcs = split_domains(domains)
    obj = Objective(domains, cfg, anchors)
    return obj.evaluate(theta, [tgt.Z] + [s.Z for s in srcs], want_grad=False)[0]


def model_gradient_theta(domains, theta: HyperParams, cfg: ModelConfig, anchors=None) -> np.ndarray:
    """``∂L_Model/∂ log θ_j``."""
    tgt, srcs = split_domains(domains)
    obj = Objective(domains, cfg, anchors)
    return obj.evaluate(theta, [tgt.Z] + [s.Z for s in srcs], want_z=False)[1]


# ---------------------------------------------------------------------------
# training


def pca_init(X, d):
    """Top-``d`` principal component scores, scaled to unit variance per dimension."""
    Xc = X - X.mean(0)
    U, sv, _ = linalg.svd(Xc, full_matrices=False)
    Z = U[:, :d] * sv[:d]
    if Z.shape[1] < d:
        Z = np.hstack([Z, np.zeros((Z.shape[0], d - Z.shape[1]))])
    sd = Z.std(0)
    sd[sd == 0] = 1.0
    # deterministic sign: largest-magnitude loading positive
    sign = np.sign(Z[np.argmax(np.abs(Z), 0), np.arange(d)])
    sign[sign == 0] = 1.0
    return Z / sd * sign


def initial_theta(X, d, cfg: ModelConfig) -> HyperParams:
    var = float(np.mean(np.var(X, 0)))
    var = var if var > 0 else 1.0
    signal = var * (1.0 - cfg.init_noise_fraction)
    return HyperParams(signal, np.ones(d), var * cfg.init_bias_fraction, 1.0 / (var * cfg.init_noise_fraction))


@dataclass
class TrainedModel:
    theta: HyperParams
    domains: list
    x_means: list
    classifier: LaplaceGP
    config: ModelConfig
    trace: list = field(default_factory=list)
    converged: bool = True

    @property
    def target(self) -> DomainData:
        return split_domains(self.domains)[0]

    @property
    def target_mean(self) -> np.ndarray:
        return self.x_means[[d.role for d in self.domains].index("target")]

    def latent_estimator(self):
        if getattr(self, "_estimator", None) is None:
            t = self.target
            self._estimator = LatentEstimator(t.X, t.Z, self.theta, self.config)
        return self._estimator

    def estimate_latents(self, Xstar):
        Xs = np.atleast_2d(np.asarray(Xstar, dtype=float)) - self.target_mean
        return self.latent_estimator().estimate(Xs)[0]

    def predict_prob(self, Xstar):
        return self.classifier.predict_prob(self.estimate_latents(Xstar))

    def predict_latent(self, Xstar):
        return self.classifier.predict_latent(self.estimate_latents(Xstar))


def _anchor_plan(obj: Objective, Zs, cfg: ModelConfig, seed):
    plan = {}
    if obj.target.n > cfg.anchor_threshold:
        plan["T"] = kmeans_anchors(Zs[0], min(cfg.n_anchors, obj.target.n), seed)
    if obj.active:
        for i, src in enumerate(obj.sources):
            if src.n > cfg.anchor_threshold:
                plan[("S", i)] = kmeans_anchors(Zs[1 + i], min(cfg.n_anchors, src.n), seed)
            if obj.target.n + src.n > cfg.anchor_threshold:
                Zc = np.vstack([Zs[0], Zs[1 + i]])
                plan[("TS", i)] = kmeans_anchors(Zc, min(cfg.n_anchors, Zc.shape[0]), seed)
    return plan


def train(domains, cfg: ModelConfig | None = None) -> TrainedModel:
    """Alternate SCG blocks over ``log θ`` and all latents, then fit the target classifier."""
    cfg = cfg or ModelConfig()
    target, sources = split_domains(domains)
    d = cfg.latent_dim
    if d > target.X.shape[1]:
        raise ContractViolation("latent_dim must not exceed the observation dimension")
    if not multitask_active(sources, cfg):
        sources = []
    work = []
    means = []
    for dom in [target] + sources:
        if len(np.unique(dom.y)) < 2:
            raise ContractViolation(f"domain {dom.name!r} needs both classes")
        mu = dom.X.mean(0)
        Xc = dom.X - mu
        Z0 = dom.Z if dom.Z is not None else pca_init(Xc, d)
        work.append(DomainData(Xc, dom.y, Z0.copy(), dom.role, dom.name))
        means.append(mu)

    theta = initial_theta(work[0].X, d, cfg)
    obj = Objective(work, cfg)
    sizes = [w.n * d for w in work]
    Zs = [w.Z for w in work]
    p = theta.d + 3

    def unpack_z(vec):
        out, k = [], 0
        for w, sz in zip(work, sizes):
            out.append(vec[k : k + sz].reshape(w.n, d))
            k += sz
        return out

    def f_theta(lt):
        L, g, _, _ = obj.evaluate(HyperParams.from_log(lt), Zs, want_z=False)
        return L, g

    def f_z(zv):
        L, _, gz, _ = obj.evaluate(theta, unpack_z(zv), want_z=True)
        return L, np.concatenate([x.ravel() for x in gz])

    obj.anchors = _anchor_plan(obj, Zs, cfg, cfg.seed)
    current = obj.evaluate(theta, Zs, want_grad=False)[0]
    trace = [current]
    converged = False
    for outer in range(cfg.outer_max):
        start = current
        r = scg_minimize(f_theta, theta.to_log(), cfg.theta_scg)
        theta = HyperParams.from_log(r.x)
        r = scg_minimize(f_z, np.concatenate([z.ravel() for z in Zs]), cfg.z_scg)
        Zs = unpack_z(r.x)
        current = r.fun
        # anchors follow the latents only when the refreshed approximation
        # does not raise the objective, keeping the trace monotone
        plan = _anchor_plan(obj, Zs, cfg, cfg.seed)
        if plan:
            old = obj.anchors
            obj.anchors = plan
            val = obj.evaluate(theta, Zs, want_grad=False)[0]
            if val <= current:
                current = val
            else:
                obj.anchors = old
        trace.append(current)
        log.debug("outer %d: L=%.6g", outer, current)
        if abs(start - current) <= cfg.outer_tol * max(abs(start), 1e-300):
            converged = True
            break
    if not converged:
        warnings.warn(f"training stopped at outer cap {cfg.outer_max} without meeting outer_tol")

    final = [replace(w, Z=z) for w, z in zip(work, Zs)]
    clf = LaplaceGP.fit(
        final[0].Z,
        final[0].y,
        theta,
        cfg.anchor_threshold,
        cfg.n_anchors,
        cfg.seed,
        max_iter=cfg.newton_max_iter,
        max_halvings=cfg.newton_halvings,
    )
    return TrainedModel(theta, final, means, clf, cfg, trace, converged)


# ---------------------------------------------------------------------------
# out-of-sample latents


class LatentEstimator:
    """Maximizes the GP-regression predictive density of ``x_*`` over ``z_*``."""

    def __init__(self, X, Z, theta: HyperParams, cfg: ModelConfig):
        self.X = np.asarray(X, dtype=float)
        self.Z = np.asarray(Z, dtype=float)
        self.theta = theta
        self.iters = cfg.estimate_iters
        n = self.Z.shape[0]
        if n > cfg.anchor_threshold:
            anchors = kmeans_anchors(self.Z, min(cfg.n_anchors, n), cfg.seed)
            op = woodbury_reg_inverse(anchor_approx(self.Z, anchors, theta).Q, theta.noise + cfg.tau * theta.prior_variance)
            self._solve = op
        else:
            K = kernel_matrix(self.Z, theta)
            cf = linalg.cho_factor(K + default_jitter(K) * np.eye(n), lower=True)
            self._solve = lambda B: linalg.cho_solve(cf, B)
        self.alpha = self._solve(self.X)
        self.scale = float(np.mean(self.Z.std(0))) or 1.0

    def log_density(self, Zs, Xs, want_grad=False):
        th = self.theta
        Ks = cross_kernel(Zs, self.Z, th)
        mu = Ks @ self.alpha
        Kinv_ks = self._solve(Ks.T).T
        v = th.prior_variance - np.sum(Ks * Kinv_ks, 1)
        v = np.maximum(v, 1e-12 * th.prior_variance)
        r = Xs - mu
        rr = np.sum(r * r, 1)
        D = Xs.shape[1]
        lp = -0.5 * D * (_LOG_2PI + np.log(v)) - 0.5 * rr / v
        if not want_grad:
            return lp
        E = rbf_part(Zs, self.Z, th)
        g = np.empty_like(Zs)
        for m in range(th.d):
            dK = -th.ard[m] * (Zs[:, m, None] - self.Z[None, :, m]) * E
            dmu = dK @ self.alpha
            dv = -2.0 * np.sum(dK * Kinv_ks, 1)
            g[:, m] = -0.5 * D * dv / v + np.sum(r * dmu, 1) / v + 0.5 * rr * dv / v**2
        return lp, g

    def initial(self, Xs):
        d2 = np.sum(Xs**2, 1)[:, None] + np.sum(self.X**2, 1)[None, :] - 2.0 * Xs @ self.X.T
        return self.Z[np.argmin(d2, 1)].copy()

    def estimate(self, Xs):
        """Return ``(Z_*, converged flags)`` for each (already centred) row of ``Xs``.

        Normalized-gradient ascent with per-point step control; a step is
        kept only if it raises the density, so the result is never worse
        than the nearest-neighbour start.
        """
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        z = self.initial(Xs)
        lp, g = self.log_density(z, Xs, want_grad=True)
        step = np.full(z.shape[0], 0.1 * self.scale)
        tiny = 1e-9 * self.scale
        for _ in range(self.iters):
            live = step > tiny
            if not np.any(live):
                break
            gn = np.linalg.norm(g, axis=1)
            live &= gn > 0
            if not np.any(live):
                break
            idx = np.flatnonzero(live)
            cand = z[idx] + step[idx, None] * g[idx] / gn[idx, None]
            lp_c, g_c = self.log_density(cand, Xs[idx], want_grad=True)
            ok = lp_c > lp[idx]
            acc = idx[ok]
            z[acc], lp[acc], g[acc] = cand[ok], lp_c[ok], g_c[ok]
            step[acc] *= 1.5
            step[idx[~ok]] *= 0.5
        return z, step <= tiny


def estimate_latent(x_star, model: TrainedModel) -> np.ndarray:
    """Latent position for a single raw observation."""
    return model.estimate_latents(np.atleast_2d(x_star))[0]


# ---------------------------------------------------------------------------
# serialization


def _cfg_to_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)


def _cfg_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    d["prior"] = PriorConfig(**d["prior"])
    d["theta_scg"] = ScgOptions(**d["theta_scg"])
    d["z_scg"] = ScgOptions(**d["z_scg"])
    return ModelConfig(**d)


def model_to_dict(model: TrainedModel) -> dict:
    lap = model.classifier.laplace
    clf = model.classifier
    return {
        "schema": MODEL_SCHEMA,
        "package_version": __version__,
        "config": _cfg_to_dict(model.config),
        "theta": model.theta.to_vector().tolist(),
        "domains": [
            {
                "name": d.name,
                "role": d.role,
                "X": d.X.tolist(),
                "y": d.y.tolist(),
                "Z": d.Z.tolist(),
                "x_mean": mu.tolist(),
            }
            for d, mu in zip(model.domains, model.x_means)
        ],
        "laplace": {
            "f_hat": lap.f_hat.tolist(),
            "W": lap.W.tolist(),
            "a": lap.a.tolist(),
            "log_marginal": lap.log_marginal,
            "anchors": None if clf.anchors is None else clf.anchors.tolist(),
        },
        "trace": list(model.trace),
        "converged": model.converged,
    }


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("schema") != MODEL_SCHEMA:
        raise ContractViolation(f"unsupported model schema {doc.get('schema')!r}")
    cfg = _cfg_from_dict(doc["config"])
    theta = HyperParams.from_vector(doc["theta"])
    doms, means = [], []
    for dd in doc["domains"]:
        doms.append(DomainData(np.array(dd["X"]), np.array(dd["y"]), np.array(dd["Z"]), dd["role"], dd["name"]))
        means.append(np.array(dd["x_mean"]))
    target = split_domains(doms)[0]
    lap = doc["laplace"]
    clf = LaplaceGP.restore(
        target.Z,
        target.y,
        theta,
        np.array(lap["f_hat"]),
        np.array(lap["W"]),
        np.array(lap["a"]),
        lap["log_marginal"],
        None if lap["anchors"] is None else np.array(lap["anchors"]),
    )
    return TrainedModel(theta, doms, means, clf, cfg, list(doc["trace"]), bool(doc["converged"]))


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> TrainedModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
