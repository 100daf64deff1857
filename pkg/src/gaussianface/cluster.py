"""
Clustering by the GP predictive-variance flow.

Every point follows ``ż = -∇σ²(z)`` down to a stable equilibrium; equilibria
are merged, linked whenever the straight segment between them stays inside
the support level set ``σ² ≤ threshold``, and the connected components of
that graph are the clusters. The number of clusters is not an input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .exceptions import ContractViolation
from .laplace import probit_predict


@dataclass
class ClusterOptions:
    step: float | None = None  # default 0.05·diameter / max initial ‖∇σ²‖
    flow_tol: float | None = None  # default 1e-6·K** / diameter
    merge_radius: float | None = None  # default 1e-3·diameter
    segment_samples: int = 10
    variance_threshold: float | None = None  # default 1.05·max σ²(equilibrium)
    threshold_factor: float = 1.05
    max_iter: int = 10_000
    grow: float = 1.5

    def __post_init__(self):
        for name in ("step", "flow_tol", "merge_radius", "variance_threshold"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ContractViolation(f"{name} must be positive")
        if self.segment_samples < 2:
            raise ContractViolation("segment_samples must be >= 2")


@dataclass
class Codebook:
    centers: np.ndarray
    spreads: np.ndarray
    weights: np.ndarray
    probs: np.ndarray
    variances: np.ndarray

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("centers", "spreads", "weights", "probs", "variances")}

    @classmethod
    def from_dict(cls, d) -> "Codebook":
        return cls(*(np.asarray(d[k], dtype=float) for k in ("centers", "spreads", "weights", "probs", "variances")))


def _gp(model):
    # accept either a fitted LaplaceGP or a TrainedModel
    return getattr(model, "classifier", model)


def variance_field(z, model) -> np.ndarray:
    """Predictive variance ``σ²`` at one point or each row of ``z``."""
    z = np.asarray(z, dtype=float)
    out = _gp(model).variance(np.atleast_2d(z))
    return out[0] if z.ndim == 1 else out


def variance_gradient(z, model) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = _gp(model).variance_gradient(np.atleast_2d(z))
    return out[0] if z.ndim == 1 else out


def _diameter(Z):
    Z = np.atleast_2d(Z)
    span = Z.max(0) - Z.min(0)
    return float(np.linalg.norm(span)) or 1.0


def _resolve(opts: ClusterOptions, gp, Z):
    diam = _diameter(gp.Z if Z is None else Z)
    flow_tol = opts.flow_tol or 1e-6 * gp.theta.prior_variance / diam
    merge = opts.merge_radius or 1e-3 * diam
    return diam, flow_tol, merge


@dataclass
class FlowResult:
    points: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    descent_ok: bool


def flow_many(Z0, model, opts: ClusterOptions | None = None) -> FlowResult:
    """Euler integration of the variance flow for every row of ``Z0``.

    A step is accepted only if ``σ²`` does not increase; rejected steps halve
    the step size, accepted ones grow it by ``opts.grow``.
    """
    opts = opts or ClusterOptions()
    gp = _gp(model)
    z = np.array(np.atleast_2d(Z0), dtype=float, copy=True)
    diam, flow_tol, _ = _resolve(opts, gp, None)
    var = gp.variance(z)
    g = gp.variance_gradient(z)
    gn = np.linalg.norm(g, axis=1)
    if opts.step is not None:
        h = np.full(z.shape[0], opts.step)
    else:
        h = np.full(z.shape[0], 0.05 * diam / max(float(gn.max()), 1e-300))
    iters = np.zeros(z.shape[0], dtype=int)
    done = gn <= flow_tol
    descent_ok = True
    min_h = 1e-14 * diam / max(float(gn.max()), 1e-300)
    for _ in range(opts.max_iter):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        iters[idx] += 1
        cand = z[idx] - h[idx, None] * g[idx]
        vc = gp.variance(cand)
        ok = vc <= var[idx]
        acc = idx[ok]
        if acc.size:
            descent_ok &= bool(np.all(vc[ok] <= var[acc]))
            z[acc] = cand[ok]
            var[acc] = vc[ok]
            g[acc] = gp.variance_gradient(z[acc])
            gn[acc] = np.linalg.norm(g[acc], axis=1)
            h[acc] *= opts.grow
        h[idx[~ok]] *= 0.5
        done = (gn <= flow_tol) | (h < min_h)
    converged = gn <= flow_tol
    return FlowResult(z, converged, iters, descent_ok)


def flow_to_equilibrium(z0, model, opts: ClusterOptions | None = None):
    """Return ``(z_eq, converged)`` for a single starting point."""
    r = flow_many(np.atleast_2d(z0), model, opts)
    return r.points[0], bool(r.converged[0])


def _merge(points, radius):
    """Greedy merge: each point joins the first representative within ``radius``."""
    reps, assign = [], np.empty(len(points), dtype=int)
    for i, p in enumerate(points):
        for k, r in enumerate(reps):
            if np.linalg.norm(p - r) <= radius:
                assign[i] = k
                break
        else:
            assign[i] = len(reps)
            reps.append(p)
    return np.array(reps), assign


@dataclass
class ClusterResult:
    labels: np.ndarray
    centers: np.ndarray
    equilibria: np.ndarray
    threshold: float
    converged: np.ndarray
    descent_ok: bool


def cluster(Z, model, opts: ClusterOptions | None = None) -> ClusterResult:
    """Label each row of ``Z`` by the support component of its equilibrium."""
    opts = opts or ClusterOptions()
    gp = _gp(model)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n = Z.shape[0]
    if n == 0:
        raise ContractViolation("nothing to cluster")
    _, _, merge = _resolve(opts, gp, Z)
    flow = flow_many(Z, model, opts)
    good = flow.converged
    if not np.any(good):
        good = np.ones(n, dtype=bool)
    eq, assign_good = _merge(flow.points[good], merge)
    assign = np.empty(n, dtype=int)
    assign[good] = assign_good
    if not np.all(good):
        # stragglers go to the nearest converged equilibrium
        bad = np.flatnonzero(~good)
        d2 = np.sum((flow.points[bad, None, :] - eq[None]) ** 2, -1)
        assign[bad] = np.argmin(d2, 1)

    eq_var = gp.variance(eq)
    thr = opts.variance_threshold or opts.threshold_factor * float(eq_var.max())
    m = eq.shape[0]
    ts = np.linspace(0.0, 1.0, opts.segment_samples)
    rows, cols = [], []
    for i in range(m - 1):
        j = np.arange(i + 1, m)
        seg = eq[i][None, None, :] + ts[None, :, None] * (eq[j] - eq[i])[:, None, :]
        v = gp.variance(seg.reshape(-1, Z.shape[1])).reshape(j.size, ts.size)
        linked = j[np.all(v <= thr, axis=1)]
        rows.extend([i] * linked.size)
        cols.extend(linked.tolist())
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))
    _, comp = connected_components(adj, directed=False)
    # relabel components by first appearance in input order
    raw = comp[assign]
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first)
    remap = np.empty(order.size, dtype=int)
    remap[np.unique(raw)[order]] = np.arange(order.size)
    labels = remap[raw]
    centers = np.array([Z[labels == k].mean(0) for k in range(order.size)])
    return ClusterResult(labels, centers, eq, thr, flow.converged, flow.descent_ok)


def build_codebook(Z, labels, model, prob_clamp=1e-6, spread_floor=1e-6, var_floor=1e-12) -> Codebook:
    """Codebook statistics of the clusters in ``Z`` under ``labels``."""
    gp = _gp(model)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    labels = np.asarray(labels)
    ks = np.unique(labels)
    centers = np.array([Z[labels == k].mean(0) for k in ks])
    spreads = np.maximum(np.array([Z[labels == k].std(0) for k in ks]), spread_floor)
    counts = np.array([np.sum(labels == k) for k in ks], dtype=float)
    weights = counts / counts.sum()
    mean, var = gp.predict_latent(centers)
    probs = np.clip(probit_predict(mean, var), prob_clamp, 1.0 - prob_clamp)
    return Codebook(centers, spreads, weights, probs, np.maximum(var, var_floor))

