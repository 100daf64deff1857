"""
Identity-disjoint k-fold evaluation, ROC curves and hyper-parameter selection.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats
from scipy.cluster.hierarchy import DisjointSet

from .config import Config
from .exceptions import ContractViolation
from .pipelines import (
    PairSet,
    bc_probabilities,
    combined_probabilities,
    train_bc,
    train_combined,
    train_fe,
    with_prior_sigma,
)

log = logging.getLogger(__name__)


def roc_curve(scores, labels):
    """ROC points over every distinct threshold and the trapezoid AUC.

    Returns ``(points, auc)`` with ``points`` an ``(m, 2)`` array of
    ``(fpr, tpr)`` running from ``(0, 0)`` to ``(1, 1)``. Tied scores move
    along the diagonal together, so a constant score gives AUC 0.5.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel() > 0
    if s.size != y.size:
        raise ContractViolation("scores and labels differ in length")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ContractViolation("ROC needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    # trapezoids on integer counts, one rounding at the end
    tp0, fp0 = np.r_[0, tp], np.r_[0, fp]
    area2 = int(np.sum(np.diff(fp0) * (tp0[1:] + tp0[:-1])))
    auc = area2 / (2 * n_pos * n_neg)
    return np.column_stack([fpr, tpr]), auc


def write_roc_csv(points, path) -> None:
    with open(path, "w") as fh:
        fh.write("fpr,tpr\n")
        for f, t in points:
            fh.write(f"{f:.6f},{t:.6f}\n")


def identity_groups(pairs: PairSet) -> np.ndarray:
    """Group index per pair: pairs sharing any identity land in one group."""
    ds = DisjointSet()
    for a, b in zip(pairs.id_a.tolist(), pairs.id_b.tolist()):
        ds.add(a)
        ds.add(b)
        ds.merge(a, b)
    roots = {}
    return np.array([roots.setdefault(ds[a], len(roots)) for a in pairs.id_a.tolist()])


def identity_folds(pairs: PairSet, k: int = 10, seed: int = 0) -> list:
    """Split pair indices into ``k`` folds with no identity in two folds.

    Groups are shuffled with ``seed`` and then placed largest first into the
    currently smallest fold.
    """
    if pairs.n < k:
        raise ContractViolation(f"need at least k={k} pairs, got {pairs.n}")
    groups = identity_groups(pairs)
    n_groups = groups.max() + 1
    if n_groups < k:
        raise ContractViolation(f"only {n_groups} identity-disjoint groups for k={k} folds")
    rng = np.random.default_rng(seed)
    members = [np.flatnonzero(groups == g) for g in rng.permutation(n_groups)]
    members.sort(key=len, reverse=True)
    folds = [[] for _ in range(k)]
    sizes = np.zeros(k, dtype=int)
    for m in members:
        j = int(np.argmin(sizes))
        folds[j].extend(m.tolist())
        sizes[j] += m.size
    return [np.array(sorted(f), dtype=int) for f in folds]


def decisions(prob, threshold=0.5):
    return np.where(np.asarray(prob) >= threshold, 1.0, -1.0)


@dataclass
class EvalReport:
    fold_accuracies: list
    mean: float
    std: float
    roc: np.ndarray = field(repr=False)
    auc: float
    runtime: float
    config_hash: str
    scores: np.ndarray = field(default=None, repr=False)
    labels: np.ndarray = field(default=None, repr=False)
    folds: list = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"config_hash: {self.config_hash}",
            f"folds: {len(self.fold_accuracies)}",
            "fold_accuracies: [" + ", ".join(f"{a:.6f}" for a in self.fold_accuracies) + "]",
            f"mean_accuracy: {self.mean:.6f}",
            f"std_accuracy: {self.std:.6f}",
            f"auc: {self.auc:.6f}",
            f"runtime_seconds: {self.runtime:.3f}",
        ]
        for k, v in self.extra.items():
            lines.append(f"{k}: {v}")
        return "\n".join(lines) + "\n"


def _fit_predict(cfg: Config, train: PairSet, sources, test: PairSet) -> np.ndarray:
    """Probabilities for ``test`` from the pipeline named in ``cfg.pipeline.mode``."""
    pc = cfg.pipeline
    if pc.mode == "bc":
        model = train_bc(train, sources, cfg.model, pc.similarity)
        return bc_probabilities(test, model, pc.similarity)
    fe = train_fe(
        train,
        sources if pc.fe_sources else (),
        cfg.model,
        cfg.cluster,
        pc.fe_max_points,
        cfg.seed,
    )
    fe.prob_clamp = pc.prob_clamp
    bc = train_combined(train, fe, cfg.model, sources)
    return combined_probabilities(test, fe, bc)


def _run_fold(args):
    cfg, target, sources, tr, te, method = args
    fit = method or _fit_predict
    return fit(cfg, target.subset(tr), sources, target.subset(te))


def kfold_eval(cfg: Config, data, k: int | None = None, method=None) -> EvalReport:
    """k-fold evaluation on the target domain of ``data = (target, sources)``.

    Source domains are used in full in every fold; only target pairs are
    split. ``method(cfg, train, sources, test) -> probabilities`` replaces
    the configured pipeline when given.
    """
    t0 = time.perf_counter()
    target, sources = data
    k = k or cfg.eval.k
    sources = list(sources)[: cfg.eval.sources]
    folds = identity_folds(target, k, cfg.seed)
    jobs = []
    for j in range(k):
        te = folds[j]
        tr = np.sort(np.concatenate([folds[i] for i in range(k) if i != j]))
        jobs.append((cfg, target, sources, tr, te, method))
    if cfg.eval.workers > 1:
        with ProcessPoolExecutor(cfg.eval.workers) as pool:
            probs = list(pool.map(_run_fold, jobs))
    else:
        probs = [_run_fold(job) for job in jobs]
    scores = np.empty(target.n)
    accs = []
    for te, p in zip(folds, probs):
        p = np.asarray(p, dtype=float)
        scores[te] = p
        accs.append(float(np.mean(decisions(p, cfg.pipeline.threshold) == target.labels[te])))
    points, auc = roc_curve(scores, target.labels)
    return EvalReport(
        accs,
        float(np.mean(accs)),
        float(np.std(accs, ddof=1)) if k > 1 else 0.0,
        points,
        auc,
        time.perf_counter() - t0,
        cfg.digest(),
        scores,
        target.labels.copy(),
        folds,
    )


def paired_one_sided(a, b):
    """``(mean(a - b), p)`` for H1: mean(a) > mean(b) by a paired t-test."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    diff = a - b
    if np.allclose(diff, diff[0]):
        return float(diff.mean()), (0.0 if diff[0] > 0 else 1.0)
    res = stats.ttest_rel(a, b, alternative="greater")
    return float(diff.mean()), float(res.pvalue)


def validation_split(target: PairSet, fraction: float, seed: int):
    """Identity-disjoint ``(train_idx, val_idx)`` holding out about ``fraction`` of the pairs."""
    k = max(2, int(round(1.0 / fraction)))
    folds = identity_folds(target, k, seed)
    val = folds[0]
    tr = np.sort(np.concatenate(folds[1:]))
    return tr, val


def _val_accuracy(cfg, target, sources, tr, val):
    p = _fit_predict(cfg, target.subset(tr), sources, target.subset(val))
    return float(np.mean(decisions(p, cfg.pipeline.threshold) == target.labels[val]))


def select_hyperparameters(cfg: Config, data) -> tuple:
    """Pick ``(β, σ)`` from the grids, then the anchor count, on one validation split.

    Returns the updated config and a table of ``(setting, accuracy)`` rows.
    Ties keep the earlier grid entry.
    """
    target, sources = data
    sources = list(sources)[: cfg.eval.sources]
    tr, val = validation_split(target, cfg.eval.validation_fraction, cfg.seed)
    table = []
    best = (-1.0, None)
    betas = cfg.eval.beta_grid if sources else [cfg.model.beta]
    for beta in betas:
        for sigma in cfg.eval.sigma_grid:
            trial = replace(cfg, model=with_prior_sigma(replace(cfg.model, beta=float(beta)), float(sigma)))
            acc = _val_accuracy(trial, target, sources, tr, val)
            table.append(({"beta": beta, "sigma": sigma}, acc))
            if acc > best[0]:
                best = (acc, trial)
    chosen = best[1]
    # anchors only matter once some training set exceeds the dense threshold
    sizes = [tr.size] + [s.n + tr.size for s in sources]
    if max(sizes) > chosen.model.anchor_threshold:
        best_q = (-1.0, chosen)
        for q in cfg.eval.anchor_grid:
            trial = replace(chosen, model=replace(chosen.model, n_anchors=int(q)))
            acc = _val_accuracy(trial, target, sources, tr, val)
            table.append(({"n_anchors": q}, acc))
            if acc > best_q[0]:
                best_q = (acc, trial)
        chosen = best_q[1]
    return chosen, table


__all__ = [
    "EvalReport",
    "decisions",
    "identity_folds",
    "identity_groups",
    "kfold_eval",
    "paired_one_sided",
    "roc_curve",
    "select_hyperparameters",
    "validation_split",
    "write_roc_csv",
]
