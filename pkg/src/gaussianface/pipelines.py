"""
Verification pipelines over precomputed per-patch descriptors.

BC mode classifies the vector of patch similarities of a pair. FE mode
learns a latent model on joint patch vectors, clusters its latent space into
a codebook and describes a new pair by its statistics against that codebook;
a BC model trained on those descriptors makes the combined decision.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cluster import ClusterOptions, Codebook, build_codebook, cluster
from .exceptions import ContractViolation
from .laplace import probit_predict
from .model import DomainData, ModelConfig, TrainedModel, train

SIMILARITIES = ("cosine", "neg_euclidean", "inner")


@dataclass(frozen=True)
class PatchGrid:
    image_height: int
    image_width: int
    patch_size: int
    stride: int
    positions: tuple

    @property
    def P(self) -> int:
        return len(self.positions)


def patch_grid(H: int = 150, W: int = 120, patch: int = 25, stride: int = 2) -> PatchGrid:
    """Top-left corners of every ``patch × patch`` window, row-major."""
    if patch < 1 or patch > min(H, W):
        raise ContractViolation(f"patch size {patch} does not fit a {H}x{W} image")
    if stride < 1:
        raise ContractViolation("stride must be >= 1")
    rows = range(0, H - patch + 1, stride)
    cols = range(0, W - patch + 1, stride)
    return PatchGrid(H, W, patch, stride, tuple((r, c) for r in rows for c in cols))


@dataclass
class FacePair:
    feats_a: np.ndarray
    feats_b: np.ndarray
    label: int = 0  # 0 when unknown
    id_a: int = -1
    id_b: int = -1

    def __post_init__(self):
        self.feats_a = np.atleast_2d(np.asarray(self.feats_a, dtype=float))
        self.feats_b = np.atleast_2d(np.asarray(self.feats_b, dtype=float))
        if self.feats_a.shape != self.feats_b.shape:
            raise ContractViolation(f"faces disagree on (P, F): {self.feats_a.shape} vs {self.feats_b.shape}")
        if self.label not in (-1, 0, 1):
            raise ContractViolation("pair label must be -1, +1 or 0")

    def swapped(self) -> "FacePair":
        return FacePair(self.feats_b, self.feats_a, self.label, self.id_b, self.id_a)


@dataclass
class PairSet:
    """A batch of pairs stored as ``(n, P, F)`` arrays."""

    A: np.ndarray
    B: np.ndarray
    labels: np.ndarray
    id_a: np.ndarray
    id_b: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        if self.A.ndim != 3 or self.A.shape != self.B.shape:
            raise ContractViolation("A and B must both have shape (n, P, F)")
        n = self.A.shape[0]
        self.labels = np.asarray(self.labels, dtype=float).ravel()
        self.id_a = np.asarray(self.id_a, dtype=np.int64).ravel()
        self.id_b = np.asarray(self.id_b, dtype=np.int64).ravel()
        if not (self.labels.size == self.id_a.size == self.id_b.size == n):
            raise ContractViolation("labels and identities must have one entry per pair")
        if not np.all(np.isin(self.labels, (-1.0, 0.0, 1.0))):
            raise ContractViolation("pair labels must be -1, +1 or 0")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def P(self) -> int:
        return self.A.shape[1]

    @property
    def F(self) -> int:
        return self.A.shape[2]

    def __len__(self):
        return self.n

    def __getitem__(self, k) -> FacePair:
        return FacePair(self.A[k], self.B[k], int(self.labels[k]), int(self.id_a[k]), int(self.id_b[k]))

    def subset(self, idx) -> "PairSet":
        idx = np.asarray(idx)
        return PairSet(self.A[idx], self.B[idx], self.labels[idx], self.id_a[idx], self.id_b[idx], self.name)

    @classmethod
    def from_pairs(cls, pairs, name="") -> "PairSet":
        pairs = list(pairs)
        return cls(
            np.stack([p.feats_a for p in pairs]),
            np.stack([p.feats_b for p in pairs]),
            [p.label for p in pairs],
            [p.id_a for p in pairs],
            [p.id_b for p in pairs],
            name,
        )


def _as_pairset(pairs) -> PairSet:
    if isinstance(pairs, PairSet):
        return pairs
    if isinstance(pairs, FacePair):
        return PairSet.from_pairs([pairs])
    return PairSet.from_pairs(pairs)


def _similarity(A, B, method):
    if method == "cosine":
        num = np.sum(A * B, -1)
        den = np.linalg.norm(A, axis=-1) * np.linalg.norm(B, axis=-1)
        out = np.zeros_like(num)
        np.divide(num, den, out=out, where=den > 0)
        return out
    if method == "neg_euclidean":
        return -np.linalg.norm(A - B, axis=-1)
    if method == "inner":
        return np.sum(A * B, -1)
    raise ContractViolation(f"unknown similarity {method!r}; choose from {SIMILARITIES}")


def similarity_vector(pair: FacePair, method: str = "cosine") -> np.ndarray:
    """Per-patch similarity ``[s_1, ..., s_P]`` of the two faces."""
    return _similarity(pair.feats_a, pair.feats_b, method)


def similarity_matrix(pairs, method: str = "cosine") -> np.ndarray:
    ps = _as_pairset(pairs)
    return _similarity(ps.A, ps.B, method)


def joint_vector(pair: FacePair, p: int, flipped: bool = False) -> np.ndarray:
    a, b = pair.feats_a[p], pair.feats_b[p]
    return np.concatenate([b, a] if flipped else [a, b])


def joint_matrix(pairs, flipped: bool = False) -> np.ndarray:
    """Joint vectors of every (pair, patch), shape ``(n·P, 2F)``, pair-major."""
    ps = _as_pairset(pairs)
    first, second = (ps.B, ps.A) if flipped else (ps.A, ps.B)
    return np.concatenate([first, second], axis=-1).reshape(ps.n * ps.P, 2 * ps.F)


def fe_training_set(pairs, max_points: int | None = None, seed: int = 0):
    """Joint vectors and labels for FE training, both orientations of every patch.

    Without ``max_points`` the result has exactly ``2·n·P`` rows. With it, a
    seeded uniform subsample of that many rows is drawn, stratified by label
    so both classes survive.
    """
    ps = _as_pairset(pairs)
    X = np.vstack([joint_matrix(ps), joint_matrix(ps, flipped=True)])
    y = np.tile(np.repeat(ps.labels, ps.P), 2)
    if max_points is None or max_points >= y.size:
        return X, y
    rng = np.random.default_rng(seed)
    keep = []
    for c in (-1.0, 1.0):
        idx = np.flatnonzero(y == c)
        share = max(1, int(round(max_points * idx.size / y.size)))
        keep.append(rng.choice(idx, min(share, idx.size), replace=False))
    keep = np.sort(np.concatenate(keep))
    return X[keep], y[keep]


# ---------------------------------------------------------------------------
# BC mode


def _labelled(ps: PairSet):
    if np.any(ps.labels == 0):
        raise ContractViolation(f"pair set {ps.name!r} has unlabelled pairs")
    return ps.labels


def train_bc(target, sources=(), cfg: ModelConfig | None = None, method: str = "cosine") -> TrainedModel:
    """Fit the latent classifier on similarity vectors of the target (and source) pairs."""
    t = _as_pairset(target)
    doms = [DomainData(similarity_matrix(t, method), _labelled(t), role="target", name=t.name or "target")]
    for s in sources:
        s = _as_pairset(s)
        doms.append(DomainData(similarity_matrix(s, method), _labelled(s), role="source", name=s.name))
    return train(doms, cfg)


def bc_probabilities(pairs, bc_model: TrainedModel, method: str = "cosine") -> np.ndarray:
    return bc_model.predict_prob(similarity_matrix(pairs, method))


def verify_bc(pair: FacePair, bc_model: TrainedModel, threshold: float = 0.5, method: str = "cosine"):
    """``(decision, probability)``; a probability equal to the threshold counts as a match."""
    p = float(bc_probabilities(pair, bc_model, method)[0])
    return (1 if p >= threshold else -1), p


# ---------------------------------------------------------------------------
# FE mode


@dataclass
class FeatureExtractor:
    model: TrainedModel
    codebook: Codebook
    prob_clamp: float = 1e-6
    cluster_labels: np.ndarray | None = field(default=None, repr=False)

    @property
    def width(self) -> int:
        """Descriptor length per patch, ``C·(2d+2)``."""
        return self.codebook.size * (2 * self.model.theta.d + 2)


def train_fe(
    target,
    sources=(),
    cfg: ModelConfig | None = None,
    cluster_opts: ClusterOptions | None = None,
    max_points: int | None = 400,
    seed: int = 0,
) -> FeatureExtractor:
    """Train the FE latent model on joint vectors and build its codebook."""
    t = _as_pairset(target)
    X, y = fe_training_set(t, max_points, seed)
    doms = [DomainData(X, y, role="target", name=t.name or "target")]
    for i, s in enumerate(sources):
        s = _as_pairset(s)
        Xs, ys = fe_training_set(s, max_points, seed + 1 + i)
        doms.append(DomainData(Xs, ys, role="source", name=s.name))
    model = train(doms, cfg)
    Z = model.target.Z
    res = cluster(Z, model.classifier, cluster_opts)
    book = build_codebook(Z, res.labels, model.classifier)
    return FeatureExtractor(model, book, cluster_labels=res.labels)


def codebook_statistics(z, p, var, book: Codebook, prob_clamp: float = 1e-6) -> np.ndarray:
    """Blocks ``[Δ¹ (d), Δ² (d), Δ³, Δ⁴]`` against every codeword, shape ``(m, C·(2d+2))``."""
    z = np.atleast_2d(z)
    p = np.clip(np.asarray(p, dtype=float), prob_clamp, 1.0 - prob_clamp)
    r = (z[:, None, :] - book.centers[None]) / book.spreads[None]
    w = book.weights[None, :, None]
    d1 = w * r
    d2 = w * r**2
    d3 = np.log(p[:, None] * (1.0 - book.probs[None]) / (book.probs[None] * (1.0 - p[:, None])))
    d4 = np.asarray(var, dtype=float)[:, None] / book.variances[None]
    blocks = np.concatenate([d1, d2, d3[..., None], d4[..., None]], axis=-1)
    return blocks.reshape(z.shape[0], -1)


def extract_features(pairs, fe, codebook: Codebook | None = None) -> np.ndarray:
    """FE descriptors, one row of length ``P·C·(2d+2)`` per pair.

    ``fe`` is a :class:`FeatureExtractor`, or a trained FE model when the
    codebook is passed separately.
    """
    if codebook is not None:
        fe = FeatureExtractor(fe, codebook)
    ps = _as_pairset(pairs)
    X = joint_matrix(ps)
    z = fe.model.estimate_latents(X)
    mean, var = fe.model.classifier.predict_latent(z)
    feats = codebook_statistics(z, probit_predict(mean, var), var, fe.codebook, fe.prob_clamp)
    return feats.reshape(ps.n, ps.P * fe.width)


def train_combined(target, fe: FeatureExtractor, cfg: ModelConfig | None = None, sources=()) -> TrainedModel:
    """BC model over FE descriptors."""
    t = _as_pairset(target)
    doms = [DomainData(extract_features(t, fe), _labelled(t), role="target", name=t.name or "target")]
    for s in sources:
        s = _as_pairset(s)
        doms.append(DomainData(extract_features(s, fe), _labelled(s), role="source", name=s.name))
    return train(doms, cfg)


def combined_probabilities(pairs, fe: FeatureExtractor, bc_on_features: TrainedModel) -> np.ndarray:
    return bc_on_features.predict_prob(extract_features(pairs, fe))


def verify_combined(pair: FacePair, fe: FeatureExtractor, bc_on_features: TrainedModel, threshold: float = 0.5):
    p = float(combined_probabilities(pair, fe, bc_on_features)[0])
    return (1 if p >= threshold else -1), p


def with_prior_sigma(cfg: ModelConfig, sigma: float) -> ModelConfig:
    return replace(cfg, prior=replace(cfg.prior, sigma=sigma))
