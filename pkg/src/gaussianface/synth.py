"""Synthetic multi-domain pair data.

A single seeded identity model maps a low-dimensional identity code ``u`` to
per-patch descriptors. Two images of one person share ``u`` up to
intra-personal variation; a mismatched pair uses two independent codes.
Source domains push the descriptors through their own affine map and extra
noise so they resemble the target without matching it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractViolation
from .pipelines import PairSet


@dataclass(frozen=True)
class SyntheticDomainSpec:
    n_pairs_matched: int = 200
    n_pairs_mismatched: int = 200
    P: int = 16
    F: int = 8
    d_true: int = 3
    domain_shift: float = 0.5
    noise: float = 0.2
    within: float = 0.5  # intra-personal spread relative to the unit identity spread
    informative: float = 0.5  # fraction of patches that carry identity signal
    seed: int = 0

    def __post_init__(self):
        if self.n_pairs_matched < 1 or self.n_pairs_mismatched < 1:
            raise ContractViolation("pair counts must be >= 1")
        if min(self.P, self.F, self.d_true) < 1:
            raise ContractViolation("P, F and d_true must be >= 1")
        if self.domain_shift < 0 or self.noise < 0 or self.within < 0:
            raise ContractViolation("domain_shift, noise and within must be non-negative")
        if not 0 < self.informative <= 1:
            raise ContractViolation("informative must lie in (0, 1]")


class _IdentityModel:
    def __init__(self, spec: SyntheticDomainSpec, rng):
        P, F, d = spec.P, spec.F, spec.d_true
        self.A = rng.standard_normal((P, F, d)) / np.sqrt(d)
        self.b = 0.5 * rng.standard_normal((P, F))
        # uninformative patches only see nuisance variation
        n_inf = max(1, int(round(spec.informative * P)))
        self.gain = np.zeros(P)
        self.gain[rng.permutation(P)[:n_inf]] = 1.0
        self.nuis = rng.standard_normal((P, F, d)) / np.sqrt(d)

    def render(self, u, nuisance):
        """Descriptors of shape ``(n, P, F)`` for codes ``u`` and nuisance draws."""
        sig = np.einsum("pfd,nd->npf", self.A, u) * self.gain[None, :, None]
        sig = sig + np.einsum("pfd,nd->npf", self.nuis, nuisance) * (1.0 - self.gain)[None, :, None]
        return np.tanh(sig + self.b[None])


def _domain_map(spec, rng):
    F = spec.F
    M = np.eye(F) + spec.domain_shift * rng.standard_normal((F, F)) / np.sqrt(F)
    c = spec.domain_shift * rng.standard_normal(F)
    return M, c


def _make_domain(spec, model, rng, transform, id_offset, name):
    nm, nx = spec.n_pairs_matched, spec.n_pairs_mismatched
    n = nm + nx
    # identity pool big enough that the mismatch graph stays fragmented
    n_ids = 3 * n
    codes = rng.standard_normal((n_ids, spec.d_true))
    ida = np.empty(n, dtype=int)
    idb = np.empty(n, dtype=int)
    ida[:nm] = rng.choice(n_ids, nm)
    idb[:nm] = ida[:nm]
    for k in range(nm, n):
        a, b = rng.choice(n_ids, 2, replace=False)
        ida[k], idb[k] = a, b
    labels = np.r_[np.ones(nm), -np.ones(nx)]

    def image(ids):
        u = codes[ids] + spec.within * rng.standard_normal((ids.size, spec.d_true))
        nuis = rng.standard_normal((ids.size, spec.d_true))
        x = model.render(u, nuis)
        if transform is not None:
            M, c = transform
            x = x @ M.T + c
        return x + spec.noise * rng.standard_normal(x.shape)

    A = image(ida)
    B = image(idb)
    perm = rng.permutation(n)
    return PairSet(A[perm], B[perm], labels[perm], ida[perm] + id_offset, idb[perm] + id_offset, name)


def gen_domains(spec: SyntheticDomainSpec, S: int):
    """Return ``(target, [source_1, ..., source_S])`` as :class:`PairSet` objects.

    The target carries no domain map and no observation noise beyond
    ``spec.noise``; identities are disjoint across domains.
    """
    if S < 0:
        raise ContractViolation("S must be >= 0")

    def stream(*key):
        # fixed spawn keys keep the target identical whatever S is
        return np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=key))

    model = _IdentityModel(spec, stream(0))
    stride = 10 * (spec.n_pairs_matched + spec.n_pairs_mismatched)
    target = _make_domain(spec, model, stream(1, 0), None, 0, "target")
    sources = []
    for i in range(1, S + 1):
        transform = _domain_map(spec, stream(2, i))
        sources.append(_make_domain(spec, model, stream(1, i), transform, i * stride, f"source{i}"))
    return target, sources
