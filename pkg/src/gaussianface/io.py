"""
Pair-feature files and FE documents.

Pair-feature file layout (plain text, whitespace separated)::

    gaussianface-pairs/1
    <n_pairs> <P> <F>
    <label> <id_a> <id_b> <A: P·F values> <B: P·F values>
    ...

One record per line. ``label`` is 1, -1 or 0 (unknown); the descriptor
blocks are row-major ``P × F``. Values are written with ``repr`` so a
write/read round trip is exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cluster import Codebook
from .exceptions import ContractViolation
from .model import model_from_dict, model_to_dict
from .pipelines import FeatureExtractor, PairSet

PAIRS_MAGIC = "gaussianface-pairs/1"
FE_SCHEMA = "gaussianface-fe/1"


class FormatError(ContractViolation):
    pass


def write_pairs(pairs: PairSet, path) -> None:
    n, P, F = pairs.A.shape
    with open(path, "w") as fh:
        fh.write(f"{PAIRS_MAGIC}\n{n} {P} {F}\n")
        for k in range(n):
            vals = [repr(float(v)) for v in pairs.A[k].ravel()] + [repr(float(v)) for v in pairs.B[k].ravel()]
            fh.write(f"{int(pairs.labels[k])} {int(pairs.id_a[k])} {int(pairs.id_b[k])} {' '.join(vals)}\n")


def read_pairs(path, name: str | None = None) -> PairSet:
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != PAIRS_MAGIC:
        raise FormatError(f"{path}:1: expected header {PAIRS_MAGIC!r}")
    try:
        n, P, F = (int(t) for t in lines[1].split())
    except (IndexError, ValueError):
        raise FormatError(f"{path}:2: expected 'n_pairs P F'") from None
    if min(n, P, F) < 1:
        raise FormatError(f"{path}:2: n_pairs, P and F must be positive")
    body = [ln for ln in lines[2:] if ln.strip()]
    if len(body) != n:
        raise FormatError(f"{path}: header announces {n} pairs, found {len(body)} records")
    width = 3 + 2 * P * F
    A = np.empty((n, P, F))
    B = np.empty((n, P, F))
    labels = np.empty(n)
    ida = np.empty(n, dtype=np.int64)
    idb = np.empty(n, dtype=np.int64)
    for k, line in enumerate(body):
        lineno = k + 3
        tok = line.split()
        if len(tok) != width:
            raise FormatError(f"{path}:{lineno}: expected {width} fields, got {len(tok)}")
        try:
            labels[k] = int(tok[0])
            ida[k], idb[k] = int(tok[1]), int(tok[2])
            vals = np.array([float(t) for t in tok[3:]])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if not np.all(np.isfinite(vals)):
            raise FormatError(f"{path}:{lineno}: descriptor values must be finite")
        if labels[k] not in (-1, 0, 1):
            raise FormatError(f"{path}:{lineno}: label must be -1, 0 or 1")
        A[k] = vals[: P * F].reshape(P, F)
        B[k] = vals[P * F :].reshape(P, F)
    return PairSet(A, B, labels, ida, idb, name if name is not None else path.stem)


def fe_to_dict(fe: FeatureExtractor) -> dict:
    return {
        "schema": FE_SCHEMA,
        "model": model_to_dict(fe.model),
        "codebook": fe.codebook.to_dict(),
        "prob_clamp": fe.prob_clamp,
    }


def fe_from_dict(doc: dict) -> FeatureExtractor:
    if doc.get("schema") != FE_SCHEMA:
        raise FormatError(f"not an FE document (schema {doc.get('schema')!r})")
    return FeatureExtractor(model_from_dict(doc["model"]), Codebook.from_dict(doc["codebook"]), doc["prob_clamp"])


def save_fe(fe: FeatureExtractor, path) -> None:
    with open(path, "w") as fh:
        json.dump(fe_to_dict(fe), fh)


def load_fe(path) -> FeatureExtractor:
    with open(path) as fh:
        return fe_from_dict(json.load(fh))
