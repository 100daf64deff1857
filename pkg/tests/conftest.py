import numpy as np

from gaussianface.kfda import PriorConfig
from gaussianface.model import ModelConfig
from gaussianface.pipelines import PairSet
from gaussianface.scg import ScgOptions

FAST = ModelConfig(
    prior=PriorConfig(sigma=1e3),
    outer_max=3,
    theta_scg=ScgOptions(max_iter=20),
    z_scg=ScgOptions(max_iter=20),
)


def separable_pairs(seed, n=40, P=4, F=3, noise=0.05, id_offset=0):
    """Matched pairs are near copies, mismatched pairs independent draws."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, P, F))
    labels = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    B = np.where(labels[:, None, None] > 0, A + noise * rng.normal(size=A.shape), rng.normal(size=A.shape))
    ida = np.arange(n) * 2 + id_offset
    idb = np.where(labels > 0, ida, ida + 1)
    return PairSet(A, B, labels, ida, idb, f"sep{seed}")

