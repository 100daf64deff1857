# %% [markdown]
# # Dense against anchored objectives
#
# The training objective needs inverses of n x n kernel matrices. With q
# anchor points the same quantities come from q x q solves. Here we check
# how close the two are on a smooth latent set and how much time the anchors
# save.

# %%
import time

import numpy as np

from gaussianface.kernels import HyperParams, kmeans_anchors
from gaussianface.kfda import PriorConfig
from gaussianface.model import DomainData, ModelConfig, Objective, model_objective


def smooth_domain(n, seed=0, D=6):
    rng = np.random.default_rng(seed)
    Z = rng.uniform(-1, 1, size=(n, 2))
    X = np.sin(Z @ rng.normal(size=(2, D))) + 0.05 * rng.normal(size=(n, D))
    y = np.where(Z[:, 0] > 0, 1.0, -1.0)
    return DomainData(X - X.mean(0), y, Z, "target")


theta = HyperParams(1.0, [1.0, 1.0], 0.01, 100.0)
cfg = ModelConfig(prior=PriorConfig(sigma=1e3))

# %%
for n in (100, 200, 400):
    dom = smooth_domain(n)
    dense = model_objective([dom], theta, cfg)
    approx = model_objective([dom], theta, cfg, {"T": kmeans_anchors(dom.Z, n // 4)})
    print(f"n={n:4d} q={n // 4:3d}  dense {dense:.3f}  anchored {approx:.3f}  rel diff {abs(approx - dense) / abs(dense):.1e}")

# %% [markdown]
# Timing one objective-plus-gradient evaluation at n = 2000.

# %%
big = smooth_domain(2000, seed=1)
for label, anchors in (("dense", None), ("q=100", {"T": kmeans_anchors(big.Z, 100)})):
    obj = Objective([big], cfg, anchors)
    t0 = time.perf_counter()
    obj.evaluate(theta, [big.Z])
    print(f"{label:6s} {time.perf_counter() - t0:.2f} s")
