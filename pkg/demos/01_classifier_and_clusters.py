# %% [markdown]
# # A probit GP classifier and the clusters hiding in its variance
#
# Three blobs in the plane. We label the first blob +1 and the rest -1, fit
# the Laplace classifier, then let points slide downhill on its predictive
# variance until they settle. Points that settle together form a cluster.

# %%
import numpy as np

from gaussianface.checks import BLOB_CENTERS, blob_model, rand_index, three_blobs
from gaussianface.cluster import build_codebook, cluster, variance_field

Z, truth = three_blobs(seed=0)
gp = blob_model(Z, truth)
print("training points:", Z.shape, " hyper-parameters:", gp.theta)

# %% [markdown]
# The classifier is confident near its own data and falls back to the prior
# far away.

# %%
probe = np.array([[0.0, 0.0], [4.0, 0.0], [2.0, 1.5], [20.0, 20.0]])
for z, p, v in zip(probe, gp.predict_prob(probe), variance_field(probe, gp)):
    print(f"z={z}  P(match)={p:.3f}  variance={v:.4f}")
print("prior variance:", gp.theta.prior_variance)

# %% [markdown]
# Every training point flows to a low-variance equilibrium. The descent flag
# records that no accepted Euler step ever raised the variance.

# %%
res = cluster(Z, gp)
print("clusters found:", res.labels.max() + 1)
print("Rand index vs truth:", rand_index(res.labels, truth))
print("descent held on every step:", res.descent_ok)
for c in res.centers:
    nearest = np.argmin(np.linalg.norm(BLOB_CENTERS - c, axis=1))
    print("centre", np.round(c, 3), "-> blob", nearest)

# %% [markdown]
# The codebook keeps per-cluster centre, spread, weight, predicted
# probability and variance. These are what feature extraction measures a
# query against.

# %%
book = build_codebook(Z, res.labels, gp)
print("weights", book.weights, "sum", book.weights.sum())
print("probs  ", np.round(book.probs, 4))
print("spreads", np.round(book.spreads, 3))
