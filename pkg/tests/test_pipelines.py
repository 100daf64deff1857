import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FAST, separable_pairs
from gaussianface.cluster import build_codebook
from gaussianface.exceptions import ContractViolation
from gaussianface.pipelines import (
    FacePair,
    FeatureExtractor,
    PairSet,
    codebook_statistics,
    extract_features,
    fe_training_set,
    joint_matrix,
    joint_vector,
    patch_grid,
    similarity_matrix,
    similarity_vector,
    train_bc,
    train_fe,
    verify_bc,
    verify_combined,
    train_combined,
)


# ---------------------------------------------------------------------------
# patch geometry


def test_default_geometry_patch_count():
    g = patch_grid(150, 120, 25, 2)
    assert g.P == 63 * 48 == 3024
    assert g.positions[0] == (0, 0) and g.positions[1] == (0, 2)
    assert all(r + 25 <= 150 and c + 25 <= 120 for r, c in g.positions)


def test_single_patch_and_tiling():
    assert patch_grid(25, 25, 25, 2).P == 1
    assert patch_grid(100, 75, 25, 25).P == 4 * 3


@settings(max_examples=50, deadline=None)
@given(H=st.integers(1, 60), W=st.integers(1, 60), patch=st.integers(1, 30), stride=st.integers(1, 7))
def test_patch_count_formula(H, W, patch, stride):
    if patch > min(H, W):
        with pytest.raises(ContractViolation):
            patch_grid(H, W, patch, stride)
        return
    g = patch_grid(H, W, patch, stride)
    assert g.P == ((H - patch) // stride + 1) * ((W - patch) // stride + 1)


# ---------------------------------------------------------------------------
# similarity and joint vectors


def test_cosine_identical_and_orthogonal():
    a = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_allclose(similarity_vector(FacePair(a, a)), 1.0, rtol=1e-15)
    e1 = np.tile([1.0, 0.0], (4, 1))
    e2 = np.tile([0.0, 2.0], (4, 1))
    np.testing.assert_array_equal(similarity_vector(FacePair(e1, e2)), 0.0)


def test_zero_patch_gives_zero_similarity():
    a = np.array([[0.0, 0.0], [1.0, 1.0]])
    b = np.array([[3.0, 1.0], [1.0, 1.0]])
    s = similarity_vector(FacePair(a, b))
    assert s[0] == 0.0 and s[1] == pytest.approx(1.0)


def test_cosine_matches_scalar_oracle():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
    ref = [float(np.dot(x, y) / np.sqrt(np.dot(x, x) * np.dot(y, y))) for x, y in zip(a, b)]
    np.testing.assert_allclose(similarity_vector(FacePair(a, b)), ref, rtol=1e-13)
    np.testing.assert_allclose(similarity_vector(FacePair(a, b), "inner"), np.sum(a * b, 1), rtol=1e-13)
    np.testing.assert_allclose(similarity_vector(FacePair(a, b), "neg_euclidean"), -np.linalg.norm(a - b, axis=1))
    with pytest.raises(ContractViolation):
        similarity_vector(FacePair(a, b), "manhattan")


def test_joint_vector_layout_and_flip():
    rng = np.random.default_rng(2)
    pair = FacePair(rng.normal(size=(3, 4)), rng.normal(size=(3, 4)))
    v = joint_vector(pair, 1)
    np.testing.assert_array_equal(v[:4], pair.feats_a[1])
    f = joint_vector(pair, 1, flipped=True)
    np.testing.assert_array_equal(np.r_[f[4:], f[:4]], v)
    flipped_pair = FacePair(f.reshape(2, 4)[0:1], f.reshape(2, 4)[1:2])
    np.testing.assert_array_equal(joint_vector(flipped_pair, 0, flipped=True), v)


def test_fe_training_set_emits_both_orientations():
    ps = separable_pairs(3, n=10, P=4, F=3)
    X, y = fe_training_set(ps)
    assert X.shape == (2 * 10 * 4, 6)
    fwd, back = X[:40], X[40:]
    np.testing.assert_array_equal(fwd, joint_matrix(ps))
    np.testing.assert_array_equal(back[:, :3], fwd[:, 3:])
    np.testing.assert_array_equal(y, np.tile(np.repeat(ps.labels, 4), 2))
    Xs, ys = fe_training_set(ps, max_points=30, seed=1)
    assert abs(len(ys) - 30) <= 1 and set(ys) == {-1.0, 1.0}


def test_pair_shape_contract():
    with pytest.raises(ContractViolation):
        FacePair(np.ones((3, 2)), np.ones((3, 3)))


# ---------------------------------------------------------------------------
# FE statistics


def toy_book(C=2, d=2):
    from gaussianface.cluster import Codebook

    rng = np.random.default_rng(4)
    return Codebook(
        rng.normal(size=(C, d)),
        rng.uniform(0.5, 2, size=(C, d)),
        np.full(C, 1 / C),
        rng.uniform(0.2, 0.8, size=C),
        rng.uniform(0.1, 1, size=C),
    )


def test_delta_statistics_vanish_at_codeword():
    book = toy_book()
    for i in range(book.size):
        row = codebook_statistics(book.centers[i], [book.probs[i]], [book.variances[i]], book).reshape(book.size, 6)[i]
        np.testing.assert_array_equal(row[:4], 0.0)
        assert abs(row[4]) <= 1e-15
        assert row[5] == 1.0


def test_delta_log_odds_finite_at_extreme_probabilities():
    book = toy_book()
    out = codebook_statistics(np.zeros((3, 2)), [0.0, 1.0, 0.5], [1.0, 1.0, 1.0], book, prob_clamp=1e-6)
    assert np.all(np.isfinite(out))


# ---------------------------------------------------------------------------
# trained pipelines


@pytest.fixture(scope="module")
def bc():
    return train_bc(separable_pairs(5, n=60), cfg=FAST)


def test_bc_accuracy_on_separable_pairs(bc):
    test = separable_pairs(6, n=40, id_offset=1000)
    decisions = [verify_bc(test[k], bc)[0] for k in range(test.n)]
    assert np.mean(np.array(decisions) == test.labels) >= 0.95


def test_bc_swap_symmetry_and_tie(bc):
    test = separable_pairs(7, n=6)
    for k in range(test.n):
        d, p = verify_bc(test[k], bc)
        d2, p2 = verify_bc(test[k].swapped(), bc)
        assert (d, p) == (d2, p2)
        # a probability exactly at the threshold counts as a match
        assert verify_bc(test[k], bc, threshold=p)[0] == 1


@pytest.fixture(scope="module")
def fe():
    return train_fe(separable_pairs(8, n=16, P=3, F=2), cfg=FAST, max_points=None)


def test_feature_length(fe):
    ps = separable_pairs(9, n=5, P=3, F=2)
    feats = extract_features(ps, fe)
    d = fe.model.theta.d
    assert feats.shape == (5, 3 * fe.codebook.size * (2 * d + 2))
    assert np.all(np.isfinite(feats))


def test_single_codeword_feature_length(fe):
    Z = fe.model.target.Z
    book = build_codebook(Z, np.zeros(Z.shape[0], dtype=int), fe.model.classifier)
    one = FeatureExtractor(fe.model, book)
    ps = separable_pairs(10, n=4, P=3, F=2)
    assert extract_features(ps, one).shape == (4, 3 * (2 * 2 + 2))
    np.testing.assert_array_equal(extract_features(ps, fe.model, book), extract_features(ps, one))


def test_combined_is_deterministic(fe):
    train = separable_pairs(11, n=20, P=3, F=2)
    model = train_combined(train, fe, FAST)
    pair = separable_pairs(12, n=2, P=3, F=2)[0]
    assert verify_combined(pair, fe, model) == verify_combined(pair, fe, model)


def test_unlabelled_pairs_rejected_for_training():
    ps = separable_pairs(13, n=6)
    ps = PairSet(ps.A, ps.B, np.zeros(6), ps.id_a, ps.id_b)
    with pytest.raises(ContractViolation):
        train_bc(ps, cfg=FAST)
