from dataclasses import replace

import numpy as np
import pytest
from scipy import stats
from sklearn.linear_model import LogisticRegression

from gaussianface.config import Config
from gaussianface.exceptions import ContractViolation
from gaussianface.evaluation import (
    identity_folds,
    kfold_eval,
    paired_one_sided,
    roc_curve,
    validation_split,
    write_roc_csv,
)
from gaussianface.pipelines import PairSet, similarity_matrix
from gaussianface.synth import SyntheticDomainSpec, gen_domains

SMALL = SyntheticDomainSpec(n_pairs_matched=50, n_pairs_mismatched=50, P=6, F=4, seed=3)


# ---------------------------------------------------------------------------
# synthetic domains


def test_source_count_and_determinism():
    t, s = gen_domains(SMALL, 0)
    assert s == []
    t2, s2 = gen_domains(SMALL, 2)
    assert len(s2) == 2
    np.testing.assert_array_equal(t.A, t2.A)
    t3, s3 = gen_domains(SMALL, 2)
    for a, b in zip([t2] + s2, [t3] + s3):
        np.testing.assert_array_equal(a.A, b.A)
        np.testing.assert_array_equal(a.B, b.B)
        np.testing.assert_array_equal(a.labels, b.labels)
    assert t.labels.sum() == 0 and t.n == 100


def test_domains_have_disjoint_identities():
    t, s = gen_domains(SMALL, 3)
    ids = [set(d.id_a) | set(d.id_b) for d in [t] + s]
    for i in range(4):
        for j in range(i + 1, 4):
            assert not ids[i] & ids[j]


def test_unshifted_noiseless_source_matches_target_distribution():
    spec = replace(SMALL, n_pairs_matched=200, n_pairs_mismatched=200, domain_shift=0.0, noise=0.0)
    t, (s,) = gen_domains(spec, 1)
    a = np.vstack([t.A, t.B]).reshape(2 * t.n, -1)
    b = np.vstack([s.A, s.B]).reshape(2 * s.n, -1)
    p = stats.ttest_ind(a, b, axis=0, equal_var=False).pvalue
    # Bonferroni over the descriptor coordinates
    assert np.min(p) * a.shape[1] > 0.01


def test_shifted_source_differs_from_target():
    t, (s,) = gen_domains(replace(SMALL, domain_shift=1.0), 1)
    p = stats.ttest_ind(t.A.reshape(t.n, -1), s.A.reshape(s.n, -1), axis=0).pvalue
    assert np.min(p) < 1e-6


def test_generator_contracts():
    with pytest.raises(ContractViolation):
        SyntheticDomainSpec(n_pairs_matched=0)
    with pytest.raises(ContractViolation):
        gen_domains(SMALL, -1)


# ---------------------------------------------------------------------------
# folds


def test_folds_partition_and_keep_identities_apart():
    t, _ = gen_domains(SyntheticDomainSpec(seed=1), 0)
    folds = identity_folds(t, 10, seed=0)
    allidx = np.sort(np.concatenate(folds))
    np.testing.assert_array_equal(allidx, np.arange(t.n))
    owner = {}
    for k, f in enumerate(folds):
        for i in f:
            for ident in (t.id_a[i], t.id_b[i]):
                assert owner.setdefault(ident, k) == k
    assert max(map(len, folds)) - min(map(len, folds)) <= 2


def test_too_few_identity_groups():
    A = np.zeros((4, 1, 1))
    ps = PairSet(A, A, [1, 1, -1, -1], [0, 0, 0, 0], [0, 0, 0, 0])
    with pytest.raises(ContractViolation):
        identity_folds(ps, 2)


def test_validation_split_is_identity_disjoint():
    t, _ = gen_domains(SMALL, 0)
    tr, val = validation_split(t, 0.2, 0)
    assert set(tr).isdisjoint(val) and len(tr) + len(val) == t.n
    ids_tr = set(t.id_a[tr]) | set(t.id_b[tr])
    assert ids_tr.isdisjoint(set(t.id_a[val]) | set(t.id_b[val]))


# ---------------------------------------------------------------------------
# k-fold evaluation


def perfect(cfg, train, sources, test):
    return (test.labels > 0).astype(float)


def logistic(cfg, train, sources, test):
    clf = LogisticRegression().fit(similarity_matrix(train), train.labels)
    return clf.predict_proba(similarity_matrix(test))[:, 1]


def test_perfect_stub_scores_one_everywhere():
    t, _ = gen_domains(SMALL, 0)
    rep = kfold_eval(Config(), (t, []), method=perfect)
    assert rep.fold_accuracies == [1.0] * 10
    assert rep.auc == 1.0
    assert "mean_accuracy: 1.000000" in rep.to_text()


def test_permuted_labels_give_chance_accuracy():
    t, _ = gen_domains(SMALL, 0)
    means = []
    for seed in range(20):
        perm = np.random.default_rng(seed).permutation(t.labels)
        shuffled = PairSet(t.A, t.B, perm, t.id_a, t.id_b)
        means.append(kfold_eval(Config(), (shuffled, []), method=logistic).mean)
    assert abs(np.mean(means) - 0.5) <= 0.05


def test_real_signal_beats_chance():
    t, _ = gen_domains(SMALL, 0)
    assert kfold_eval(Config(), (t, []), method=logistic).mean > 0.65


# ---------------------------------------------------------------------------
# ROC


def mann_whitney_auc(scores, labels):
    pos, neg = scores[labels > 0], scores[labels <= 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


@pytest.mark.parametrize("seed", range(5))
def test_auc_equals_pair_counting(seed):
    rng = np.random.default_rng(seed)
    y = np.r_[1, -1, rng.choice([-1, 1], 8)]
    s = rng.integers(0, 4, 10).astype(float)  # coarse scores force ties
    _, auc = roc_curve(s, y)
    assert auc == mann_whitney_auc(s, y)


def test_roc_degenerate_cases(tmp_path):
    y = np.array([1, 1, -1, -1])
    pts, auc = roc_curve([0.9, 0.8, 0.2, 0.1], y)
    assert auc == 1.0
    np.testing.assert_array_equal(pts[0], [0, 0])
    np.testing.assert_array_equal(pts[-1], [1, 1])
    assert roc_curve(np.full(4, 0.3), y)[1] == 0.5
    with pytest.raises(ContractViolation):
        roc_curve([0.1, 0.2], [1, 1])
    path = tmp_path / "roc.csv"
    write_roc_csv(pts, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "fpr,tpr" and lines[1] == "0.000000,0.000000"


def test_paired_one_sided_matches_scipy():
    a = np.array([0.8, 0.85, 0.9, 0.7, 0.95])
    b = np.array([0.75, 0.8, 0.9, 0.65, 0.9])
    diff, p = paired_one_sided(a, b)
    assert diff == pytest.approx(0.04)
    assert p == pytest.approx(stats.ttest_rel(a, b, alternative="greater").pvalue)
    assert paired_one_sided(b + 0.1, b) == (pytest.approx(0.1), 0.0)
