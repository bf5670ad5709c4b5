import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import special_ortho_group
from sklearn import metrics as skm
from sklearn.linear_model import LogisticRegression

from graphrank import NodeSplit, ari, auc, average_precision, inter_class_distance, intra_class_variance, kmeans, linear_probe, link_scores, nmi
from graphrank.evaluation import EvalReport, evaluate_link, kmeans_fit
from graphrank.graph import EdgeSplit


def brute_auc(scores, labels):
    pos, neg = scores[labels == 1], scores[labels == 0]
    return np.mean([1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**31))
def test_auc_matches_pairwise_oracle_with_ties(n, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    labels[:2] = [0, 1]
    scores = rng.integers(0, 5, n).astype(float)
    assert auc(scores, labels) == pytest.approx(brute_auc(scores, labels), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**31))
def test_ap_matches_sklearn_without_ties(n, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    labels[0] = 1
    scores = rng.random(n)
    assert average_precision(scores, labels) == pytest.approx(skm.average_precision_score(labels, scores), abs=1e-12)


def test_ap_tie_break_is_by_index():
    # the positive comes first among equal scores, so it is ranked first
    assert average_precision(np.array([0.5, 0.5]), np.array([1, 0])) == 1.0
    assert average_precision(np.array([0.5, 0.5]), np.array([0, 1])) == 0.5


def test_ranking_metrics_reject_single_class():
    with pytest.raises(ValueError):
        auc(np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        average_precision(np.ones(3), np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 60), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_nmi_ari_match_sklearn(n, ka, kb, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, ka, n), rng.integers(0, kb, n)
    if len(set(a)) == len(set(b)) == 1:
        # both partitions trivial: defined as 0 here, sklearn reports 1
        assert nmi(a, b) == 0.0
    else:
        assert nmi(a, b) == pytest.approx(skm.normalized_mutual_info_score(b, a), abs=1e-12)
    assert ari(a, b) == pytest.approx(skm.adjusted_rand_score(b, a), abs=1e-12)


def test_cluster_metric_identities():
    a = np.array([0, 0, 1, 1, 2])
    assert nmi(a, 5 - a) == pytest.approx(1.0)
    assert ari(a, 5 - a) == pytest.approx(1.0)
    assert nmi(np.zeros(4), np.zeros(4)) == 0.0
    assert ari(np.zeros(4), np.zeros(4)) == 1.0


def brute_geometry(Z, labels, delta):
    classes = sorted(set(labels))
    var, means = [], []
    for c in classes:
        members = [z for z, y in zip(Z, labels) if y == c]
        mu = sum(members) / len(members)
        means.append(mu)
        var.append(sum(float(np.dot(z - mu, z - mu)) for z in members) / (len(members) * (1 - delta)))
    dists = [np.sqrt(np.dot(p - q, p - q)) for p, q in itertools.permutations(means, 2)]
    return sum(var) / len(var), sum(dists) / len(dists)


@settings(max_examples=50, deadline=None)
@given(st.integers(4, 60), st.integers(2, 4), st.sampled_from([0.0, 0.1, 0.5]), st.integers(0, 2**31))
def test_geometry_matches_brute_force(n, c, delta, seed):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, 3))
    labels = np.arange(n) % c
    v, d = brute_geometry(Z, labels, delta)
    assert intra_class_variance(Z, labels, delta) == pytest.approx(v, rel=1e-12, abs=1e-12)
    assert inter_class_distance(Z, labels) == pytest.approx(d, rel=1e-12, abs=1e-12)


def test_geometry_validation():
    with pytest.raises(ValueError):
        intra_class_variance(np.ones((3, 2)), [0, 1, 1], delta=1.0)
    with pytest.raises(ValueError):
        inter_class_distance(np.ones((3, 2)), [0, 0, 0])


def _blobs(rng, n=300, k=3, dim=5, spread=0.3):
    centers = rng.normal(scale=4, size=(k, dim))
    labels = np.arange(n) % k
    return centers[labels] + rng.normal(scale=spread, size=(n, dim)), labels


def test_linear_probe_separable_and_agrees_with_sklearn(rng):
    X, y = _blobs(rng, spread=2.0)
    split = NodeSplit(np.arange(0, 150), np.arange(150, 200), np.arange(200, 300))
    ours = linear_probe(X, y, split)
    ref = LogisticRegression(max_iter=2000).fit(X[split.train], y[split.train]).score(X[split.test], y[split.test])
    assert abs(ours - ref) <= 0.03
    Xs, ys = _blobs(rng, spread=0.1)
    assert linear_probe(Xs, ys, split) == 1.0


def test_linear_probe_is_rotation_and_scale_invariant(rng):
    X, y = _blobs(rng, spread=2.5)
    split = NodeSplit(np.arange(0, 60), np.arange(60, 100), np.arange(100, 300))
    Q = special_ortho_group.rvs(5, random_state=0)
    base = linear_probe(X, y, split)
    assert linear_probe(X @ Q, y, split) == pytest.approx(base, abs=0.01)
    assert linear_probe(50 * X, y, split) == pytest.approx(base, abs=1e-9)


def test_kmeans_recovers_blobs_and_is_seeded(rng):
    X, y = _blobs(rng)
    assign = kmeans(X, 3, restarts=5, seed=1)
    assert ari(assign, y) == pytest.approx(1.0)
    assert np.array_equal(assign, kmeans(X, 3, restarts=5, seed=1))
    res = kmeans_fit(X, 3, restarts=3, seed=2)
    assert np.all(np.diff(res.history) <= 1e-9)
    with pytest.raises(ValueError):
        kmeans(X, 0)


def test_kmeans_with_duplicate_points_keeps_all_clusters():
    X = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]])
    assign = kmeans(X, 3, restarts=2, seed=0)
    assert len(set(assign)) >= 2


def test_link_scores_and_evaluation():
    Z = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
    np.testing.assert_allclose(link_scores(Z, [(0, 1), (0, 2)]), [1 / (1 + np.exp(-1)), 1 / (1 + np.exp(1))])
    split = EdgeSplit([(0, 1)], [(0, 1)], [(0, 1)], [(1, 2)], [(0, 2)])
    rep = evaluate_link(Z, split)
    assert rep.auc == 1.0 and rep.ap == 1.0


def test_eval_report_omits_missing_fields(tmp_path):
    rep = EvalReport(accuracy=0.5)
    assert rep.to_json() == {"accuracy": 0.5}
    rep.write(tmp_path / "e.json")
    assert (tmp_path / "e.json").read_text().strip().startswith("{")
