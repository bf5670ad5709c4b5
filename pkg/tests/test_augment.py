import numpy as np
import pytest
from scipy import stats

from graphrank import AugmentConfig, drop_edges, make_views, mask_features


def test_drop_probability_extremes(small_sbm, rng):
    g = small_sbm.graph
    assert drop_edges(g, 0.0, rng) == g
    assert drop_edges(g, 1.0, rng).num_undirected_edges == 0


def test_dropped_view_is_subgraph(small_sbm, rng):
    g = small_sbm.graph
    kept = drop_edges(g, 0.4, rng)
    kept.check_invariants()
    assert {tuple(e) for e in kept.edges()} <= {tuple(e) for e in g.edges()}


def test_edge_keep_rate_binomial(small_sbm):
    rng = np.random.default_rng(0)
    m = small_sbm.graph.num_undirected_edges
    trials = 200
    kept = sum(drop_edges(small_sbm.graph, 0.3, rng).num_undirected_edges for _ in range(trials))
    mean, sd = 0.7 * m * trials, np.sqrt(m * trials * 0.3 * 0.7)
    assert abs(kept - mean) < 3 * sd


def test_feature_mask_zeroes_whole_columns(rng):
    X = rng.normal(size=(50, 40)) + 5.0
    masked = mask_features(X, 0.5, rng)
    zero_cols = np.all(masked == 0, axis=0)
    assert np.array_equal(masked[:, ~zero_cols], X[:, ~zero_cols])
    assert 0 < zero_cols.sum() < 40


def test_feature_mask_rate_chi_square():
    rng = np.random.default_rng(5)
    X = np.ones((2, 10))
    counts = np.zeros(10)
    trials = 2000
    for _ in range(trials):
        counts += mask_features(X, 0.25, rng)[0] == 0
    # each column masked ~ Binomial(trials, 0.25); test uniformity across columns and the overall rate
    assert stats.chisquare(counts).pvalue > 1e-3
    total = counts.sum()
    assert abs(total - 0.25 * 10 * trials) < 3 * np.sqrt(10 * trials * 0.25 * 0.75)


def test_mask_preserves_dtype_and_rejects_empty(rng):
    X = np.ones((3, 4), dtype=np.float32)
    assert mask_features(X, 0.5, rng).dtype == np.float32
    with pytest.raises(ValueError):
        mask_features(np.ones((3, 0)), 0.5, rng)


def test_views_are_reproducible_and_independent(small_sbm):
    cfg = AugmentConfig(0.3, 0.3, 0.3, 0.3)
    a1, a2 = make_views(small_sbm, cfg, np.random.default_rng(9))
    b1, b2 = make_views(small_sbm, cfg, np.random.default_rng(9))
    assert a1.graph == b1.graph and np.array_equal(a2.features, b2.features)
    assert a1.graph != a2.graph


def test_config_range_checked():
    with pytest.raises(ValueError):
        AugmentConfig(p_e1=1.2)
