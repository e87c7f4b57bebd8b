import numpy as np
import pytest
from numpy.testing import assert_allclose

from tsqrf import (
    DoubleSample,
    Forest,
    ForestConfig,
    WeightVector,
    exact_weights,
    forest_weights,
    predict_quantiles,
    score_diagnostic,
    tree_weights,
    weighted_quantile,
)
from tsqrf.data import LagDataset
from tsqrf.estimator import forest_weight_matrix, stump_tree
from tsqrf.forest import Node, Tree, draw_double_sample


def brute_force_quantile(weights: WeightVector, responses, tau):
    """Direct evaluation of the score-inversion infimum over the support."""
    responses = np.asarray(responses, dtype=float)
    dense = np.zeros(responses.size)
    for t, w in zip(weights.indices, weights.values):
        dense[t] += w
    support = sorted({responses[t] for t, w in zip(weights.indices, weights.values) if w > 0})
    for y in support:
        score = sum(dense[t] * (tau - (1.0 if responses[t] <= y else 0.0))
                    for t in range(responses.size))
        if score <= 0.0:
            return y
    return support[-1]


def _leaf_tree(members, p=1, n_total=10):
    """Hand-built single-leaf tree; the double-sample is placeholder metadata."""
    node = Node(i_members=np.array(members, dtype=int), i_count=len(members), j_count=1)
    ds = DoubleSample(a_i=np.array([0]), a_j=np.array([1]))
    return Tree(nodes=[node], double_sample=ds, p=p)


def _dataset(n=10, p=1, seed=0):
    rng = np.random.default_rng(seed)
    return LagDataset(x=rng.normal(size=(n, p)), y=rng.normal(size=n),
                      t_index=np.arange(p + 1, p + 1 + n), p=p)


# ---------------------------------------------------------------- tree weights

def test_tree_weights_uniform_within_leaf():
    ds = _dataset(10)
    tree = _leaf_tree([3, 7])
    assert tree_weights(tree, ds, [0.0]) == {3: 0.5, 7: 0.5}


def test_tree_weights_empty_leaf():
    ds = _dataset(10)
    tree = _leaf_tree([])
    assert tree_weights(tree, ds, [0.0]) == {}


def test_tree_weights_five_members_sum_to_one():
    ds = _dataset(10)
    tree = _leaf_tree([0, 2, 4, 6, 8])
    w = tree_weights(tree, ds, [1.0])
    assert set(w) == {0, 2, 4, 6, 8}
    assert_allclose(list(w.values()), [0.2] * 5)
    assert abs(sum(w.values()) - 1.0) <= 1e-15


# ---------------------------------------------------------------- forest weights

def _forest_of(trees, ds):
    return Forest(trees=trees, config=ForestConfig(num_trees=len(trees)), train=ds)


def test_forest_weights_averages_trees():
    ds = _dataset(10)
    forest = _forest_of([_leaf_tree([1]), _leaf_tree([2])], ds)
    w = forest_weights(forest, [0.0])
    assert w.as_dict() == {1: 0.5, 2: 0.5}
    assert w.total == 1.0


def test_forest_weights_single_leaf_trees_uniform():
    ds = _dataset(12)
    members = [0, 3, 5, 7]
    forest = _forest_of([_leaf_tree(members) for _ in range(5)], ds)
    w = forest_weights(forest, [0.4])
    assert_allclose(list(w.as_dict().values()), [0.25] * 4)


def test_forest_weights_total_counts_empty_leaves_exactly():
    ds = _dataset(10)
    forest = _forest_of([_leaf_tree([1, 2]), _leaf_tree([]), _leaf_tree([4]), _leaf_tree([])], ds)
    w = forest_weights(forest, [0.0])
    assert w.total == 1.0 - 2 / 4  # exact, not a float sum


def test_forest_weights_total_one_on_fitted_forest(small_forest):
    queries = small_forest.train.x[:40]
    _, totals = forest_weight_matrix(small_forest, queries)
    assert_allclose(totals, 1.0, rtol=0)


# ---------------------------------------------------------------- weighted quantile

def test_weighted_quantile_uniform_quarters():
    w = WeightVector(indices=np.arange(4), values=np.full(4, 0.25), total=1.0)
    assert weighted_quantile(w, [1.0, 2.0, 3.0, 4.0], 0.5) == 2.0


def test_weighted_quantile_single_support_point():
    w = WeightVector(indices=np.array([2]), values=np.array([0.7]), total=0.7)
    for tau in (0.05, 0.5, 0.95):
        assert weighted_quantile(w, [0.0, 0.0, 5.0], tau) == 5.0


def test_weighted_quantile_no_coverage():
    w = WeightVector(indices=np.array([], dtype=int), values=np.array([]), total=0.0)
    with pytest.raises(ValueError, match="no tree covered"):
        weighted_quantile(w, [1.0], 0.5)


def test_weighted_quantile_ties_pool_before_comparison():
    responses = np.array([1.0, 1.0, 2.0])
    w = WeightVector(indices=np.arange(3), values=np.array([0.3, 0.3, 0.4]), total=1.0)
    got = weighted_quantile(w, responses, 0.5)
    assert got == 1.0
    assert got == brute_force_quantile(w, responses, 0.5)


def test_weighted_quantile_matches_brute_force_randomized(rng):
    for _ in range(200):
        n = int(rng.integers(1, 40))
        responses = rng.normal(size=n)
        if rng.random() < 0.5:
            responses = np.round(responses)  # force ties
        values = rng.random(size=n)
        values[rng.random(size=n) < 0.2] = 0.0
        if values.sum() == 0:
            values[0] = 0.5
        keep = values > 0
        w = WeightVector(indices=np.arange(n)[keep], values=values[keep],
                         total=float(values.sum()))
        for tau in (0.1, 0.5, 0.9):
            assert weighted_quantile(w, responses, tau) == brute_force_quantile(w, responses, tau)


def test_weighted_quantile_monotone_in_tau(rng):
    n = 25
    responses = rng.normal(size=n)
    values = rng.random(size=n)
    w = WeightVector(indices=np.arange(n), values=values, total=float(values.sum()))
    taus = np.linspace(0.02, 0.98, 25)
    estimates = [weighted_quantile(w, responses, t) for t in taus]
    assert np.all(np.diff(estimates) >= 0)


def test_weighted_quantile_translation_equivariance(rng):
    n = 30
    responses = rng.normal(size=n)
    values = rng.random(size=n)
    w = WeightVector(indices=np.arange(n), values=values, total=float(values.sum()))
    for c in (-3.5, 0.25, 11.0):
        for tau in (0.1, 0.5, 0.9):
            assert weighted_quantile(w, responses + c, tau) == weighted_quantile(w, responses, tau) + c


def test_weighted_quantile_renormalizes_below_full_total():
    # half the trees are empty: total 0.5, threshold semantics tau * total
    ds = _dataset(4)
    forest = _forest_of([_leaf_tree([0, 1, 2, 3], n_total=4), _leaf_tree([], n_total=4)], ds)
    w = forest_weights(forest, [0.0])
    assert w.total == 0.5
    got = weighted_quantile(w, ds.y, 0.5)
    assert got == brute_force_quantile(w, ds.y, 0.5)
    assert got == np.sort(ds.y)[1]  # median of 4 equally weighted points


# ---------------------------------------------------------------- batch prediction

def test_predict_quantiles_duplicate_rows_identical(small_forest):
    q = np.vstack([small_forest.train.x[3], small_forest.train.x[3]])
    preds = predict_quantiles(small_forest, q, [0.2, 0.8])
    assert_allclose(preds[0], preds[1], rtol=0)


def test_predict_quantiles_rows_nondecreasing(small_forest):
    preds = predict_quantiles(small_forest, small_forest.train.x[:60], [0.05, 0.3, 0.5, 0.7, 0.95])
    assert np.all(np.diff(preds, axis=1) >= 0)


def test_predict_single_leaf_forest_equals_empirical_quantiles():
    ds = _dataset(9)
    members = list(range(9))
    forest = _forest_of([_leaf_tree(members, n_total=9)], ds)
    taus = [0.1, 0.5, 0.9]
    preds = predict_quantiles(forest, np.zeros((1, 1)), taus)
    ys = np.sort(ds.y)
    # inverted-CDF empirical quantile: smallest y with rank fraction >= tau
    want = [ys[max(1, int(np.ceil(t * 9))) - 1] for t in taus]
    assert_allclose(preds[0], want, rtol=0)


def test_predict_quantiles_matches_per_query_path(small_forest):
    queries = small_forest.train.x[10:30]
    taus = [0.1, 0.5, 0.9]
    batch = predict_quantiles(small_forest, queries, taus)
    for i, x in enumerate(queries):
        w = forest_weights(small_forest, x)
        for j, tau in enumerate(taus):
            assert batch[i, j] == weighted_quantile(w, small_forest.train.y, tau)


def test_predict_quantiles_uncovered_rows_error():
    ds = _dataset(6)
    forest = _forest_of([_leaf_tree([], n_total=6)], ds)
    with pytest.raises(ValueError, match="rows \\[0, 1\\]"):
        predict_quantiles(forest, np.zeros((2, 1)), [0.5])


# ---------------------------------------------------------------- score diagnostic

def test_score_diagnostic_uniform_case():
    ds = LagDataset(x=np.zeros((4, 1)), y=np.array([1.0, 2.0, 3.0, 4.0]),
                    p=1, t_index=np.arange(2, 6))
    forest = _forest_of([_leaf_tree([0, 1, 2, 3], n_total=4)], ds)
    score, bound = score_diagnostic(forest, [0.0], q_hat=2.0, tau=0.5)
    assert score == 0.0
    assert bound == 0.25


def test_score_diagnostic_single_point():
    ds = _dataset(5)
    forest = _forest_of([_leaf_tree([2], n_total=5)], ds)
    tau = 0.3
    q_hat = weighted_quantile(forest_weights(forest, [0.0]), ds.y, tau)
    score, bound = score_diagnostic(forest, [0.0], q_hat, tau)
    assert score == tau - 1.0 <= 0.0
    assert abs(score) <= 1.0 == bound


def test_score_bound_property_sweep(small_forest, rng):
    lo = small_forest.train.x.min(axis=0)
    hi = small_forest.train.x.max(axis=0)
    for _ in range(100):
        x = lo + (hi - lo) * rng.random(size=2)
        tau = float(rng.uniform(0.05, 0.95))
        w = forest_weights(small_forest, x)
        q_hat = weighted_quantile(w, small_forest.train.y, tau)
        score, bound = score_diagnostic(small_forest, x, q_hat, tau)
        assert abs(score) <= bound + 1e-12


# ---------------------------------------------------------------- exact-GRF oracle

def test_exact_weights_symmetric_stumps():
    ds = _dataset(6)
    w = exact_weights(ds, 4, x=[0.0])
    # every index is equally likely to sit in the I-half of size 2
    assert_allclose(w, np.full(6, 1.0 / 6.0), atol=1e-12)
    assert_allclose(w.sum(), 1.0, atol=1e-12)


def test_sampled_weights_converge_to_exact(rng):
    ds = _dataset(7, seed=3)
    s = 4
    exact = exact_weights(ds, s, x=[0.0])
    draws = 4000
    acc = np.zeros((draws, 7))
    for b in range(draws):
        sample = draw_double_sample(7, s, rng)
        for t, w in tree_weights(stump_tree(ds, sample), ds, [0.0]).items():
            acc[b, t] = w
    mc = acc.mean(axis=0)
    sigma = acc.std(axis=0, ddof=1) / np.sqrt(draws)
    assert np.all(np.abs(mc - exact) <= 3.0 * sigma + 1e-12)
