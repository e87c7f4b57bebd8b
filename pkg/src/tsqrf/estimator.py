"""Forest weights and weighted-quantile inversion.

A tree assigns weight 1/|leaf| to each training index resident in the leaf
containing the query; the forest averages tree weights, and the quantile
estimate inverts the weighted empirical distribution: it is the smallest
response whose cumulative weight reaches tau times the realized total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LagDataset
from .forest import DoubleSample, Forest, Node, Tree, enumerate_double_samples

__all__ = [
    "WeightVector",
    "tree_weights",
    "forest_weights",
    "forest_weight_matrix",
    "weighted_quantile",
    "predict_quantiles",
    "score_diagnostic",
    "stump_tree",
    "exact_weights",
]

_CHUNK = 512


@dataclass(frozen=True)
class WeightVector:
    """Sparse per-training-point forest weights for one query point.

    ``total`` is the fraction of trees whose leaf at the query is nonempty,
    computed exactly as nonempty_trees / num_trees.
    """

    indices: np.ndarray
    values: np.ndarray
    total: float

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if indices.size != values.size:
            raise ValueError("indices and values must have equal length")
        if np.any(values < 0):
            raise ValueError("weights must be nonnegative")
        indices.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "values", values)

    def as_dict(self) -> dict[int, float]:
        return {int(t): float(w) for t, w in zip(self.indices, self.values)}


def _leaf_members(tree: Tree) -> dict[int, np.ndarray]:
    cached = getattr(tree, "_leaf_csr", None)
    if cached is None:
        cached = {
            nid: nd.i_members if nd.i_members is not None else np.empty(0, dtype=int)
            for nid, nd in enumerate(tree.nodes)
            if nd.is_leaf
        }
        tree._leaf_csr = cached
    return cached


def tree_weights(tree: Tree, dataset: LagDataset, x) -> dict[int, float]:
    """Weights 1/|leaf| on the I-indices of the leaf at x; {} if empty."""
    members = _leaf_members(tree)[int(tree.leaf_assign(np.asarray(x, dtype=float).reshape(1, -1))[0])]
    if members.size and int(members.max()) >= len(dataset):
        raise ValueError("tree references indices outside the dataset")
    if members.size == 0:
        return {}
    w = 1.0 / members.size
    return {int(t): w for t in members}


def forest_weight_matrix(forest: Forest, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense (n_queries, n_train) weight matrix plus exact per-query totals."""
    queries = np.asarray(queries, dtype=float)
    if queries.ndim != 2 or queries.shape[1] != forest.p:
        raise ValueError(f"queries must have {forest.p} columns")
    nq = queries.shape[0]
    n = len(forest.train)
    weights = np.zeros((nq, n))
    nonempty = np.zeros(nq, dtype=np.int64)
    for tree in forest.trees:
        leaf_ids = tree.leaf_assign(queries)
        members = _leaf_members(tree)
        for nid in np.unique(leaf_ids):
            mem = members[int(nid)]
            rows = np.flatnonzero(leaf_ids == nid)
            if mem.size == 0:
                continue
            weights[np.ix_(rows, mem)] += 1.0 / mem.size
            nonempty[rows] += 1
    weights /= forest.num_trees
    totals = nonempty / forest.num_trees
    return weights, totals


def forest_weights(forest: Forest, x) -> WeightVector:
    """Average of tree weights at one query point, as a sparse vector."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    row, totals = forest_weight_matrix(forest, x)
    idx = np.flatnonzero(row[0] > 0)
    return WeightVector(indices=idx, values=row[0, idx], total=float(totals[0]))


def weighted_quantile(weights: WeightVector, responses, tau: float) -> float:
    """Smallest support response whose cumulative weight reaches tau * total.

    Equal responses pool their weight before the threshold comparison, so
    the result matches the infimum of {y : sum_t w_t (tau - 1{Y_t <= y}) <= 0}
    restricted to the support.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    if weights.total <= 0.0:
        raise ValueError("no tree covered the query point")
    responses = np.asarray(responses, dtype=float)
    pos = weights.values > 0
    y = responses[weights.indices[pos]]
    w = weights.values[pos]
    order = np.argsort(y)
    ys = y[order]
    ws = w[order]
    starts = np.r_[0, np.flatnonzero(ys[1:] > ys[:-1]) + 1]
    cum = np.cumsum(np.add.reduceat(ws, starts))
    threshold = tau * weights.total
    hit = np.flatnonzero(cum >= threshold)
    g = int(hit[0]) if hit.size else starts.size - 1
    return float(ys[starts[g]])


def predict_quantiles(forest: Forest, queries, taus) -> np.ndarray:
    """Batch quantile estimates: entry (i, j) inverts the weights of query i at tau j.

    Weights are computed once per query and reused across all tau levels.
    """
    queries = np.asarray(queries, dtype=float)
    if queries.ndim != 2:
        raise ValueError("queries must be a 2-D array")
    taus = [float(t) for t in np.asarray(taus, dtype=float).reshape(-1)]
    if any(not 0.0 < t < 1.0 for t in taus):
        raise ValueError("taus must lie in (0, 1)")
    y = forest.train.y
    order = np.argsort(y)
    ys = y[order]
    starts = np.r_[0, np.flatnonzero(ys[1:] > ys[:-1]) + 1]
    group_values = ys[starts]
    out = np.empty((queries.shape[0], len(taus)))
    uncovered: list[int] = []
    for lo in range(0, queries.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, queries.shape[0])
        weights, totals = forest_weight_matrix(forest, queries[lo:hi])
        bad = np.flatnonzero(totals <= 0)
        if bad.size:
            uncovered.extend(int(b) + lo for b in bad)
            continue
        cum = np.cumsum(np.add.reduceat(weights[:, order], starts, axis=1), axis=1)
        for j, tau in enumerate(taus):
            mask = cum >= (tau * totals)[:, None]
            idx = mask.argmax(axis=1)
            idx = np.where(mask.any(axis=1), idx, starts.size - 1)
            out[lo:hi, j] = group_values[idx]
    if uncovered:
        raise ValueError(f"no tree covered query rows {sorted(uncovered)}")
    return out


def score_diagnostic(forest: Forest, x, q_hat: float, tau: float) -> tuple[float, float]:
    """Estimating-equation residual at q_hat and its weight bound.

    Returns (sum_t w_t (tau - 1{Y_t <= q_hat}), max_t w_t); with distinct
    responses the inversion rule guarantees |score| <= bound.
    """
    w = forest_weights(forest, x)
    if w.values.size == 0:
        return 0.0, 0.0
    y = forest.train.y[w.indices]
    score = float(np.sum(w.values * (tau - (y <= q_hat))))
    return score, float(w.values.max())


def stump_tree(dataset: LagDataset, ds: DoubleSample) -> Tree:
    """Single-leaf tree over the I-half; deterministic given the double-sample."""
    node = Node(i_members=np.sort(ds.a_i), i_count=int(ds.a_i.size), j_count=int(ds.a_j.size))
    return Tree(nodes=[node], double_sample=ds, p=dataset.p)


def exact_weights(dataset: LagDataset, s: int, x, tree_fn=None) -> np.ndarray:
    """Dense weights averaged over ALL double-samples of size s (tiny-N oracle).

    ``tree_fn(dataset, ds)`` supplies the per-double-sample tree; defaults to
    the single-leaf stump so the average is purely over double-sample choice.
    """
    if tree_fn is None:
        tree_fn = stump_tree
    out = np.zeros(len(dataset))
    samples = enumerate_double_samples(len(dataset), s)
    for ds in samples:
        for t, w in tree_weights(tree_fn(dataset, ds), dataset, x).items():
            out[t] += w
    return out / len(samples)
