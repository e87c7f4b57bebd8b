"""Honest double-sample trees and forests over lag-embedded series.

Each tree is grown from a disjoint index pair: the J-half places splits,
the I-half populates leaves. Splits must route at least a fraction
``omega`` of the parent's J-points into each child and leave at least
``min_leaf_k`` I-points on each side; growth stops once a node holds fewer
than ``2 * min_leaf_k`` I-points.
"""

from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .data import LagDataset

__all__ = [
    "ForestConfig",
    "DoubleSample",
    "Node",
    "Tree",
    "Forest",
    "enumerate_double_samples",
    "draw_double_sample",
    "choose_split_directions",
    "best_split",
    "grow_tree",
    "fit_forest",
    "leaf_of",
    "leaf_diameter_stats",
    "LeafDiameterStats",
    "forest_to_doc",
    "forest_from_doc",
    "FOREST_FORMAT",
    "FOREST_FORMAT_VERSION",
]

FOREST_FORMAT = "tsqrf-forest"
FOREST_FORMAT_VERSION = 1

ENUMERATION_CAP = 12


@dataclass(frozen=True)
class ForestConfig:
    """Tuning knobs of the honest forest.

    ``mtry_mean`` of None resolves to min(ceil(sqrt(p)) + 1, p) at fit time.
    ``tau_levels`` drive the split criterion only; prediction levels are free.
    """

    num_trees: int = 2000
    subsample_fraction: float = 0.5
    omega: float = 0.05
    min_leaf_k: int = 5
    mtry_mean: int | None = None
    tau_levels: tuple[float, ...] = (0.1, 0.5, 0.9)
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if not 0.0 < self.subsample_fraction < 1.0:
            raise ValueError("subsample_fraction must lie in (0, 1)")
        if not 0.0 < self.omega <= 0.2:
            raise ValueError("omega must lie in (0, 0.2]")
        if self.min_leaf_k < 1:
            raise ValueError("min_leaf_k must be >= 1")
        if self.mtry_mean is not None and self.mtry_mean < 1:
            raise ValueError("mtry_mean must be >= 1")
        taus = tuple(float(t) for t in self.tau_levels)
        if not taus or any(not 0.0 < t < 1.0 for t in taus):
            raise ValueError("tau_levels must be probabilities in (0, 1)")
        object.__setattr__(self, "tau_levels", taus)

    def subsample_size(self, n_train: int) -> int:
        if n_train < 2:
            raise ValueError("need at least 2 training pairs")
        return min(n_train, max(2, int(round(self.subsample_fraction * n_train))))

    def resolved_mtry(self, p: int) -> int:
        if self.mtry_mean is not None:
            return self.mtry_mean
        return min(math.ceil(math.sqrt(p)) + 1, p)

    def to_dict(self) -> dict:
        return {
            "num_trees": self.num_trees,
            "subsample_fraction": self.subsample_fraction,
            "omega": self.omega,
            "min_leaf_k": self.min_leaf_k,
            "mtry_mean": self.mtry_mean,
            "tau_levels": list(self.tau_levels),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestConfig":
        return cls(
            num_trees=int(d["num_trees"]),
            subsample_fraction=float(d["subsample_fraction"]),
            omega=float(d["omega"]),
            min_leaf_k=int(d["min_leaf_k"]),
            mtry_mean=None if d.get("mtry_mean") is None else int(d["mtry_mean"]),
            tau_levels=tuple(d["tau_levels"]),
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class DoubleSample:
    """Disjoint index pair: a_i estimates within leaves, a_j places splits."""

    a_i: np.ndarray
    a_j: np.ndarray

    def __post_init__(self):
        a_i = np.asarray(self.a_i, dtype=int)
        a_j = np.asarray(self.a_j, dtype=int)
        a_i = np.sort(a_i)
        a_j = np.sort(a_j)
        if a_i.size < 1 or a_j.size - a_i.size not in (0, 1):
            raise ValueError("halves must have sizes floor(s/2) and ceil(s/2)")
        if np.intersect1d(a_i, a_j).size:
            raise ValueError("double-sample halves must be disjoint")
        if a_i.size != np.unique(a_i).size or a_j.size != np.unique(a_j).size:
            raise ValueError("double-sample halves must not repeat indices")
        if min(a_i.min(), a_j.min()) < 0:
            raise ValueError("indices must be nonnegative")
        a_i.setflags(write=False)
        a_j.setflags(write=False)
        object.__setattr__(self, "a_i", a_i)
        object.__setattr__(self, "a_j", a_j)

    @property
    def s(self) -> int:
        return int(self.a_i.size + self.a_j.size)


def double_sample_count(n: int, s: int) -> int:
    """Closed-form number of ordered double-samples of size s out of n."""
    return math.comb(n, s) * math.comb(s, s // 2)


def enumerate_double_samples(n: int, s: int) -> list[DoubleSample]:
    """Exhaustively list every ordered double-sample (oracle use only).

    Capped at n <= 12 to guard against combinatorial blowup.
    """
    if n > ENUMERATION_CAP:
        raise ValueError(f"oracle enumeration capped at n <= {ENUMERATION_CAP}")
    if not 2 <= s <= n:
        raise ValueError("need 2 <= s <= n")
    half = s // 2
    out: list[DoubleSample] = []
    for subset in combinations(range(n), s):
        for a_i in combinations(subset, half):
            i_set = set(a_i)
            a_j = tuple(t for t in subset if t not in i_set)
            out.append(DoubleSample(a_i=np.array(a_i), a_j=np.array(a_j)))
    return out


def draw_double_sample(n: int, s: int, rng: np.random.Generator) -> DoubleSample:
    """Draw uniformly over all ordered double-samples of size s out of n."""
    if not 2 <= s <= n:
        raise ValueError("need 2 <= s <= n")
    subset = rng.choice(n, size=s, replace=False)
    perm = rng.permutation(subset)
    half = s // 2
    return DoubleSample(a_i=perm[:half], a_j=perm[half:])


def choose_split_directions(p: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Sample candidate split directions: mtry ~ min(max(Poisson(m), 1), p)."""
    if p < 1 or m < 1:
        raise ValueError("need p >= 1 and m >= 1")
    mtry = int(min(max(rng.poisson(m), 1), p))
    dirs = rng.choice(p, size=mtry, replace=False)
    return np.sort(dirs)


@dataclass
class Node:
    """Tree node; ``feature < 0`` marks a leaf."""

    feature: int = -1
    threshold: float = math.nan
    left: int = -1
    right: int = -1
    i_members: np.ndarray | None = None
    i_count: int = 0
    j_count: int = 0
    undersized: bool = False  # leaf I-count outside [k, 2k-1]

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class Tree:
    """A grown tree: node array, root at index 0, plus its double-sample."""

    nodes: list[Node]
    double_sample: DoubleSample
    p: int
    seed_key: int = 0

    def __post_init__(self):
        self._arrays = None
        self._leaf_csr = None

    def leaves(self) -> list[Node]:
        return [nd for nd in self.nodes if nd.is_leaf]

    def arrays(self):
        """Traversal arrays (feature, threshold, left, right), cached."""
        if self._arrays is None:
            feat = np.array([nd.feature for nd in self.nodes], dtype=np.int32)
            thr = np.array([nd.threshold for nd in self.nodes], dtype=float)
            left = np.array([nd.left for nd in self.nodes], dtype=np.int32)
            right = np.array([nd.right for nd in self.nodes], dtype=np.int32)
            self._arrays = (feat, thr, left, right)
        return self._arrays

    def leaf_assign(self, queries: np.ndarray) -> np.ndarray:
        """Leaf node ids for a (n, p) query matrix."""
        queries = np.asarray(queries, dtype=float)
        if queries.ndim != 2 or queries.shape[1] != self.p:
            raise ValueError(f"queries must have {self.p} columns")
        feat, thr, left, right = self.arrays()
        ids = np.zeros(queries.shape[0], dtype=np.int32)
        while True:
            active = feat[ids] >= 0
            if not active.any():
                return ids
            sub = ids[active]
            go_left = queries[active, feat[sub]] <= thr[sub]
            ids[active] = np.where(go_left, left[sub], right[sub])


def leaf_of(tree: Tree, x) -> int:
    """Node id of the leaf containing x (x[feature] <= threshold goes left)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != tree.p:
        raise ValueError(f"query must have dimension {tree.p}")
    return int(tree.leaf_assign(x[None, :])[0])


def _quantile_inverted_cdf(sorted_y: np.ndarray, tau: float) -> float:
    """Smallest value whose empirical CDF reaches tau (type-1 quantile)."""
    n = sorted_y.size
    rank = max(1, math.ceil(tau * n))
    return float(sorted_y[min(rank, n) - 1])


def _pseudo_outcomes(y_node: np.ndarray, taus: tuple[float, ...]) -> np.ndarray:
    """GRF quantile pseudo-outcomes against the parent node's quantiles.

    rho_t = 1{y_t > q_parent(tau)} - (1 - tau), one column per tau.
    """
    ys = np.sort(y_node)
    out = np.empty((y_node.size, len(taus)))
    for c, tau in enumerate(taus):
        q = _quantile_inverted_cdf(ys, tau)
        out[:, c] = (y_node > q).astype(float) - (1.0 - tau)
    return out


def best_split(j_idx, i_idx, dataset: LagDataset, directions, config: ForestConfig):
    """Pick the constraint-satisfying split maximizing the gain criterion.

    Candidate positions are the in-node J-sample coordinate values; each
    child must receive >= ceil(omega * nJ) J-points and >= k I-points.
    Returns (direction, position) or None. Ties resolve to the smallest
    direction index, then the smallest position.
    """
    j_idx = np.asarray(j_idx, dtype=int)
    i_idx = np.asarray(i_idx, dtype=int)
    n_j = j_idx.size
    n_i = i_idx.size
    if n_j < 2 or n_i < 2 * config.min_leaf_k:
        return None
    k = config.min_leaf_k
    w_j = math.ceil(config.omega * n_j)
    rho = _pseudo_outcomes(dataset.y[j_idx], config.tau_levels)

    best = None  # (delta, direction, zeta)
    for d in sorted(int(v) for v in np.asarray(directions).reshape(-1)):
        xj = dataset.x[j_idx, d]
        order = np.argsort(xj)
        xs = xj[order]
        counts = np.flatnonzero(xs[1:] > xs[:-1]) + 1
        if counts.size == 0:
            continue
        zetas = xs[counts - 1]
        xi_sorted = np.sort(dataset.x[i_idx, d])
        left_i = np.searchsorted(xi_sorted, zetas, side="right")
        valid = (
            (counts >= w_j)
            & (n_j - counts >= w_j)
            & (left_i >= k)
            & (n_i - left_i >= k)
        )
        if not valid.any():
            continue
        prefix = np.cumsum(rho[order], axis=0)
        left_sum = prefix[counts - 1]
        total = prefix[-1]
        with np.errstate(invalid="ignore"):
            delta = (
                (left_sum**2).sum(axis=1) / counts
                + ((total - left_sum) ** 2).sum(axis=1) / (n_j - counts)
            )
        delta[~valid] = -np.inf
        pick = int(np.argmax(delta))
        if delta[pick] == -np.inf:
            continue
        if best is None or delta[pick] > best[0]:
            best = (float(delta[pick]), d, float(zetas[pick]))
    if best is None:
        return None
    return best[1], best[2]


def grow_tree(dataset: LagDataset, ds: DoubleSample, config: ForestConfig,
              rng: np.random.Generator, seed_key: int = 0) -> Tree:
    """Grow one honest tree: splits read only J-responses and covariates.

    Nodes expand depth-first, left child first, so the tree is a pure
    function of (dataset, ds, config, rng state).
    """
    p = dataset.p
    if max(int(ds.a_i.max()), int(ds.a_j.max())) >= len(dataset):
        raise ValueError("double-sample indices out of range for dataset")
    k = config.min_leaf_k
    m = config.resolved_mtry(p)
    nodes: list[Node] = [Node()]
    work = [(0, ds.a_i, ds.a_j)]
    while work:
        nid, i_idx, j_idx = work.pop()
        node = nodes[nid]
        node.i_count = int(i_idx.size)
        node.j_count = int(j_idx.size)
        split = None
        if i_idx.size >= 2 * k:
            dirs = choose_split_directions(p, m, rng)
            split = best_split(j_idx, i_idx, dataset, dirs, config)
        if split is None:
            members = np.sort(i_idx)
            node.i_members = members
            node.undersized = not (k <= members.size <= 2 * k - 1)
            continue
        d, zeta = split
        node.feature = d
        node.threshold = zeta
        go_left_i = dataset.x[i_idx, d] <= zeta
        go_left_j = dataset.x[j_idx, d] <= zeta
        left_id = len(nodes)
        nodes.append(Node())
        right_id = len(nodes)
        nodes.append(Node())
        node.left = left_id
        node.right = right_id
        # LIFO: push right first so the left child expands first
        work.append((right_id, i_idx[~go_left_i], j_idx[~go_left_j]))
        work.append((left_id, i_idx[go_left_i], j_idx[go_left_j]))
    return Tree(nodes=nodes, double_sample=ds, p=p, seed_key=seed_key)


@dataclass
class Forest:
    """Ensemble of honest trees plus the training data they index into."""

    trees: list[Tree]
    config: ForestConfig
    train: LagDataset

    @property
    def num_trees(self) -> int:
        return len(self.trees)

    @property
    def p(self) -> int:
        return self.train.p


def _tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _grow_range(dataset: LagDataset, config: ForestConfig, indices: list[int]) -> list[Tree]:
    s = config.subsample_size(len(dataset))
    out = []
    for b in indices:
        rng = _tree_rng(config.seed, b)
        ds = draw_double_sample(len(dataset), s, rng)
        out.append(grow_tree(dataset, ds, config, rng, seed_key=b))
    return out


def fit_forest(dataset: LagDataset, config: ForestConfig, threads: int = 1) -> Forest:
    """Grow the configured number of trees over the dataset.

    Each tree seeds its own generator from (config.seed, tree index), so the
    result is identical whether trees are grown serially or in parallel.
    """
    indices = list(range(config.num_trees))
    if threads <= 1 or config.num_trees == 1:
        trees = _grow_range(dataset, config, indices)
    else:
        chunks = np.array_split(indices, min(threads, len(indices)))
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            futures = [
                pool.submit(_grow_range, dataset, config, [int(b) for b in chunk])
                for chunk in chunks
            ]
            parts = [f.result() for f in futures]
        trees = [t for part in parts for t in part]
        trees.sort(key=lambda t: t.seed_key)
    return Forest(trees=trees, config=config, train=dataset)


@dataclass(frozen=True)
class LeafDiameterStats:
    per_tree_mean: np.ndarray
    per_tree_max: np.ndarray
    mean: float
    max: float


def leaf_diameter_stats(forest: Forest, probe_points) -> LeafDiameterStats:
    """Euclidean diameters of probed leaves, boxes clipped to the data range."""
    probes = np.asarray(probe_points, dtype=float)
    if probes.ndim != 2 or probes.shape[1] != forest.p:
        raise ValueError(f"probe points must have {forest.p} columns")
    lo_all = forest.train.x.min(axis=0)
    hi_all = forest.train.x.max(axis=0)
    per_mean = np.empty(forest.num_trees)
    per_max = np.empty(forest.num_trees)
    for ti, tree in enumerate(forest.trees):
        diams = np.empty(probes.shape[0])
        for qi, x in enumerate(probes):
            lo = lo_all.copy()
            hi = hi_all.copy()
            nid = 0
            node = tree.nodes[nid]
            while not node.is_leaf:
                f, z = node.feature, node.threshold
                if x[f] <= z:
                    hi[f] = min(hi[f], z)
                    nid = node.left
                else:
                    lo[f] = max(lo[f], z)
                    nid = node.right
                node = tree.nodes[nid]
            diams[qi] = math.sqrt(float(np.sum(np.maximum(hi - lo, 0.0) ** 2)))
        per_mean[ti] = diams.mean()
        per_max[ti] = diams.max()
    return LeafDiameterStats(
        per_tree_mean=per_mean,
        per_tree_max=per_max,
        mean=float(per_mean.mean()),
        max=float(per_max.max()),
    )


def _node_to_doc(node: Node) -> dict:
    if node.is_leaf:
        return {
            "leaf": [int(t) for t in node.i_members],
            "u": bool(node.undersized),
            "ic": node.i_count,
            "jc": node.j_count,
        }
    return {
        "f": node.feature,
        "z": node.threshold,
        "l": node.left,
        "r": node.right,
        "ic": node.i_count,
        "jc": node.j_count,
    }


def _node_from_doc(doc: dict) -> Node:
    if "leaf" in doc:
        return Node(
            i_members=np.array(doc["leaf"], dtype=int),
            undersized=bool(doc["u"]),
            i_count=int(doc["ic"]),
            j_count=int(doc["jc"]),
        )
    return Node(
        feature=int(doc["f"]),
        threshold=float(doc["z"]),
        left=int(doc["l"]),
        right=int(doc["r"]),
        i_count=int(doc["ic"]),
        j_count=int(doc["jc"]),
    )


def forest_to_doc(forest: Forest) -> dict:
    """Serialize a fitted forest (including training data) to a JSON document."""
    return {
        "format": FOREST_FORMAT,
        "version": FOREST_FORMAT_VERSION,
        "config": forest.config.to_dict(),
        "p": forest.p,
        "train": {
            "x": forest.train.x.tolist(),
            "y": forest.train.y.tolist(),
            "t_index": forest.train.t_index.tolist(),
        },
        "trees": [
            {
                "seed_key": int(tree.seed_key),
                "a_i": [int(t) for t in tree.double_sample.a_i],
                "a_j": [int(t) for t in tree.double_sample.a_j],
                "nodes": [_node_to_doc(nd) for nd in tree.nodes],
            }
            for tree in forest.trees
        ],
    }


def forest_from_doc(doc: dict) -> Forest:
    """Rebuild a forest from its serialized document; checks format/version."""
    if doc.get("format") != FOREST_FORMAT:
        raise ValueError(f"not a {FOREST_FORMAT} document")
    if doc.get("version") != FOREST_FORMAT_VERSION:
        raise ValueError(
            f"unsupported forest format version {doc.get('version')!r}; "
            f"this build reads version {FOREST_FORMAT_VERSION}"
        )
    config = ForestConfig.from_dict(doc["config"])
    p = int(doc["p"])
    train = LagDataset(
        x=np.array(doc["train"]["x"], dtype=float).reshape(-1, p),
        y=np.array(doc["train"]["y"], dtype=float),
        p=p,
        t_index=np.array(doc["train"]["t_index"], dtype=int),
    )
    trees = []
    for tdoc in doc["trees"]:
        ds = DoubleSample(a_i=np.array(tdoc["a_i"]), a_j=np.array(tdoc["a_j"]))
        nodes = [_node_from_doc(nd) for nd in tdoc["nodes"]]
        trees.append(Tree(nodes=nodes, double_sample=ds, p=p, seed_key=int(tdoc["seed_key"])))
    return Forest(trees=trees, config=config, train=train)
