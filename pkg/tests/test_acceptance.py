"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. The two consistency /
level-reproduction studies take a few minutes; everything else is fast.
"""

import csv
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tsqrf import (
    DgpSpec,
    ForestConfig,
    Scenario,
    WeightVector,
    coverage_table,
    draw_double_sample,
    embed,
    enumerate_double_samples,
    fit_forest,
    forest_weights,
    grow_tree,
    leaf_diameter_stats,
    run_simulation,
    score_diagnostic,
    simulate_path,
    weighted_quantile,
)
from tsqrf.cli import main as cli_main
from tsqrf.data import LagDataset
from tsqrf.forest import double_sample_count


def _report(num: int, description: str, passed: bool, detail: str = ""):
    status = "PASS" if passed else "FAIL"
    suffix = f" [{detail}]" if detail else ""
    print(f"[acceptance] criterion {num:2d} {status}: {description}{suffix}")
    assert passed, f"criterion {num} failed: {description}{suffix}"


def _brute_force_quantile(weights: WeightVector, responses, tau):
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


def test_criterion_01_weighted_quantile_oracle():
    rng = np.random.default_rng(101)
    checked = 0
    # exhaustive small supports, including tie patterns
    for n in range(1, 7):
        for _ in range(50):
            responses = rng.normal(size=n)
            if rng.random() < 0.5:
                responses = np.round(responses * 2) / 2
            values = rng.random(size=n)
            w = WeightVector(indices=np.arange(n), values=values, total=float(values.sum()))
            for tau in np.linspace(0.05, 0.95, 19):
                assert weighted_quantile(w, responses, float(tau)) == \
                    _brute_force_quantile(w, responses, float(tau))
                checked += 1
    # 1000 randomized larger cases
    for _ in range(1000):
        n = int(rng.integers(2, 60))
        responses = rng.normal(size=n)
        if rng.random() < 0.3:
            responses = np.round(responses)
        values = rng.random(size=n)
        values[rng.random(size=n) < 0.25] = 0.0
        if values.sum() == 0:
            values[int(rng.integers(n))] = 1.0
        keep = values > 0
        w = WeightVector(indices=np.arange(n)[keep], values=values[keep],
                         total=float(values.sum()))
        tau = float(rng.uniform(0.01, 0.99))
        assert weighted_quantile(w, responses, tau) == _brute_force_quantile(w, responses, tau)
        checked += 1
    _report(1, "weighted quantile equals brute-force inversion", True, f"{checked} cases exact")


# the tiny-instance enumeration listed in the source material for T=5, s=4
_APPENDIX_TABLE = [
    ((1, 2), (3, 4)), ((1, 2), (3, 5)), ((1, 2), (4, 5)),
    ((1, 3), (2, 4)), ((1, 3), (2, 5)), ((1, 3), (4, 5)),
    ((1, 4), (2, 3)), ((1, 4), (2, 5)), ((1, 4), (3, 5)),
    ((1, 5), (2, 3)), ((1, 5), (2, 4)), ((1, 5), (3, 4)),
    ((2, 3), (1, 4)), ((2, 3), (1, 5)), ((2, 3), (4, 5)),
    ((2, 4), (1, 3)), ((2, 4), (1, 5)), ((2, 4), (3, 5)),
    ((2, 5), (1, 3)), ((2, 5), (1, 4)), ((2, 5), (3, 4)),
    ((3, 4), (1, 2)), ((3, 4), (1, 5)), ((3, 4), (2, 5)),
    ((3, 5), (1, 2)), ((3, 5), (1, 4)), ((3, 5), (2, 4)),
    ((4, 5), (1, 2)), ((4, 5), (1, 3)), ((4, 5), (2, 3)),
]


def test_criterion_02_double_sample_enumeration():
    got = {
        (tuple(int(v) + 1 for v in ds.a_i), tuple(int(v) + 1 for v in ds.a_j))
        for ds in enumerate_double_samples(5, 4)
    }
    assert len(got) == 30
    assert got == set(_APPENDIX_TABLE)
    for n in range(2, 9):
        for s in range(2, n + 1):
            want = math.factorial(n) // (
                math.factorial(s // 2) * math.factorial(s - s // 2) * math.factorial(n - s)
            )
            assert len(enumerate_double_samples(n, s)) == want == double_sample_count(n, s)
    _report(2, "double-sample enumeration matches the tabulated 30 elements and count formula", True)


def _structure(tree):
    return [
        (n.feature, None if n.is_leaf else n.threshold, n.left, n.right,
         None if n.i_members is None else tuple(int(t) for t in n.i_members))
        for n in tree.nodes
    ]


def test_criterion_03_honesty_sentinel():
    rng = np.random.default_rng(404)
    models = ["a", "b", "c", "d"]
    trees_checked = 0
    for case in range(50):
        spec = DgpSpec(models[case % 4], "laplace" if case % 2 else "normal")
        series = simulate_path(spec, 110 + (case % 3) * 25, seed=1000 + case)
        train = embed(series, spec.p)
        config = ForestConfig(num_trees=1, min_leaf_k=2 + case % 3, seed=case)
        s = config.subsample_size(len(train))
        for b in range(2):
            sample = draw_double_sample(len(train), s, np.random.default_rng(2000 + case * 2 + b))
            before = grow_tree(train, sample, config, np.random.default_rng(77 + b))
            y_perm = train.y.copy()
            y_perm[sample.a_i] = train.y[rng.permutation(sample.a_i)]
            shuffled = LagDataset(x=train.x, y=y_perm, p=train.p, t_index=train.t_index)
            after = grow_tree(shuffled, sample, config, np.random.default_rng(77 + b))
            assert _structure(before) == _structure(after)
            trees_checked += 1
    _report(3, "permuting I-sample responses never changes tree structure", True,
            f"{trees_checked} trees over 50 datasets")


@pytest.fixture(scope="module")
def fitted_forests():
    f1 = fit_forest(embed(simulate_path(DgpSpec("b", "normal"), 420, seed=21), 2),
                    ForestConfig(num_trees=40, min_leaf_k=5, seed=1))
    f2 = fit_forest(embed(simulate_path(DgpSpec("c", "laplace"), 380, seed=22), 2),
                    ForestConfig(num_trees=30, min_leaf_k=3, omega=0.1, seed=2))
    f3 = fit_forest(embed(simulate_path(DgpSpec("d", "normal"), 300, seed=23), 5),
                    ForestConfig(num_trees=25, min_leaf_k=2, seed=3))
    return [f1, f2, f3]


def test_criterion_04_structural_constraints(fitted_forests):
    leaves = 0
    internal = 0
    for forest in fitted_forests:
        k = forest.config.min_leaf_k
        omega = forest.config.omega
        for tree in forest.trees:
            for node in tree.nodes:
                if node.is_leaf:
                    leaves += 1
                    assert node.i_count == len(node.i_members)
                    assert (k <= node.i_count <= 2 * k - 1) or node.undersized
                else:
                    internal += 1
                    left, right = tree.nodes[node.left], tree.nodes[node.right]
                    assert min(left.j_count, right.j_count) >= math.ceil(omega * node.j_count)
                    assert min(left.j_count, right.j_count) / node.j_count >= omega
                    assert min(left.i_count, right.i_count) >= k
    _report(4, "omega-regularity and k..2k-1 leaf contract hold on every grown tree", True,
            f"{internal} internal nodes, {leaves} leaves")


def test_criterion_05_score_bound_diagnostic(fitted_forests):
    rng = np.random.default_rng(55)
    queries = 0
    for forest in fitted_forests[:2]:
        lo = forest.train.x.min(axis=0)
        hi = forest.train.x.max(axis=0)
        for _ in range(50):
            x = lo + (hi - lo) * rng.random(size=forest.p)
            tau = float(rng.uniform(0.02, 0.98))
            w = forest_weights(forest, x)
            q_hat = weighted_quantile(w, forest.train.y, tau)
            score, bound = score_diagnostic(forest, x, q_hat, tau)
            assert abs(score) <= bound + 1e-12
            queries += 1
    _report(5, "|score at the estimate| <= max weight at every query", True, f"{queries} queries")


def test_criterion_06_consistency_trend():
    res = run_simulation(
        [Scenario("c", "normal", 500), Scenario("c", "normal", 2000)],
        10, 0, ["tsqrf"], taus=(0.5,), t_test=50,
        forest_config=ForestConfig(num_trees=200),
    )
    by_t = {row.t_train: row for row in res.train_rows}
    mse_small, mse_large = by_t[500].mse, by_t[2000].mse
    sd_small, sd_large = by_t[500].sdbias, by_t[2000].sdbias
    ok = mse_large < mse_small and sd_large <= 0.75 * sd_small
    _report(6, "training MSE falls and SDBias shrinks >= 25% from T=500 to T=2000", ok,
            f"MSE {mse_small:.4f}->{mse_large:.4f}, SDBias {sd_small:.4f}->{sd_large:.4f}")


def test_criterion_07_level_reproduction():
    res = run_simulation(
        [Scenario("a", "normal", 1000)], 20, 0, ["tsqrf"],
        taus=(0.01, 0.5, 0.99), t_test=50,
        forest_config=ForestConfig(num_trees=500),
    )
    rows = {row.tau: row for row in res.train_rows}
    mse_mid = rows[0.5].mse
    mb_low = rows[0.01].mbias
    mb_high = rows[0.99].mbias
    ok = 0.03 <= mse_mid <= 0.10 and mb_low > 0.0 and mb_high < 0.0
    _report(7, "median MSE lands in [0.03, 0.10]; tail MBias signs match", ok,
            f"MSE(50%)={mse_mid:.4f}, MBias(1%)={mb_low:+.4f}, MBias(99%)={mb_high:+.4f}")


def test_criterion_08_method_ordering():
    res = run_simulation(
        [Scenario("c", "normal", 1000)], 10, 0, ["tsqrf", "wnw"],
        taus=(0.1, 0.5, 0.9), t_test=500,
        forest_config=ForestConfig(num_trees=200),
    )
    mse = {(row.method, row.tau): row.mse for row in res.test_rows}
    wins = sum(mse[("tsqrf", tau)] < mse[("wnw", tau)] for tau in (0.1, 0.5, 0.9))
    detail = ", ".join(
        f"tau={tau}: {mse[('tsqrf', tau)]:.3f} vs {mse[('wnw', tau)]:.3f}"
        for tau in (0.1, 0.5, 0.9)
    )
    _report(8, "forest beats the kernel baseline on test MSE at >= 2 of 3 levels", wins >= 2, detail)


def test_criterion_09_coverage_pipeline():
    series = simulate_path(DgpSpec("b", "normal"), 1465, seed=20)
    rows = coverage_table(
        series, 2, 976, [0.025, 0.1, 0.5, 0.9, 0.975], ["tsqrf", "wnw"],
        forest_config=ForestConfig(num_trees=200, seed=4),
    )
    assert len(rows) == 2 * 2 * 5
    theta = {(r.method, r.split, r.tau): r.theta for r in rows}
    train_mid = theta[("tsqrf", "train", 0.5)]
    test_hi = theta[("tsqrf", "test", 0.975)]
    ok = 0.40 <= train_mid <= 0.60 and 0.94 <= test_hi <= 1.00
    _report(9, "coverage pipeline on a 976/489 split reproduces table magnitudes", ok,
            f"train theta(0.5)={train_mid:.4f}, test theta(0.975)={test_hi:.4f}")


def test_criterion_10_determinism_under_parallelism(tmp_path):
    files = ["report_train.csv", "report_train.json", "report_test.csv",
             "report_test.json", "bias_samples.csv"]
    outputs = {}
    for threads in (1, 2):
        out_dir = tmp_path / f"threads{threads}"
        rc = cli_main([
            "bench", "--models", "c", "--errors", "normal", "--T", "240",
            "--t-test", "60", "--R", "4", "--trees", "30", "--taus", "0.5",
            "--methods", "tsqrf", "--seed", "5", "--threads", str(threads),
            "--out-dir", str(out_dir),
        ])
        assert rc == 0
        outputs[threads] = {name: (out_dir / name).read_bytes() for name in files}
    identical = all(outputs[1][name] == outputs[2][name] for name in files)
    _report(10, "bench reports are byte-identical with 1 and 2 threads", identical)


def test_criterion_11_leaf_diameter_trend():
    means = {0.5: [], 0.125: []}
    for seed in range(10):
        series = simulate_path(DgpSpec("b", "normal"), 2000, seed=300 + seed)
        train = embed(series, 2)
        probes = train.x[::50]
        for fraction in (0.5, 0.125):
            forest = fit_forest(
                train,
                ForestConfig(num_trees=20, subsample_fraction=fraction, seed=seed),
            )
            means[fraction].append(leaf_diameter_stats(forest, probes).mean)
    large_s = float(np.mean(means[0.5]))
    small_s = float(np.mean(means[0.125]))
    _report(11, "mean leaf diameter is smaller at s=T/2 than at s=T/8", large_s < small_s,
            f"s=T/2: {large_s:.3f}, s=T/8: {small_s:.3f}")
