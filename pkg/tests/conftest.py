import numpy as np
import pytest

from tsqrf import DgpSpec, ForestConfig, embed, fit_forest, simulate_path


@pytest.fixture(scope="session")
def small_train():
    """Lag-embedded model-(b) path shared by forest/estimator tests."""
    series = simulate_path(DgpSpec("b", "normal"), 400, seed=11)
    return embed(series, 2)


@pytest.fixture(scope="session")
def small_forest(small_train):
    config = ForestConfig(num_trees=40, min_leaf_k=5, seed=17)
    return fit_forest(small_train, config)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
