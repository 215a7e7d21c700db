import numpy as np
import pytest

from gcnlab import build_graph, generate_synthetic


def tiny_graph(num_nodes, edge_list, num_features=2, num_classes=2, seed=0):
    rng = np.random.default_rng(seed)
    n = num_nodes
    return build_graph(
        num_nodes=n,
        edges=np.array(edge_list, dtype=np.int64).reshape(-1, 2),
        features=rng.normal(size=(num_features, n)),
        labels=rng.integers(0, num_classes, size=n),
        train_idx=np.arange(n),
        val_idx=np.empty(0, dtype=np.int64),
        test_idx=np.empty(0, dtype=np.int64),
        num_classes=num_classes,
    )


@pytest.fixture
def single_node():
    return tiny_graph(1, [])


@pytest.fixture
def two_node():
    return tiny_graph(2, [(0, 1)])


@pytest.fixture
def triangle():
    return tiny_graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def path3():
    return tiny_graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def ring4():
    return generate_synthetic("ring", {"n": 4}, seed=1)


@pytest.fixture
def star5():
    return generate_synthetic("star", {"n": 5}, seed=2)
