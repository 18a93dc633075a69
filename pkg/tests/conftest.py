import numpy as np
import pytest

from graphcondense import graph_core as gc

from planetoid_convert import convert, find_raw_dir

RAW_DIR = find_raw_dir()

needs_citation_data = pytest.mark.skipif(
    RAW_DIR is None,
    reason="raw citation dataset files not found; place the pickled parts under "
           "vendor/planetoid/ or set GRAPHCONDENSE_DATA (see README)")


@pytest.fixture(scope="session")
def cora_dir(tmp_path_factory):
    if RAW_DIR is None:
        pytest.skip("citation data unavailable")
    out = tmp_path_factory.mktemp("data") / "cora"
    stats = convert(RAW_DIR, "cora", out)
    assert stats["nodes"] == 2708
    return out


@pytest.fixture(scope="session")
def citeseer_dir(tmp_path_factory):
    if RAW_DIR is None:
        pytest.skip("citation data unavailable")
    out = tmp_path_factory.mktemp("data") / "citeseer"
    stats = convert(RAW_DIR, "citeseer", out)
    assert stats["nodes"] == 3327
    return out


@pytest.fixture(scope="session")
def cora_dataset(cora_dir):
    return gc.load_dataset(cora_dir)


@pytest.fixture()
def toy_community_dataset():
    """Two noisy feature communities joined by intra-community edges."""
    rng = np.random.default_rng(12)
    n_per, d = 30, 6
    features = np.vstack([
        rng.normal(loc=-1.0, size=(n_per, d)),
        rng.normal(loc=1.0, size=(n_per, d)),
    ]).astype(np.float32)
    labels = np.array([0] * n_per + [1] * n_per)
    src, dst = [], []
    for block in (0, 1):
        base = block * n_per
        for i in range(n_per):
            for j in range(i + 1, n_per):
                if rng.random() < 0.15:
                    src.append(base + i)
                    dst.append(base + j)
    graph = gc.build_graph(2 * n_per, np.array(src), np.array(dst),
                           np.ones(len(src)))
    idx = rng.permutation(2 * n_per)
    return gc.Dataset(graph=graph, features=features, labels=labels, num_classes=2,
                      splits={"train": idx[:20], "val": idx[20:40], "test": idx[40:]},
                      mode="transductive")
