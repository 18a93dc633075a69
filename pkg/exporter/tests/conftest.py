import os
from pathlib import Path

import pytest

# shared 5-node synthetic dataset: the cross-implementation golden fixture
GOLDEN_FEATURES = [[i + j * 0.25 for j in range(3)] for i in range(5)]
GOLDEN_EDGES = [(0, 1, 1.0), (0, 4, 1.25), (1, 0, 1.0), (1, 2, 0.5),
                (2, 1, 0.5), (3, 4, 2.0), (4, 0, 1.25), (4, 3, 2.0)]
GOLDEN_LABELS = [0, 1, 0, 1, -1]
GOLDEN_SPLITS = {"train": [0, 1], "val": [2], "test": [3]}
GOLDEN_DIR = Path(__file__).parent / "golden"


def find_planetoid_raw() -> Path | None:
    candidates = []
    env = os.environ.get("DSEXPORT_RAW")
    if env:
        candidates.append(Path(env))
    candidates.append(Path(__file__).resolve().parents[2] / "vendor" / "planetoid")
    candidates.append(Path.home() / ".cache" / "dsexport" / "planetoid")
    for c in candidates:
        if (c / "ind.cora.x").exists():
            return c
    return None


RAW_DIR = find_planetoid_raw()

needs_raw = pytest.mark.skipif(
    RAW_DIR is None,
    reason="raw citation files not found; set DSEXPORT_RAW or populate "
           "vendor/planetoid (see README)")


@pytest.fixture(scope="session")
def raw_dir():
    if RAW_DIR is None:
        pytest.skip("raw citation files unavailable")
    return RAW_DIR
