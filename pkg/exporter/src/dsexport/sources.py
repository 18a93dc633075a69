"""Readers for the upstream distribution formats of the supported benchmarks.

planetoid  - pickled x/y/tx/ty/allx/ally/graph parts plus test.index
             (cora, citeseer); downloads from the canonical repository
             when not cached.
graphsaint - adj_full.npz / feats.npy / class_map.json / role.json
             (flickr, reddit, reddit2); inductive.
ogb        - raw csv.gz layout (edge.csv.gz, node-feat.csv.gz,
             node-label.csv.gz, split train/valid/test csv.gz)
             (ogbn-arxiv, ogbn-products).
"""

from __future__ import annotations

import gzip
import json
import os
import pickle
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PLANETOID_URL = "https://github.com/kimiyoung/planetoid/raw/master/data"
PLANETOID_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")


@dataclass
class RawGraph:
    """A fully materialized dataset ready for export."""

    features: np.ndarray        # N x d float32
    labels: np.ndarray          # N int64, -1 for unlabeled
    num_classes: int
    edges_src: np.ndarray       # directed entries as provided (both directions)
    edges_dst: np.ndarray
    raw_pair_count: int         # upstream citation/link pairs (entries // 2)
    train: list[int]
    val: list[int]
    test: list[int]
    mode: str
    source_version: str


def cache_dir() -> Path:
    env = os.environ.get("DSEXPORT_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "dsexport"


def _planetoid_path(raw_dir: Path | None, name: str, part: str) -> Path:
    for base in filter(None, [raw_dir, cache_dir() / "planetoid"]):
        p = Path(base) / f"ind.{name}.{part}"
        if p.exists():
            return p
    target = cache_dir() / "planetoid" / f"ind.{name}.{part}"
    target.parent.mkdir(parents=True, exist_ok=True)
    url = f"{PLANETOID_URL}/ind.{name}.{part}"
    with urllib.request.urlopen(url) as resp:
        target.write_bytes(resp.read())
    return target


def load_planetoid(name: str, raw_dir: Path | None = None,
                   row_normalize: bool = True) -> RawGraph:
    parts = {}
    for part in PLANETOID_PARTS:
        path = _planetoid_path(raw_dir, name, part)
        if part == "test.index":
            parts[part] = np.array([int(line) for line in path.read_text().split()])
        else:
            with open(path, "rb") as f:
                parts[part] = pickle.load(f, encoding="latin1")

    allx, ally = parts["allx"], parts["ally"]
    tx, ty = parts["tx"], parts["ty"]
    test_reorder = parts["test.index"]
    test_sorted = np.sort(test_reorder)
    n_train_labeled = parts["y"].shape[0]

    # test features/labels live at shuffled positions; fill the id range and
    # leave gap rows (isolated filler nodes) zero / unlabeled
    span = np.arange(test_sorted.min(), test_sorted.max() + 1)
    n = allx.shape[0] + span.shape[0]
    features = np.zeros((n, allx.shape[1]), dtype=np.float32)
    features[: allx.shape[0]] = allx.toarray()
    features[test_reorder] = tx.toarray()
    onehot = np.zeros((n, ally.shape[1]))
    onehot[: ally.shape[0]] = ally
    onehot[test_reorder] = ty
    labels = np.where(onehot.sum(axis=1) > 0, np.argmax(onehot, axis=1), -1)

    if row_normalize:
        sums = features.sum(axis=1, keepdims=True)
        np.divide(features, sums, out=features, where=sums > 0)

    src, dst = [], []
    entries = 0
    for u, neighbors in parts["graph"].items():
        entries += len(neighbors)
        for v in neighbors:
            src.append(u)
            dst.append(v)

    return RawGraph(
        features=features,
        labels=labels.astype(np.int64),
        num_classes=ally.shape[1],
        edges_src=np.asarray(src, dtype=np.int64),
        edges_dst=np.asarray(dst, dtype=np.int64),
        raw_pair_count=entries // 2,
        train=list(range(n_train_labeled)),
        val=list(range(n_train_labeled, n_train_labeled + 500)),
        test=[int(i) for i in test_sorted],
        mode="transductive",
        source_version="planetoid-pickles",
    )


def load_graphsaint(raw_dir: Path, row_normalize: bool = False) -> RawGraph:
    """GraphSAINT-style directory: adj_full.npz, feats.npy, class_map.json,
    role.json."""
    from scipy.sparse import load_npz

    raw_dir = Path(raw_dir)
    adj = load_npz(raw_dir / "adj_full.npz").tocoo()
    features = np.load(raw_dir / "feats.npy").astype(np.float32)
    class_map = json.loads((raw_dir / "class_map.json").read_text())
    role = json.loads((raw_dir / "role.json").read_text())
    n = features.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    for key, value in class_map.items():
        labels[int(key)] = int(np.argmax(value)) if isinstance(value, list) else int(value)
    if row_normalize:
        sums = features.sum(axis=1, keepdims=True)
        np.divide(features, sums, out=features, where=sums > 0)
    return RawGraph(
        features=features,
        labels=labels,
        num_classes=int(labels.max()) + 1,
        edges_src=adj.row.astype(np.int64),
        edges_dst=adj.col.astype(np.int64),
        raw_pair_count=int(adj.nnz) // 2,
        train=[int(i) for i in role["tr"]],
        val=[int(i) for i in role["va"]],
        test=[int(i) for i in role["te"]],
        mode="inductive",
        source_version="graphsaint-npz",
    )


def load_ogb_raw(raw_dir: Path) -> RawGraph:
    """OGB raw csv.gz layout: raw/edge.csv.gz, raw/node-feat.csv.gz,
    raw/node-label.csv.gz, split/<scheme>/{train,valid,test}.csv.gz."""
    raw_dir = Path(raw_dir)

    def read_csv_gz(path, dtype):
        with gzip.open(path, "rt") as f:
            return np.loadtxt(f, delimiter=",", dtype=dtype, ndmin=2)

    edges = read_csv_gz(raw_dir / "raw" / "edge.csv.gz", np.int64)
    features = read_csv_gz(raw_dir / "raw" / "node-feat.csv.gz", np.float32)
    labels = read_csv_gz(raw_dir / "raw" / "node-label.csv.gz", np.int64).ravel()
    split_root = next((raw_dir / "split").iterdir())
    splits = {}
    for part, fname in (("train", "train.csv.gz"), ("val", "valid.csv.gz"),
                        ("test", "test.csv.gz")):
        splits[part] = [int(i) for i in
                        read_csv_gz(split_root / fname, np.int64).ravel()]
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    return RawGraph(
        features=features,
        labels=labels,
        num_classes=int(labels.max()) + 1,
        edges_src=src,
        edges_dst=dst,
        raw_pair_count=edges.shape[0],
        train=splits["train"],
        val=splits["val"],
        test=splits["test"],
        mode="transductive",
        source_version=f"ogb-raw-{split_root.name}",
    )
