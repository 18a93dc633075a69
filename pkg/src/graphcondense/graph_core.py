"""Sparse graph storage, dataset directory I/O, normalization and propagation.

The dataset directory format is a neutral binary layout (little-endian
throughout): meta.json, features.bin ("SGCF"), edges.bin ("SGCE"),
labels.bin ("SGCL") and splits.json. Loading symmetrizes and deduplicates
edges (max weight wins) and drops input self-loops; ``normalize`` then adds
the canonical self-loops.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

UNLABELED = -1
_UNLABELED_U64 = 0xFFFF_FFFF_FFFF_FFFF

_EDGE_DTYPE = np.dtype([("src", "<u8"), ("dst", "<u8"), ("w", "<f4")])


class FormatError(Exception):
    """Malformed dataset file; carries the file name and byte offset."""

    def __init__(self, path, offset: int, message: str):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{self.path}: {message} (at byte {offset})")


class ValidationError(Exception):
    """Structurally valid files describing an inconsistent dataset."""


@dataclass
class SparseGraph:
    """CSR adjacency; weights are 1.0 for unweighted edges."""

    num_nodes: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    weights: np.ndarray

    @property
    def num_entries(self) -> int:
        return int(self.col_idx.shape[0])

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s, e = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[s:e], self.weights[s:e]

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.num_nodes, self.num_nodes), dtype=np.float64)
        for i in range(self.num_nodes):
            cols, w = self.row(i)
            dense[i, cols] = w
        return dense


class NormalizedGraph(SparseGraph):
    """Same CSR layout; weights hold the self-loop-augmented symmetric
    normalization d_i^{-1/2} (A+I)_{ij} d_j^{-1/2}."""


@dataclass
class Dataset:
    graph: SparseGraph
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    splits: dict[str, np.ndarray]
    mode: str  # "transductive" | "inductive"

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])


@dataclass
class PropagationStack:
    """Dense representations e_0..e_K where e_k = A_hat^k X."""

    K: int
    layers: list[np.ndarray]

    def concat(self) -> np.ndarray:
        """Column-concatenation of all K+1 layers (width (K+1)*d)."""
        return np.concatenate(self.layers, axis=1)

    @property
    def last(self) -> np.ndarray:
        return self.layers[-1]


@dataclass
class ClassStats:
    """Per-class mean/std/weight over concatenated propagated features."""

    classes: np.ndarray          # sorted class ids present in the mask
    mean: np.ndarray             # len(classes) x D
    std: np.ndarray              # len(classes) x D
    weight: np.ndarray           # len(classes), count_c / max count
    counts: np.ndarray           # members per class inside the mask
    skipped: list[int] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return int(self.mean.shape[1])


# ---------------------------------------------------------------------------
# edge assembly
# ---------------------------------------------------------------------------

def build_graph(num_nodes: int, src: np.ndarray, dst: np.ndarray,
                weights: np.ndarray) -> SparseGraph:
    """Canonical CSR from an edge list: symmetrize, drop self-loops, and
    merge duplicate (i, j) pairs keeping the max weight."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    if src.size and (src.min() < 0 or dst.min() < 0
                     or src.max() >= num_nodes or dst.max() >= num_nodes):
        raise ValidationError("edge endpoint out of range")
    if np.any(weights < 0):
        raise ValidationError("negative edge weight")

    keep = src != dst
    src, dst, weights = src[keep], dst[keep], weights[keep]
    # both directions, then dedup by max
    all_src = np.concatenate([src, dst])
    all_dst = np.concatenate([dst, src])
    all_w = np.concatenate([weights, weights])
    if all_src.size == 0:
        row_ptr = np.zeros(num_nodes + 1, dtype=np.int64)
        return SparseGraph(num_nodes, row_ptr,
                           np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))

    order = np.lexsort((all_dst, all_src))
    all_src, all_dst, all_w = all_src[order], all_dst[order], all_w[order]
    new_group = np.empty(all_src.shape[0], dtype=bool)
    new_group[0] = True
    new_group[1:] = (all_src[1:] != all_src[:-1]) | (all_dst[1:] != all_dst[:-1])
    starts = np.flatnonzero(new_group)
    u_src = all_src[starts]
    u_dst = all_dst[starts]
    u_w = np.maximum.reduceat(all_w, starts)

    counts = np.bincount(u_src, minlength=num_nodes)
    row_ptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    return SparseGraph(num_nodes, row_ptr, u_dst.astype(np.int64), u_w)


def symmetrize(graph: SparseGraph) -> SparseGraph:
    """Re-run canonicalization; no-op for graphs built by build_graph."""
    src = np.repeat(np.arange(graph.num_nodes, dtype=np.int64),
                    np.diff(graph.row_ptr))
    return build_graph(graph.num_nodes, src, graph.col_idx, graph.weights)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def normalize(graph: SparseGraph) -> NormalizedGraph:
    """Symmetric normalization with self-loops: d^{-1/2} (A+I) d^{-1/2}.

    Degrees are the weighted degrees plus the self-loop weight 1; an
    isolated node ends up with a single self-loop entry of weight 1.
    """
    n = graph.num_nodes
    src = np.repeat(np.arange(n, dtype=np.int64), np.diff(graph.row_ptr))
    deg = np.bincount(src, weights=graph.weights, minlength=n) + 1.0
    dinv = 1.0 / np.sqrt(deg)

    off_w = graph.weights * dinv[src] * dinv[graph.col_idx]
    loop_w = dinv * dinv  # = 1/deg

    all_src = np.concatenate([src, np.arange(n, dtype=np.int64)])
    all_dst = np.concatenate([graph.col_idx, np.arange(n, dtype=np.int64)])
    all_w = np.concatenate([off_w, loop_w])
    order = np.lexsort((all_dst, all_src))
    all_src, all_dst, all_w = all_src[order], all_dst[order], all_w[order]
    counts = np.bincount(all_src, minlength=n)
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    return NormalizedGraph(n, row_ptr, all_dst, all_w)


def spmm(graph: SparseGraph, x: np.ndarray) -> np.ndarray:
    """Sparse CSR times dense matrix with deterministic accumulation order."""
    if x.shape[0] != graph.num_nodes:
        raise ValidationError(
            f"matrix has {x.shape[0]} rows, graph has {graph.num_nodes} nodes")
    nnz = graph.num_entries
    if nnz == 0:
        return np.zeros_like(x)
    contrib = graph.weights.astype(x.dtype)[:, None] * x[graph.col_idx]
    starts = graph.row_ptr[:-1]
    empty = graph.row_ptr[:-1] == graph.row_ptr[1:]
    out = np.add.reduceat(contrib, np.minimum(starts, nnz - 1), axis=0)
    if empty.any():
        out[empty] = 0.0
    return out


def propagate(norm: NormalizedGraph, x: np.ndarray, K: int) -> PropagationStack:
    """K-step feature propagation: layers[k] = A_hat^k X."""
    if K < 1:
        raise ValidationError(f"K must be >= 1, got {K}")
    if x.shape[0] != norm.num_nodes:
        raise ValidationError(
            f"features have {x.shape[0]} rows, graph has {norm.num_nodes} nodes")
    layers = [x]
    for _ in range(K):
        layers.append(spmm(norm, layers[-1]))
    return PropagationStack(K, layers)


def class_statistics(stack: PropagationStack, labels: np.ndarray,
                     mask: np.ndarray, sample_std: bool = False) -> ClassStats:
    """Per-class mean/std of the concatenated representations over mask rows.

    Standard deviation uses the population convention (divide by n) unless
    ``sample_std``; classes with no members in the mask are skipped and
    reported. Class weight is count_c / max_c count_c.
    """
    mask = np.asarray(mask, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels[mask] < 0):
        raise ValidationError("class_statistics mask contains unlabeled nodes")
    z = stack.concat()[mask]
    y = labels[mask]
    all_classes = np.arange(labels.max() + 1) if labels.size else np.empty(0, np.int64)
    present, means, stds, counts, skipped = [], [], [], [], []
    ddof = 1 if sample_std else 0
    for c in all_classes:
        rows = z[y == c]
        if rows.shape[0] == 0:
            skipped.append(int(c))
            continue
        present.append(int(c))
        counts.append(rows.shape[0])
        means.append(rows.mean(axis=0))
        if rows.shape[0] <= ddof:
            stds.append(np.zeros(z.shape[1], dtype=z.dtype))
        else:
            stds.append(rows.std(axis=0, ddof=ddof))
    counts_arr = np.asarray(counts, dtype=np.int64)
    weight = counts_arr / counts_arr.max() if counts_arr.size else counts_arr.astype(np.float64)
    return ClassStats(np.asarray(present, dtype=np.int64),
                      np.asarray(means), np.asarray(stds),
                      weight.astype(np.float64), counts_arr, skipped)


def induced_subgraph(graph: SparseGraph, nodes: np.ndarray) -> SparseGraph:
    """Induced subgraph on the given nodes, relabeled 0..len(nodes)-1."""
    nodes = np.asarray(nodes, dtype=np.int64)
    relabel = np.full(graph.num_nodes, -1, dtype=np.int64)
    relabel[nodes] = np.arange(nodes.shape[0])
    src = np.repeat(np.arange(graph.num_nodes, dtype=np.int64), np.diff(graph.row_ptr))
    keep = (relabel[src] >= 0) & (relabel[graph.col_idx] >= 0)
    return build_graph(nodes.shape[0], relabel[src[keep]],
                       relabel[graph.col_idx[keep]], graph.weights[keep])


def condensation_view(dataset: Dataset) -> Dataset:
    """The graph the condenser is allowed to see.

    Transductive: the dataset itself. Inductive: the induced training
    subgraph with relabeled nodes (train split covers every view node).
    """
    if dataset.mode == "transductive":
        return dataset
    train = dataset.splits["train"]
    sub = induced_subgraph(dataset.graph, train)
    return Dataset(
        graph=sub,
        features=dataset.features[train],
        labels=dataset.labels[train],
        num_classes=dataset.num_classes,
        splits={"train": np.arange(train.shape[0], dtype=np.int64),
                "val": np.empty(0, dtype=np.int64),
                "test": np.empty(0, dtype=np.int64)},
        mode="inductive",
    )


# ---------------------------------------------------------------------------
# binary dataset directory I/O
# ---------------------------------------------------------------------------

def _read_header(path: Path, data: bytes, magic: bytes) -> int:
    if len(data) < 8:
        raise FormatError(path, 0, f"file too short for header ({len(data)} bytes)")
    if data[:4] != magic:
        raise FormatError(path, 0, f"bad magic {data[:4]!r}, expected {magic!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != 1:
        raise FormatError(path, 4, f"unsupported version {version}")
    return 8


def read_features_file(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    off = _read_header(path, data, b"SGCF")
    if len(data) < off + 16:
        raise FormatError(path, off, "truncated dimensions")
    rows, cols = struct.unpack_from("<QQ", data, off)
    off += 16
    expected = rows * cols * 4
    if len(data) - off != expected:
        raise FormatError(path, off,
                          f"expected {expected} bytes of float32 data, found {len(data) - off}")
    return np.frombuffer(data, dtype="<f4", count=rows * cols, offset=off).reshape(rows, cols).copy()


def write_features_file(path: Path, features: np.ndarray) -> None:
    features = np.ascontiguousarray(features, dtype="<f4")
    with open(path, "wb") as f:
        f.write(b"SGCF")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<QQ", features.shape[0], features.shape[1]))
        f.write(features.tobytes())


def read_edges_file(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    off = _read_header(path, data, b"SGCE")
    if len(data) < off + 8:
        raise FormatError(path, off, "truncated edge count")
    (count,) = struct.unpack_from("<Q", data, off)
    off += 8
    expected = count * _EDGE_DTYPE.itemsize
    if len(data) - off != expected:
        raise FormatError(path, off,
                          f"expected {expected} bytes of edge records, found {len(data) - off}")
    return np.frombuffer(data, dtype=_EDGE_DTYPE, count=count, offset=off).copy()


def write_edges_file(path: Path, src: np.ndarray, dst: np.ndarray,
                     weights: np.ndarray) -> None:
    records = np.empty(len(src), dtype=_EDGE_DTYPE)
    records["src"] = src
    records["dst"] = dst
    records["w"] = weights
    with open(path, "wb") as f:
        f.write(b"SGCE")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<Q", len(records)))
        f.write(records.tobytes())


def read_labels_file(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    off = _read_header(path, data, b"SGCL")
    if len(data) < off + 8:
        raise FormatError(path, off, "truncated label count")
    (count,) = struct.unpack_from("<Q", data, off)
    off += 8
    if len(data) - off != count * 8:
        raise FormatError(path, off,
                          f"expected {count * 8} bytes of labels, found {len(data) - off}")
    raw = np.frombuffer(data, dtype="<u8", count=count, offset=off)
    labels = raw.astype(np.int64)
    labels[raw == _UNLABELED_U64] = UNLABELED
    return labels


def write_labels_file(path: Path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    raw = labels.astype(np.uint64)
    raw[labels == UNLABELED] = _UNLABELED_U64
    with open(path, "wb") as f:
        f.write(b"SGCL")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<Q", len(raw)))
        f.write(raw.astype("<u8").tobytes())


def write_json_file(path: Path, obj) -> None:
    """Canonical JSON: sorted keys, compact separators, trailing newline."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")


def write_dataset_dir(directory, *, features, src, dst, weights, labels,
                      splits, num_classes: int, mode: str = "transductive") -> None:
    """Write a complete dataset directory in the neutral binary format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    features = np.asarray(features, dtype=np.float32)
    write_json_file(directory / "meta.json", {
        "num_nodes": int(features.shape[0]),
        "num_features": int(features.shape[1]),
        "num_classes": int(num_classes),
        "mode": mode,
        "format_version": 1,
    })
    write_features_file(directory / "features.bin", features)
    write_edges_file(directory / "edges.bin", src, dst, weights)
    write_labels_file(directory / "labels.bin", labels)
    write_json_file(directory / "splits.json",
                    {k: [int(i) for i in splits[k]] for k in ("train", "val", "test")})


def load_dataset(directory) -> Dataset:
    """Load and validate a dataset directory.

    The stored graph is symmetrized with duplicates merged by max weight
    and input self-loops dropped.
    """
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise FormatError(meta_path, 0, "missing file")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(meta_path, e.pos, f"invalid JSON: {e.msg}") from e
    for key in ("num_nodes", "num_features", "num_classes", "mode", "format_version"):
        if key not in meta:
            raise FormatError(meta_path, 0, f"missing meta key {key!r}")
    if meta["format_version"] != 1:
        raise FormatError(meta_path, 0, f"unsupported format_version {meta['format_version']}")
    if meta["mode"] not in ("transductive", "inductive"):
        raise FormatError(meta_path, 0, f"unknown mode {meta['mode']!r}")
    n = int(meta["num_nodes"])
    d = int(meta["num_features"])
    c = int(meta["num_classes"])

    for name in ("features.bin", "edges.bin", "labels.bin", "splits.json"):
        if not (directory / name).exists():
            raise FormatError(directory / name, 0, "missing file")

    features = read_features_file(directory / "features.bin")
    if features.shape != (n, d):
        raise ValidationError(
            f"features shape {features.shape} does not match meta ({n}, {d})")

    edges = read_edges_file(directory / "edges.bin")
    if edges.size and int(edges["src"].max() | edges["dst"].max()) >= n:
        raise ValidationError("edge endpoint index out of range")
    graph = build_graph(n, edges["src"].astype(np.int64),
                        edges["dst"].astype(np.int64), edges["w"].astype(np.float64))

    labels = read_labels_file(directory / "labels.bin")
    if labels.shape[0] != n:
        raise ValidationError(f"labels count {labels.shape[0]} != num_nodes {n}")
    if np.any(labels >= c):
        raise ValidationError(f"label id >= num_classes {c}")

    splits_path = directory / "splits.json"
    try:
        raw_splits = json.loads(splits_path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(splits_path, e.pos, f"invalid JSON: {e.msg}") from e
    splits = {}
    for key in ("train", "val", "test"):
        if key not in raw_splits:
            raise FormatError(splits_path, 0, f"missing split {key!r}")
        idx = np.asarray(raw_splits[key], dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValidationError(f"{key} split index out of range [0, {n})")
        splits[key] = idx
    total = sum(s.size for s in splits.values())
    if np.unique(np.concatenate([s for s in splits.values()])).size != total:
        raise ValidationError("splits are not disjoint")
    train_labels = labels[splits["train"]]
    if np.any(train_labels == UNLABELED):
        raise ValidationError("training split contains unlabeled nodes")

    return Dataset(graph=graph, features=features, labels=labels,
                   num_classes=c, splits=splits, mode=meta["mode"])


def directory_size_bytes(directory) -> int:
    return sum(p.stat().st_size for p in Path(directory).iterdir() if p.is_file())
