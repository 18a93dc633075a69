"""Standalone writer and validator for the binary dataset directory format.

Layout (all integers little-endian):
  meta.json     {"num_nodes", "num_features", "num_classes", "mode", "format_version": 1}
  features.bin  "SGCF" u32=1 u64 rows u64 cols, rows*cols float32 row-major
  edges.bin     "SGCE" u32=1 u64 count, count x (u64 src, u64 dst, f32 weight)
  labels.bin    "SGCL" u32=1 u64 count, count x u64 (all-ones sentinel = unlabeled)
  splits.json   {"train": [...], "val": [...], "test": [...]}

This implementation is intentionally independent of any consumer library so
the byte-level golden tests exercise two separate codebases.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

UNLABELED_SENTINEL = 0xFFFF_FFFF_FFFF_FFFF


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def write_meta(path: Path, num_nodes: int, num_features: int, num_classes: int,
               mode: str) -> None:
    path.write_text(canonical_json({
        "num_nodes": num_nodes,
        "num_features": num_features,
        "num_classes": num_classes,
        "mode": mode,
        "format_version": 1,
    }))


def write_features(path: Path, rows) -> None:
    """rows: iterable of per-node float sequences (coerced to float32)."""
    rows = list(rows)
    cols = len(rows[0]) if rows else 0
    with open(path, "wb") as f:
        f.write(b"SGCF")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<QQ", len(rows), cols))
        pack = struct.Struct(f"<{cols}f")
        for row in rows:
            if len(row) != cols:
                raise ValueError("ragged feature rows")
            f.write(pack.pack(*[float(v) for v in row]))


def write_edges(path: Path, edges) -> None:
    """edges: iterable of (src, dst, weight)."""
    edges = list(edges)
    rec = struct.Struct("<QQf")
    with open(path, "wb") as f:
        f.write(b"SGCE")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<Q", len(edges)))
        for src, dst, w in edges:
            f.write(rec.pack(int(src), int(dst), float(w)))


def write_labels(path: Path, labels) -> None:
    """labels: iterable of class ids; any negative value means unlabeled."""
    labels = list(labels)
    with open(path, "wb") as f:
        f.write(b"SGCL")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<Q", len(labels)))
        for v in labels:
            f.write(struct.pack("<Q", UNLABELED_SENTINEL if v < 0 else int(v)))


def write_splits(path: Path, train, val, test) -> None:
    path.write_text(canonical_json({
        "train": [int(i) for i in train],
        "val": [int(i) for i in val],
        "test": [int(i) for i in test],
    }))


def write_dataset(directory, *, features, edges, labels, train, val, test,
                  num_classes: int, mode: str = "transductive") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    features = list(features)
    write_meta(directory / "meta.json", len(features),
               len(features[0]) if features else 0, num_classes, mode)
    write_features(directory / "features.bin", features)
    write_edges(directory / "edges.bin", edges)
    write_labels(directory / "labels.bin", labels)
    write_splits(directory / "splits.json", train, val, test)


def file_checksums(directory) -> dict[str, str]:
    out = {}
    for name in ("meta.json", "features.bin", "edges.bin", "labels.bin", "splits.json"):
        out[name] = hashlib.sha256((Path(directory) / name).read_bytes()).hexdigest()
    return out


# ---------------------------------------------------------------------------
# structural validation (the loader rules, re-implemented)
# ---------------------------------------------------------------------------

def verify(directory, problems: list[str] | None = None) -> bool:
    """Structural validation mirroring the consumer's loader rules."""
    directory = Path(directory)
    sink = problems if problems is not None else []

    def fail(msg: str) -> bool:
        sink.append(msg)
        return False

    ok = True
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        return fail("meta.json missing")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        return fail(f"meta.json invalid JSON: {e}")
    for key in ("num_nodes", "num_features", "num_classes", "mode", "format_version"):
        if key not in meta:
            ok = fail(f"meta.json missing key {key}")
    if not ok:
        return False
    if meta["format_version"] != 1:
        ok = fail(f"unsupported format_version {meta['format_version']}")
    if meta["mode"] not in ("transductive", "inductive"):
        ok = fail(f"unknown mode {meta['mode']}")
    n, d, c = meta["num_nodes"], meta["num_features"], meta["num_classes"]

    feat = _checked_read(directory / "features.bin", b"SGCF", sink)
    if feat is None:
        return False
    rows, cols = struct.unpack_from("<QQ", feat, 8)
    if (rows, cols) != (n, d):
        ok = fail(f"features shape ({rows}, {cols}) != meta ({n}, {d})")
    if len(feat) != 24 + rows * cols * 4:
        ok = fail(f"features.bin payload is {len(feat) - 24} bytes, "
                  f"expected {rows * cols * 4}")

    edges = _checked_read(directory / "edges.bin", b"SGCE", sink)
    if edges is None:
        return False
    (count,) = struct.unpack_from("<Q", edges, 8)
    if len(edges) != 16 + count * 20:
        ok = fail(f"edges.bin payload is {len(edges) - 16} bytes, expected {count * 20}")
    else:
        rec = struct.Struct("<QQf")
        for i in range(count):
            src, dst, w = rec.unpack_from(edges, 16 + i * 20)
            if src >= n or dst >= n:
                ok = fail(f"edge {i} endpoint out of range")
                break
            if w < 0:
                ok = fail(f"edge {i} has negative weight")
                break

    labels = _checked_read(directory / "labels.bin", b"SGCL", sink)
    if labels is None:
        return False
    (lcount,) = struct.unpack_from("<Q", labels, 8)
    if lcount != n:
        ok = fail(f"labels count {lcount} != num_nodes {n}")
    if len(labels) != 16 + lcount * 8:
        ok = fail(f"labels.bin payload is {len(labels) - 16} bytes, expected {lcount * 8}")
    else:
        label_vals = struct.unpack_from(f"<{lcount}Q", labels, 16)
        for i, v in enumerate(label_vals):
            if v != UNLABELED_SENTINEL and v >= c:
                ok = fail(f"label {i} = {v} >= num_classes {c}")
                break

    splits_path = directory / "splits.json"
    if not splits_path.exists():
        return fail("splits.json missing")
    try:
        splits = json.loads(splits_path.read_text())
    except json.JSONDecodeError as e:
        return fail(f"splits.json invalid JSON: {e}")
    seen: set[int] = set()
    total = 0
    for key in ("train", "val", "test"):
        if key not in splits:
            ok = fail(f"splits.json missing {key}")
            continue
        idx = splits[key]
        total += len(idx)
        seen.update(idx)
        if any(i < 0 or i >= n for i in idx):
            ok = fail(f"{key} split index out of range")
    if len(seen) != total:
        ok = fail("splits overlap")
    if ok and "train" in splits and len(labels) == 16 + lcount * 8:
        for i in splits["train"]:
            if label_vals[i] == UNLABELED_SENTINEL:
                ok = fail(f"training node {i} is unlabeled")
                break
    return ok


def _checked_read(path: Path, magic: bytes, sink: list[str]):
    if not path.exists():
        sink.append(f"{path.name} missing")
        return None
    data = path.read_bytes()
    if len(data) < 8 or data[:4] != magic:
        sink.append(f"{path.name}: bad magic")
        return None
    (version,) = struct.unpack_from("<I", data, 4)
    if version != 1:
        sink.append(f"{path.name}: unsupported version {version}")
        return None
    return data
