"""Pre-train the propagation-model teacher on the original graph.

The teacher is K sparse propagation steps followed by a prediction head
(linear by default, optionally one hidden rectifier layer). Training
minimizes cross-entropy on the training rows of the K-th layer; the head
is selected by best validation accuracy. Per-class mean/std/weight
statistics over the full concatenated representation stack are frozen
into the cache for the condensation loop.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import NumericAbort, Tensor
from .graph_core import (ClassStats, Dataset, ValidationError, class_statistics,
                         condensation_view, normalize, propagate)


@dataclass
class TeacherConfig:
    K: int = 2
    head: str = "linear"          # "linear" | "mlp"
    hidden: int = 256
    epochs: int = 600
    lr: float = 0.01
    weight_decay: float = 5e-4
    patience: int = 100           # non-improving validation checks before stop
    select_best_val: bool = True
    sample_std: bool = False
    optimizer: str = "adam"       # "adam" | "sgd"
    seed: int = 0


@dataclass
class SgcModel:
    K: int
    head: str
    params: dict[str, np.ndarray]

    @property
    def in_dim(self) -> int:
        key = "w1" if self.head == "mlp" else "w"
        return self.params[key].shape[0]

    @property
    def out_dim(self) -> int:
        key = "w2" if self.head == "mlp" else "w"
        return self.params[key].shape[1]


@dataclass
class TeacherCache:
    model: SgcModel
    class_stats: ClassStats
    train_accuracy: float
    val_accuracy: float
    config: TeacherConfig = field(default_factory=TeacherConfig)


def init_model(cfg: TeacherConfig, d: int, c: int, rng: np.random.Generator) -> SgcModel:
    if cfg.head == "linear":
        params = {"w": ad.xavier_uniform(rng, d, c), "b": np.zeros((1, c), dtype=ad.get_default_dtype())}
    elif cfg.head == "mlp":
        params = {
            "w1": ad.xavier_uniform(rng, d, cfg.hidden),
            "b1": np.zeros((1, cfg.hidden), dtype=ad.get_default_dtype()),
            "w2": ad.xavier_uniform(rng, cfg.hidden, c),
            "b2": np.zeros((1, c), dtype=ad.get_default_dtype()),
        }
    else:
        raise ValidationError(f"unknown head type {cfg.head!r}")
    return SgcModel(cfg.K, cfg.head, params)


def head_forward(model: SgcModel, x: Tensor, params: dict[str, Tensor] | None = None) -> Tensor:
    """Apply the prediction head on a tape; no softmax (callers add it)."""
    p = params or {k: Tensor(v) for k, v in model.params.items()}
    if model.head == "linear":
        return ad.add(ad.matmul(x, p["w"]), p["b"])
    h = ad.relu(ad.add(ad.matmul(x, p["w1"]), p["b1"]))
    return ad.add(ad.matmul(h, p["w2"]), p["b2"])


def predict(model: SgcModel, propagated: np.ndarray) -> np.ndarray:
    """Row-wise head logits for already-propagated features."""
    if propagated.shape[1] != model.in_dim:
        raise ValidationError(
            f"propagated width {propagated.shape[1]} != head input dim {model.in_dim}")
    return head_forward(model, Tensor(propagated)).values


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Fraction of mask rows whose argmax matches the label (ties -> lowest id)."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        return 0.0
    pred = np.argmax(logits[mask], axis=1)
    return float(np.mean(pred == np.asarray(labels)[mask]))


def pretrain(dataset: Dataset, cfg: TeacherConfig) -> TeacherCache:
    """Train the teacher head and freeze the per-class statistics.

    Statistics and training use the condensation view (full graph when
    transductive, induced training subgraph when inductive); validation
    scoring propagates the full graph.
    """
    if cfg.K < 1:
        raise ValidationError("teacher K must be >= 1")
    view = condensation_view(dataset)
    train_idx = view.splits["train"]
    if train_idx.size == 0:
        raise ValidationError("empty training split")

    stack = propagate(normalize(view.graph), view.features, cfg.K)
    stats = class_statistics(stack, view.labels, train_idx, sample_std=cfg.sample_std)

    # validation rows come from the full graph (identical object when transductive)
    if view is dataset:
        full_last = stack.last
    else:
        full_last = propagate(normalize(dataset.graph), dataset.features, cfg.K).last
    val_idx = dataset.splits["val"]

    rng = np.random.default_rng(cfg.seed)
    model = init_model(cfg, dataset.num_features, dataset.num_classes, rng)

    x_train = stack.last[train_idx]
    assert x_train.shape[1] == dataset.num_features  # head sees e_K only
    y_train = view.labels[train_idx]

    params = {k: Tensor(v, requires_grad=True) for k, v in model.params.items()}
    opt = ad.AdamState(list(params.values()), lr=cfg.lr, weight_decay=cfg.weight_decay)
    step = ad.adam_step if cfg.optimizer == "adam" else ad.sgd_step
    xt = Tensor(x_train)

    best_val = -1.0
    best_params = {k: t.values.copy() for k, t in params.items()}
    stale = 0
    for epoch in range(cfg.epochs):
        for t in params.values():
            t.zero_grad()
        with ad.Tape() as tape:
            logits = head_forward(model, xt, params)
            loss = ad.softmax_cross_entropy(logits, y_train, reduction="mean")
        if not np.isfinite(loss.item()):
            raise NumericAbort(f"teacher loss became non-finite at epoch {epoch}")
        tape.backward(loss)
        step(opt)

        model.params = {k: t.values for k, t in params.items()}
        if val_idx.size:
            val_acc = accuracy(predict(model, full_last), dataset.labels, val_idx)
            if val_acc >= best_val:
                # ties keep the later (more trained) weights
                best_params = {k: t.values.copy() for k, t in params.items()}
            if val_acc > best_val:
                best_val = val_acc
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break

    if cfg.select_best_val and val_idx.size:
        model.params = best_params
    else:
        model.params = {k: t.values.copy() for k, t in params.items()}

    train_acc = accuracy(predict(model, stack.last), view.labels, train_idx)
    val_acc = accuracy(predict(model, full_last), dataset.labels, val_idx) if val_idx.size else 0.0
    return TeacherCache(model, stats, train_acc, val_acc, cfg)


# ---------------------------------------------------------------------------
# teacher cache serialization ("SGCT", little-endian, float32 payload)
# ---------------------------------------------------------------------------

def save_teacher(cache: TeacherCache, path) -> None:
    model = cache.model
    stats = cache.class_stats
    head_type = 0 if model.head == "linear" else 1
    hidden = model.params["w1"].shape[1] if model.head == "mlp" else 0
    d = model.in_dim
    c = model.out_dim
    with open(path, "wb") as f:
        f.write(b"SGCT")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<QQQ", model.K, d, c))
        f.write(struct.pack("<IQ", head_type, hidden))
        f.write(struct.pack("<ff", cache.train_accuracy, cache.val_accuracy))
        keys = ("w", "b") if model.head == "linear" else ("w1", "b1", "w2", "b2")
        for key in keys:
            f.write(np.ascontiguousarray(model.params[key], dtype="<f4").tobytes())
        f.write(struct.pack("<Q", stats.classes.shape[0]))
        dim = stats.dim
        f.write(struct.pack("<Q", dim))
        for i, cls in enumerate(stats.classes):
            f.write(struct.pack("<QQf", int(cls), int(stats.counts[i]), float(stats.weight[i])))
            f.write(np.ascontiguousarray(stats.mean[i], dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(stats.std[i], dtype="<f4").tobytes())
        f.write(struct.pack("<Q", len(stats.skipped)))
        for cls in stats.skipped:
            f.write(struct.pack("<Q", cls))


def load_teacher(path) -> TeacherCache:
    from .graph_core import FormatError  # local import to avoid cycle noise

    path = Path(path)
    data = path.read_bytes()
    if data[:4] != b"SGCT":
        raise FormatError(path, 0, f"bad magic {data[:4]!r}, expected b'SGCT'")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != 1:
        raise FormatError(path, 4, f"unsupported version {version}")
    off = 8
    K, d, c = struct.unpack_from("<QQQ", data, off); off += 24
    head_type, hidden = struct.unpack_from("<IQ", data, off); off += 12
    train_acc, val_acc = struct.unpack_from("<ff", data, off); off += 8

    def read_mat(rows, cols):
        nonlocal off
        n = rows * cols
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(rows, cols)
        off += n * 4
        return arr.astype(ad.get_default_dtype())

    if head_type == 0:
        params = {"w": read_mat(d, c), "b": read_mat(1, c)}
        head = "linear"
    else:
        params = {"w1": read_mat(d, hidden), "b1": read_mat(1, hidden),
                  "w2": read_mat(hidden, c), "b2": read_mat(1, c)}
        head = "mlp"
    model = SgcModel(int(K), head, params)

    (n_classes,) = struct.unpack_from("<Q", data, off); off += 8
    (dim,) = struct.unpack_from("<Q", data, off); off += 8
    classes, counts, weights, means, stds = [], [], [], [], []
    for _ in range(n_classes):
        cls, count, lam = struct.unpack_from("<QQf", data, off); off += 20
        classes.append(cls)
        counts.append(count)
        weights.append(lam)
        means.append(np.frombuffer(data, dtype="<f4", count=dim, offset=off).copy()); off += dim * 4
        stds.append(np.frombuffer(data, dtype="<f4", count=dim, offset=off).copy()); off += dim * 4
    (n_skipped,) = struct.unpack_from("<Q", data, off); off += 8
    skipped = [struct.unpack_from("<Q", data, off + 8 * i)[0] for i in range(n_skipped)]
    stats = ClassStats(np.asarray(classes, dtype=np.int64), np.asarray(means),
                       np.asarray(stds), np.asarray(weights, dtype=np.float64),
                       np.asarray(counts, dtype=np.int64), [int(s) for s in skipped])
    cfg = TeacherConfig(K=int(K), head=head, hidden=int(hidden) or 256)
    return TeacherCache(model, stats, float(train_acc), float(val_acc), cfg)
