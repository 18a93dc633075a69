"""Downstream verification: train models on the condensed graph, select by
original-graph validation accuracy, report original-graph test accuracy.

Architectures: a two-layer graph convolution network (the reference
evaluator), the K-step propagation model, and a plain two-layer MLP that
ignores the adjacency entirely.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import NumericAbort, Tensor
from .condense import CondensedGraph, label_blocks, normalize_dense_tensor, save_condensed
from .graph_core import (Dataset, NormalizedGraph, ValidationError,
                         directory_size_bytes, normalize, propagate, spmm)
from .sgc_pretrain import accuracy

ARCHS = ("gcn", "sgc", "mlp")


@dataclass
class EvalConfig:
    hidden: int = 256
    dropout: float = 0.5
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 600
    check_every: int = 1          # validation cadence in epochs
    K: int = 2                    # propagation depth for the sgc evaluator
    optimizer: str = "adam"       # "adam" | "sgd"
    archs: tuple[str, ...] = ("gcn",)
    trials: int = 5


@dataclass
class EvalReport:
    per_arch: dict[str, dict] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return dict(self.per_arch)


def spmm_taped(graph: NormalizedGraph, x: Tensor) -> Tensor:
    """Taped sparse-times-dense product; the graph is a constant and must be
    symmetric (backward reuses the same propagation)."""
    out = Tensor(spmm(graph, x.values), dtype=x.dtype)

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(spmm(graph, g))

    return ad.register_op(out, (x,), bwd)


class GcnModel:
    """Two graph-convolution layers; rectifier between, none on the output."""

    def __init__(self, d: int, hidden: int, c: int, dropout: float,
                 rng: np.random.Generator):
        dt = ad.get_default_dtype()
        self.dropout = dropout
        self.params = {
            "w1": Tensor(ad.xavier_uniform(rng, d, hidden), requires_grad=True),
            "b1": Tensor(np.zeros((1, hidden), dtype=dt), requires_grad=True),
            "w2": Tensor(ad.xavier_uniform(rng, hidden, c), requires_grad=True),
            "b2": Tensor(np.zeros((1, c), dtype=dt), requires_grad=True),
        }

    def forward(self, aggregate, x: Tensor, training: bool,
                rng: np.random.Generator | None) -> Tensor:
        p = self.params
        if training and self.dropout:
            x = ad.dropout(x, self.dropout, rng)
        h = aggregate(ad.matmul(x, p["w1"]))
        h = ad.relu(ad.add(h, p["b1"]))
        if training and self.dropout:
            h = ad.dropout(h, self.dropout, rng)
        out = aggregate(ad.matmul(h, p["w2"]))
        return ad.add(out, p["b2"])


class MlpModel:
    """Features-only two-layer perceptron (adjacency is ignored)."""

    def __init__(self, d: int, hidden: int, c: int, dropout: float,
                 rng: np.random.Generator):
        self.inner = GcnModel(d, hidden, c, dropout, rng)
        self.params = self.inner.params

    def forward(self, _aggregate, x: Tensor, training: bool,
                rng: np.random.Generator | None) -> Tensor:
        identity = lambda t: t
        return self.inner.forward(identity, x, training, rng)


class SgcEvalModel:
    """K-step propagation then a single linear layer."""

    def __init__(self, d: int, c: int, K: int, rng: np.random.Generator):
        dt = ad.get_default_dtype()
        self.K = K
        self.params = {
            "w": Tensor(ad.xavier_uniform(rng, d, c), requires_grad=True),
            "b": Tensor(np.zeros((1, c), dtype=dt), requires_grad=True),
        }

    def forward_propagated(self, x_prop: Tensor) -> Tensor:
        return ad.add(ad.matmul(x_prop, self.params["w"]), self.params["b"])


@dataclass
class TrainedModel:
    arch: str
    model: object
    best_val: float
    cfg: EvalConfig


def _dense_normalized(cond: CondensedGraph) -> np.ndarray:
    """Normalized dense adjacency of the condensed graph (weights as-is)."""
    a = Tensor(cond.adjacency.astype(ad.get_default_dtype()))
    return normalize_dense_tensor(a).values


def _full_graph_logits(arch: str, model, dataset: Dataset,
                       norm_full: NormalizedGraph,
                       prop_cache: dict) -> np.ndarray:
    x = Tensor(dataset.features)
    if arch == "mlp":
        return model.forward(None, x, training=False, rng=None).values
    if arch == "sgc":
        if "sgc_prop" not in prop_cache:
            prop_cache["sgc_prop"] = propagate(norm_full, dataset.features, model.K).last
        return model.forward_propagated(Tensor(prop_cache["sgc_prop"])).values
    aggregate = lambda t: spmm_taped(norm_full, t)
    return model.forward(aggregate, x, training=False, rng=None).values


def train_model(arch: str, train_features: np.ndarray, train_adjacency,
                train_labels: np.ndarray, train_rows: np.ndarray,
                dataset: Dataset, cfg: EvalConfig, seed: int,
                norm_full: NormalizedGraph | None = None) -> TrainedModel:
    """Train one architecture on a (condensed or original) training graph.

    - train_adjacency: dense normalized matrix, NormalizedGraph, or None (mlp).
    - train_rows: rows of the training graph that carry supervision.
    - model selection: best accuracy on the original validation split,
      ties keeping the later checkpoint. The test split is never touched.
    """
    if arch not in ARCHS:
        raise ValidationError(f"unknown architecture {arch!r}")
    rng = np.random.default_rng(seed)
    norm_full = norm_full or normalize(dataset.graph)
    d = dataset.num_features
    c = dataset.num_classes

    pre_selected = arch == "sgc"  # sgc trains on already-selected propagated rows
    if arch == "sgc":
        model = SgcEvalModel(d, c, cfg.K, rng)
        if isinstance(train_adjacency, np.ndarray):
            prop = train_features
            for _ in range(cfg.K):
                prop = train_adjacency @ prop
        else:
            prop = propagate(train_adjacency, train_features, cfg.K).last
        xt = Tensor(prop[train_rows])
        fwd = lambda training: model.forward_propagated(xt)
    else:
        model_cls = MlpModel if arch == "mlp" else GcnModel
        model = model_cls(d, cfg.hidden, c, cfg.dropout, rng)
        x_full = Tensor(train_features)
        if arch == "mlp":
            aggregate = None
        elif isinstance(train_adjacency, np.ndarray):
            adj_t = Tensor(train_adjacency)
            aggregate = lambda t: ad.matmul(adj_t, t)
        else:
            aggregate = lambda t: spmm_taped(train_adjacency, t)
        fwd = lambda training: model.forward(aggregate, x_full, training, rng)

    params = list(model.params.values())
    opt = ad.AdamState(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    step = ad.adam_step if cfg.optimizer == "adam" else ad.sgd_step
    y = train_labels[train_rows]
    val_idx = dataset.splits["val"]
    prop_cache: dict = {}
    best_val = -1.0
    best_params = {k: t.values.copy() for k, t in model.params.items()}

    for epoch in range(cfg.epochs):
        for t in params:
            t.zero_grad()
        with ad.Tape() as tape:
            logits = fwd(training=True)
            picked = logits if pre_selected else _select_rows(logits, train_rows)
            loss = ad.softmax_cross_entropy(picked, y, reduction="mean")
        if not np.isfinite(loss.item()):
            raise NumericAbort(f"{arch} training diverged at epoch {epoch}")
        tape.backward(loss)
        step(opt)

        if val_idx.size and (epoch % cfg.check_every == 0 or epoch == cfg.epochs - 1):
            val_logits = _full_graph_logits(arch, model, dataset, norm_full, prop_cache)
            val_acc = accuracy(val_logits, dataset.labels, val_idx)
            if val_acc >= best_val:
                best_params = {k: t.values.copy() for k, t in model.params.items()}
            best_val = max(best_val, val_acc)

    for key, t in model.params.items():
        t.values = best_params[key]
    return TrainedModel(arch, model, best_val, cfg)


def _select_rows(logits: Tensor, rows: np.ndarray) -> Tensor:
    if rows.shape[0] == logits.shape[0] and np.array_equal(rows, np.arange(logits.shape[0])):
        return logits
    # contiguous ranges use the taped slice; general masks gather row by row
    if rows.size and np.array_equal(rows, np.arange(rows[0], rows[0] + rows.size)):
        return ad.slice_rows(logits, int(rows[0]), int(rows[0] + rows.size))
    return _gather_rows(logits, rows)


def _gather_rows(logits: Tensor, rows: np.ndarray) -> Tensor:
    out = Tensor(logits.values[rows], dtype=logits.dtype)

    def bwd(g):
        if logits.requires_grad:
            full = np.zeros_like(logits.values)
            np.add.at(full, rows, g)
            logits.accumulate_grad(full)

    return ad.register_op(out, (logits,), bwd)


def train_on_condensed(cond: CondensedGraph, arch: str, dataset: Dataset,
                       cfg: EvalConfig, seed: int,
                       norm_full: NormalizedGraph | None = None) -> TrainedModel:
    """Train an architecture on the condensed graph (all nodes supervised)."""
    adj = None if arch == "mlp" else _dense_normalized(cond)
    features = cond.features.astype(ad.get_default_dtype())
    rows = np.arange(cond.num_nodes)
    return train_model(arch, features, adj, cond.labels, rows, dataset, cfg, seed,
                       norm_full)


def train_on_original(arch: str, dataset: Dataset, cfg: EvalConfig, seed: int,
                      norm_full: NormalizedGraph | None = None) -> TrainedModel:
    """Whole-dataset baseline: train directly on the original graph."""
    norm_full = norm_full or normalize(dataset.graph)
    adj = None if arch == "mlp" else norm_full
    return train_model(arch, dataset.features, adj, dataset.labels,
                       dataset.splits["train"], dataset, cfg, seed, norm_full)


def evaluate(trained: TrainedModel, dataset: Dataset,
             norm_full: NormalizedGraph | None = None) -> float:
    """Original-graph test accuracy of a trained model."""
    norm_full = norm_full or normalize(dataset.graph)
    logits = _full_graph_logits(trained.arch, trained.model, dataset, norm_full, {})
    return accuracy(logits, dataset.labels, dataset.splits["test"])


def cross_architecture_report(cond: CondensedGraph, dataset: Dataset,
                              cfg: EvalConfig, base_seed: int = 0) -> EvalReport:
    """trials x archs evaluation matrix with mean/std aggregation."""
    report = EvalReport()
    norm_full = normalize(dataset.graph)
    for arch in cfg.archs:
        accs, vals, seeds = [], [], []
        for trial in range(cfg.trials):
            seed = base_seed + trial
            trained = train_on_condensed(cond, arch, dataset, cfg, seed, norm_full)
            accs.append(evaluate(trained, dataset, norm_full))
            vals.append(trained.best_val)
            seeds.append(seed)
        report.per_arch[arch] = {
            "mean": float(np.mean(accs)),
            "std": float(np.std(accs)) if len(accs) >= 2 else None,
            "trials": [float(a) for a in accs],
            "best_val": [float(v) for v in vals],
            "seeds": seeds,
        }
    return report


def condensed_stats(cond: CondensedGraph, directory=None) -> dict:
    """Size statistics: stored off-diagonal entries, sparsity, storage bytes."""
    n = cond.num_nodes
    off = cond.adjacency.copy()
    np.fill_diagonal(off, 0.0)
    edges = int(np.count_nonzero(off))
    possible = n * (n - 1)
    if directory is not None:
        storage = directory_size_bytes(directory)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            save_condensed(cond, tmp)
            storage = directory_size_bytes(tmp)
    return {
        "nodes": n,
        "edges": edges,
        "sparsity": edges / possible if possible else 0.0,
        "storage_bytes": storage,
        "per_class": {str(c): int(stop - start) for c, start, stop in label_blocks(cond.labels)},
    }


def dataset_stats(dataset: Dataset, directory=None) -> dict:
    """The same statistics for an original dataset directory."""
    n = dataset.num_nodes
    edges = dataset.graph.num_entries
    possible = n * (n - 1)
    return {
        "nodes": n,
        "edges": edges,
        "sparsity": edges / possible if possible else 0.0,
        "storage_bytes": directory_size_bytes(directory) if directory else None,
    }
