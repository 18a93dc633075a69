"""The condensation loop: optimize synthetic features and the adjacency
generator against the frozen teacher.

Per step the dense synthetic adjacency is produced by a pairwise MLP
(symmetrized pre-sigmoid, thresholded at delta, zero diagonal), normalized
with self-loops, and propagated K steps. The loss combines per-class
mean/std alignment of the stacked representations, teacher cross-entropy
on the synthetic labels, and an RBF smoothness term; features and
generator parameters are updated in alternating phases.
"""

from __future__ import annotations

import logging
import struct
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import NumericAbort, Tensor
from .graph_core import (ClassStats, Dataset, ValidationError, condensation_view,
                         write_dataset_dir, write_json_file, load_dataset)
from .sgc_pretrain import SgcModel, TeacherCache, head_forward

log = logging.getLogger(__name__)


@dataclass
class CondenseConfig:
    reduction_rate: float = 0.026
    rate_base: str = "all_nodes"      # "all_nodes" | "train_nodes"
    alpha: float = 1.0                # representation alignment weight
    beta: float = 1.0                 # logit alignment weight
    gamma: float = 1.0                # smoothness weight
    eta_x: float = 0.005              # feature learning rate
    eta_phi: float = 0.001            # generator learning rate
    tau1: int = 10                    # feature steps per cycle
    tau2: int = 5                     # generator steps per cycle
    steps: int = 1000
    K: int = 2
    delta: float = 0.01
    rbf_bandwidth: float | None = None  # None -> median heuristic at init
    smoothness_sign: str = "complement"  # "complement" | "paper-literal"
    gen_hidden: int = 128
    optimizer: str = "adam"             # "adam" | "sgd"
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.reduction_rate <= 1.0:
            raise ValidationError("reduction_rate must be in (0, 1]")
        if self.tau1 < 1 or self.tau2 < 1:
            raise ValidationError("tau1 and tau2 must be >= 1")
        if self.steps < 0:
            raise ValidationError("steps must be >= 0")
        if not 0.0 <= self.delta < 1.0:
            raise ValidationError("delta must be in [0, 1)")
        if self.rate_base not in ("all_nodes", "train_nodes"):
            raise ValidationError(f"unknown rate_base {self.rate_base!r}")
        if self.smoothness_sign not in ("complement", "paper-literal"):
            raise ValidationError(f"unknown smoothness_sign {self.smoothness_sign!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class AdjacencyGenerator:
    """Pairwise MLP scoring ordered node pairs; the first layer is stored as
    two d-wide blocks so [x_i; x_j] @ W1 evaluates as x_i @ W1a + x_j @ W1b."""

    params: dict[str, np.ndarray]

    @classmethod
    def create(cls, d: int, hidden: int, rng: np.random.Generator) -> "AdjacencyGenerator":
        w1 = ad.xavier_uniform(rng, 2 * d, hidden)
        dt = ad.get_default_dtype()
        return cls({
            "w1a": w1[:d].copy(),
            "w1b": w1[d:].copy(),
            "b1": np.zeros((1, hidden), dtype=dt),
            "w2": ad.xavier_uniform(rng, hidden, hidden),
            "b2": np.zeros((1, hidden), dtype=dt),
            "w3": ad.xavier_uniform(rng, hidden, 1),
            "b3": np.zeros((1, 1), dtype=dt),
        })


@dataclass
class CondensedGraph:
    features: np.ndarray          # N' x d
    labels: np.ndarray            # N', sorted by class id
    generator: AdjacencyGenerator
    delta: float
    adjacency: np.ndarray         # dense N' x N', thresholded, zero diagonal

    @property
    def num_nodes(self) -> int:
        return int(self.labels.shape[0])

    def class_blocks(self) -> list[tuple[int, int, int]]:
        """(class_id, start, stop) for the contiguous class-sorted rows."""
        return label_blocks(self.labels)


def label_blocks(labels: np.ndarray) -> list[tuple[int, int, int]]:
    blocks = []
    start = 0
    for c in np.unique(labels):
        count = int(np.sum(labels == c))
        blocks.append((int(c), start, start + count))
        start += count
    return blocks


# ---------------------------------------------------------------------------
# synthetic graph construction
# ---------------------------------------------------------------------------

def sample_labels(labels: np.ndarray, train_mask: np.ndarray, r: float,
                  num_nodes: int, rate_base: str = "all_nodes") -> np.ndarray:
    """Per-class synthetic label counts: max(1, round(N_c * r)), sorted by class.

    With rate_base="all_nodes" the class sizes N_c are the full node count
    distributed by the training-label histogram; with "train_nodes" they are
    the raw training counts.
    """
    y_train = np.asarray(labels)[np.asarray(train_mask, dtype=np.int64)]
    if np.any(y_train < 0):
        raise ValidationError("train mask contains unlabeled nodes")
    counts = np.bincount(y_train)
    total = counts.sum()
    out = []
    for c, n_c in enumerate(counts):
        if n_c == 0:
            log.warning("class %d has no training nodes; skipped in synthetic labels", c)
            continue
        target = r * num_nodes * n_c / total if rate_base == "all_nodes" else r * n_c
        out.extend([c] * max(1, int(np.floor(target + 0.5))))
    return np.asarray(out, dtype=np.int64)


def init_features(features: np.ndarray, labels: np.ndarray, y_prime: np.ndarray,
                  train_mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Seed each synthetic node with a sampled same-class training row
    (without replacement while the class pool lasts)."""
    train_mask = np.asarray(train_mask, dtype=np.int64)
    rows = np.empty((y_prime.shape[0], features.shape[1]), dtype=features.dtype)
    for c, start, stop in label_blocks(y_prime):
        pool = train_mask[labels[train_mask] == c]
        need = stop - start
        chosen = []
        while need > 0:
            take = min(need, pool.shape[0])
            chosen.append(rng.choice(pool, size=take, replace=False))
            need -= take
        rows[start:stop] = features[np.concatenate(chosen)]
    return rows


def median_bandwidth(features: np.ndarray) -> float:
    """Median pairwise Euclidean distance (distinct pairs); 1.0 if degenerate."""
    x = features.astype(np.float64)
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2 * x @ x.T
    iu = np.triu_indices(x.shape[0], k=1)
    dists = np.sqrt(np.maximum(d2[iu], 0.0))
    med = float(np.median(dists)) if dists.size else 0.0
    return med if med > 0 else 1.0


def generator_scores(gen_params: dict[str, Tensor], xp: Tensor) -> Tensor:
    """Raw pairwise scores g([x_i; x_j]) for all ordered pairs, as an n*n x 1
    column (i-major)."""
    u = ad.add(ad.matmul(xp, gen_params["w1a"]), gen_params["b1"])
    v = ad.matmul(xp, gen_params["w1b"])
    h0 = ad.relu(ad.pairwise_row_add(u, v))
    h1 = ad.relu(ad.add(ad.matmul(h0, gen_params["w2"]), gen_params["b2"]))
    return ad.add(ad.matmul(h1, gen_params["w3"]), gen_params["b3"])


def generate_adjacency_tensor(gen_params: dict[str, Tensor], xp: Tensor,
                              delta: float) -> Tensor:
    """Dense synthetic adjacency: sigmoid of order-averaged pair scores,
    entries below delta zeroed, diagonal zeroed."""
    n = xp.shape[0]
    smat = ad.reshape(generator_scores(gen_params, xp), (n, n))
    ssym = ad.scale(ad.add(smat, ad.transpose(smat)), 0.5)
    araw = ad.sigmoid(ssym)
    keep = araw.values >= delta
    np.fill_diagonal(keep, False)
    return ad.mask_mul(araw, keep)


def generate_adjacency(gen: AdjacencyGenerator, features: np.ndarray,
                       delta: float) -> np.ndarray:
    params = {k: Tensor(v) for k, v in gen.params.items()}
    return generate_adjacency_tensor(params, Tensor(features), delta).values


def normalize_dense_tensor(a_prime: Tensor) -> Tensor:
    """Differentiable self-loop symmetric normalization of a dense adjacency."""
    deg = ad.add_scalar(ad.row_sum(a_prime), 1.0)
    dinv = ad.pow_scalar(deg, -0.5)
    scaled = ad.scale_cols(ad.scale_rows(a_prime, dinv), ad.transpose(dinv))
    return ad.add_diag(scaled, ad.pow_scalar(deg, -1.0))


def propagate_dense(ahat: Tensor, xp: Tensor, K: int) -> list[Tensor]:
    layers = [xp]
    for _ in range(K):
        layers.append(ad.matmul(ahat, layers[-1]))
    return layers


# ---------------------------------------------------------------------------
# loss terms
# ---------------------------------------------------------------------------

def loss_rep(stats: ClassStats, z_prime: Tensor, y_prime: np.ndarray) -> Tensor:
    """Class-weighted mean/std alignment of the stacked representations."""
    class_to_idx = {int(c): i for i, c in enumerate(stats.classes)}
    dt = ad.get_default_dtype()
    total = Tensor(np.zeros((1, 1), dtype=dt))
    for c, start, stop in label_blocks(y_prime):
        assert stop > start, "synthetic class with zero nodes"
        if c not in class_to_idx:
            raise ValidationError(f"synthetic class {c} missing from teacher statistics")
        i = class_to_idx[c]
        zc = ad.slice_rows(z_prime, start, stop)
        mu_t = Tensor(stats.mean[i].reshape(1, -1), dtype=dt)
        sd_t = Tensor(stats.std[i].reshape(1, -1), dtype=dt)
        term = ad.add(ad.mse(ad.mean_rows(zc), mu_t), ad.mse(ad.std_rows(zc), sd_t))
        total = ad.add(total, ad.scale(term, float(stats.weight[i])))
    return total


def loss_logit(ahat: Tensor, xp: Tensor, model: SgcModel, y_prime: np.ndarray,
               params: dict[str, Tensor] | None = None) -> Tensor:
    """Teacher cross-entropy on the synthetic graph (sum reduction)."""
    e_last = propagate_dense(ahat, xp, model.K)[-1]
    logits = head_forward(model, e_last, params)
    return ad.softmax_cross_entropy(logits, y_prime, reduction="sum")


def loss_smooth(a_prime: Tensor, xp: Tensor, bandwidth: float,
                sign_mode: str = "complement") -> Tensor:
    """Edge-weighted RBF similarity of synthetic features.

    complement: sum A'_ij (1 - sim_ij); paper-literal: sum A'_ij sim_ij.
    """
    n = xp.shape[0]
    dt = ad.get_default_dtype()
    sq = ad.row_sum(ad.mul(xp, xp))
    ones_row = Tensor(np.ones((1, n), dtype=dt))
    ones_col = Tensor(np.ones((n, 1), dtype=dt))
    gram = ad.matmul(xp, ad.transpose(xp))
    d2 = ad.add(ad.add(ad.matmul(sq, ones_row), ad.matmul(ones_col, ad.transpose(sq))),
                ad.scale(gram, -2.0))
    sim = ad.exp(ad.scale(d2, -1.0 / (2.0 * bandwidth * bandwidth)))
    if sign_mode == "complement":
        return ad.sum_all(ad.mul(a_prime, ad.add_scalar(ad.scale(sim, -1.0), 1.0)))
    return ad.sum_all(ad.mul(a_prime, sim))


def total_loss(teacher: TeacherCache, gen_params: dict[str, Tensor], xp: Tensor,
               y_prime: np.ndarray, cfg: CondenseConfig, bandwidth: float,
               head_params: dict[str, Tensor] | None = None):
    """Weighted loss and the per-term weighted contributions.

    Terms with zero weight are not computed at all.
    """
    a_prime = generate_adjacency_tensor(gen_params, xp, cfg.delta)
    ahat = normalize_dense_tensor(a_prime)
    dt = ad.get_default_dtype()
    zero = lambda: Tensor(np.zeros((1, 1), dtype=dt))

    parts = {}
    parts["rep"] = (ad.scale(loss_rep(teacher.class_stats,
                                      ad.concat_cols(propagate_dense(ahat, xp, cfg.K)),
                                      y_prime), cfg.alpha)
                    if cfg.alpha != 0.0 else zero())
    parts["lgt"] = (ad.scale(loss_logit(ahat, xp, teacher.model, y_prime, head_params),
                             cfg.beta)
                    if cfg.beta != 0.0 else zero())
    parts["smt"] = (ad.scale(loss_smooth(a_prime, xp, bandwidth, cfg.smoothness_sign),
                             cfg.gamma)
                    if cfg.gamma != 0.0 else zero())
    total = ad.add(ad.add(parts["rep"], parts["lgt"]), parts["smt"])
    return total, parts, a_prime


# ---------------------------------------------------------------------------
# the optimization loop
# ---------------------------------------------------------------------------

@dataclass
class TraceRow:
    step: int
    loss_total: float
    loss_rep: float
    loss_lgt: float
    loss_smt: float


def run_condensation(dataset: Dataset, teacher: TeacherCache, cfg: CondenseConfig,
                     step_callback=None) -> tuple[CondensedGraph, list[TraceRow], dict]:
    """Alternating optimization of synthetic features and generator parameters.

    Returns the condensed graph (adjacency materialized once after the
    loop), the per-step loss trace, and run metadata.
    """
    cfg.validate()
    if teacher.model.K != cfg.K:
        raise ValidationError(
            f"teacher propagation depth {teacher.model.K} != configured {cfg.K}")

    view = condensation_view(dataset)
    rng = np.random.default_rng(cfg.seed)
    y_prime = sample_labels(view.labels, view.splits["train"], cfg.reduction_rate,
                            view.num_nodes, cfg.rate_base)
    x0 = init_features(view.features, view.labels, y_prime, view.splits["train"], rng)
    bandwidth = cfg.rbf_bandwidth if cfg.rbf_bandwidth else median_bandwidth(x0)

    gen = AdjacencyGenerator.create(dataset.num_features, cfg.gen_hidden, rng)
    xp = Tensor(x0, requires_grad=True)
    gen_params = {k: Tensor(v, requires_grad=True) for k, v in gen.params.items()}
    head_params = {k: Tensor(v) for k, v in teacher.model.params.items()}

    opt_x = ad.AdamState([xp], lr=cfg.eta_x)
    opt_phi = ad.AdamState(list(gen_params.values()), lr=cfg.eta_phi)
    step = ad.adam_step if cfg.optimizer == "adam" else ad.sgd_step

    class_counts = np.bincount(y_prime)
    trace: list[TraceRow] = []
    last_good = None
    started = time.perf_counter()
    for t in range(cfg.steps):
        xp.zero_grad()
        for p in gen_params.values():
            p.zero_grad()
        with ad.Tape() as tape:
            loss, parts, a_prime = total_loss(teacher, gen_params, xp, y_prime, cfg,
                                              bandwidth, head_params)
        if not np.isfinite(loss.item()):
            snapshot = _materialize(last_good, y_prime, cfg) if last_good else None
            raise NumericAbort(
                f"condensation loss became non-finite at step {t}"
                + ("; last good snapshot attached" if snapshot else ""),
            ) from None
        tape.backward(loss)
        grads_finite = np.all(np.isfinite(xp.grad)) if xp.grad is not None else True
        for p in gen_params.values():
            if p.grad is not None:
                grads_finite = grads_finite and bool(np.all(np.isfinite(p.grad)))
        if not grads_finite:
            raise NumericAbort(f"non-finite gradient at step {t}")

        if t % (cfg.tau1 + cfg.tau2) < cfg.tau1:
            step(opt_x)
        else:
            step(opt_phi)

        assert np.array_equal(np.bincount(y_prime), class_counts)
        trace.append(TraceRow(t, loss.item(), parts["rep"].item(),
                              parts["lgt"].item(), parts["smt"].item()))
        last_good = (xp.values.copy(), {k: p.values.copy() for k, p in gen_params.items()})
        if step_callback is not None:
            step_callback(t, a_prime.values, xp.values, y_prime)

    gen.params = {k: p.values.copy() for k, p in gen_params.items()}
    final = CondensedGraph(
        features=xp.values.copy(),
        labels=y_prime,
        generator=gen,
        delta=cfg.delta,
        adjacency=generate_adjacency(gen, xp.values, cfg.delta),
    )
    meta = {
        "bandwidth": bandwidth,
        "wall_clock_seconds": time.perf_counter() - started,
        "final_losses": {
            "total": trace[-1].loss_total if trace else None,
            "rep": trace[-1].loss_rep if trace else None,
            "lgt": trace[-1].loss_lgt if trace else None,
            "smt": trace[-1].loss_smt if trace else None,
        },
    }
    return final, trace, meta


def _materialize(snapshot, y_prime, cfg) -> CondensedGraph:
    x_vals, gen_vals = snapshot
    gen = AdjacencyGenerator(dict(gen_vals))
    return CondensedGraph(x_vals, y_prime, gen, cfg.delta,
                          generate_adjacency(gen, x_vals, cfg.delta))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_condensed(cond: CondensedGraph, directory, *, trace=None,
                   config: CondenseConfig | None = None, seed: int | None = None,
                   extra_meta: dict | None = None, record_wall_clock: bool = True) -> None:
    """Write the condensed graph as a standard dataset directory plus
    condense_meta.json, generator.bin and (optionally) trace.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = cond.num_nodes
    src, dst = np.nonzero(cond.adjacency)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    weights = cond.adjacency[src, dst].astype(np.float32)
    num_classes = int(cond.labels.max()) + 1 if n else 0
    write_dataset_dir(
        directory,
        features=cond.features,
        src=src, dst=dst, weights=weights,
        labels=cond.labels,
        splits={"train": list(range(n)), "val": [], "test": []},
        num_classes=num_classes,
        mode="transductive",
    )
    _save_generator(cond.generator, directory / "generator.bin")
    meta = {
        "delta": cond.delta,
        "num_nodes": n,
        "config": asdict(config) if config else None,
        "seed": seed,
    }
    if extra_meta:
        meta.update(extra_meta)
    if not record_wall_clock:
        meta["wall_clock_seconds"] = None
    write_json_file(directory / "condense_meta.json", meta)
    if trace is not None:
        write_trace(directory / "trace.csv", trace)


def write_trace(path, trace: list[TraceRow]) -> None:
    with open(path, "w") as f:
        f.write("step,loss_total,loss_rep,loss_lgt,loss_smt\n")
        for row in trace:
            f.write(f"{row.step},{row.loss_total:.9g},{row.loss_rep:.9g},"
                    f"{row.loss_lgt:.9g},{row.loss_smt:.9g}\n")


def load_condensed(directory) -> CondensedGraph:
    directory = Path(directory)
    ds = load_dataset(directory)
    dense = np.zeros((ds.num_nodes, ds.num_nodes), dtype=np.float32)
    src = np.repeat(np.arange(ds.num_nodes), np.diff(ds.graph.row_ptr))
    dense[src, ds.graph.col_idx] = ds.graph.weights.astype(np.float32)
    import json
    meta = json.loads((directory / "condense_meta.json").read_text())
    gen = _load_generator(directory / "generator.bin")
    return CondensedGraph(ds.features, ds.labels, gen, float(meta["delta"]), dense)


_GEN_KEYS = ("w1a", "w1b", "b1", "w2", "b2", "w3", "b3")


def _save_generator(gen: AdjacencyGenerator, path) -> None:
    with open(path, "wb") as f:
        f.write(b"SGCG")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<Q", len(_GEN_KEYS)))
        for key in _GEN_KEYS:
            arr = np.ascontiguousarray(gen.params[key], dtype="<f4")
            f.write(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
            f.write(arr.tobytes())


def _load_generator(path) -> AdjacencyGenerator:
    from .graph_core import FormatError

    data = Path(path).read_bytes()
    if data[:4] != b"SGCG":
        raise FormatError(path, 0, f"bad magic {data[:4]!r}, expected b'SGCG'")
    (count,) = struct.unpack_from("<Q", data, 8)
    off = 16
    params = {}
    for key in _GEN_KEYS[:count]:
        rows, cols = struct.unpack_from("<QQ", data, off)
        off += 16
        params[key] = np.frombuffer(data, dtype="<f4", count=rows * cols,
                                    offset=off).reshape(rows, cols).astype(ad.get_default_dtype())
        off += rows * cols * 4
    return AdjacencyGenerator(params)
