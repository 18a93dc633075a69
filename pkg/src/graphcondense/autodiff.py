"""Reverse-mode automatic differentiation over dense 2-D float matrices.

A :class:`Tape` records every differentiable operation in execution order;
``backward`` replays the records in exact reverse order, accumulating
gradients additively into the participating tensors. All values are 2-D
numpy arrays — scalars are 1x1, vectors are nx1 or 1xn. There is no
broadcasting beyond adding a 1xn row vector (bias) to an nxm matrix.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "AdamState",
    "NumericAbort",
    "set_default_dtype",
    "get_default_dtype",
    "set_debug_checks",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "add_scalar",
    "transpose",
    "reshape",
    "concat_cols",
    "slice_rows",
    "row_sum",
    "sum_all",
    "mean_rows",
    "std_rows",
    "relu",
    "sigmoid",
    "exp",
    "pow_scalar",
    "dropout",
    "row_softmax",
    "softmax_cross_entropy",
    "mse",
    "mask_mul",
    "add_diag",
    "scale_rows",
    "scale_cols",
    "pairwise_row_add",
    "backward",
    "adam_step",
    "gradient_check",
    "GradCheckReport",
]

_DEFAULT_DTYPE = np.float32
_DEBUG_CHECKS = False


class NumericAbort(Exception):
    """Optimization hit NaN/Inf; message carries the diagnostics."""


def set_default_dtype(dtype) -> None:
    """Set the dtype used for tensors created without an explicit dtype."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _DEFAULT_DTYPE = dt.type


def get_default_dtype():
    return _DEFAULT_DTYPE


def set_debug_checks(enabled: bool) -> None:
    """When enabled, every op output is checked for NaN/Inf."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


class Tensor:
    """A 2-D matrix with an optional gradient accumulator."""

    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False, dtype=None):
        arr = np.asarray(values, dtype=dtype or _DEFAULT_DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensors are 2-D; got shape {arr.shape}")
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.values[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy(), requires_grad=False, dtype=self.values.dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.values.dtype.name}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of operations; backward replays it in reverse."""

    _active: "Tape | None" = None

    def __init__(self):
        self._records: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        if Tape._active is not None:
            raise RuntimeError("a tape is already active; tapes do not nest")
        Tape._active = self
        return self

    def __exit__(self, *exc) -> None:
        Tape._active = None

    def record(self, out: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
        self._records.append((out, backward_fn))

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss)=1 and propagate through records in reverse."""
        if loss.values.size != 1:
            raise ValueError("backward expects a scalar (1x1) loss tensor")
        loss.accumulate_grad(np.ones_like(loss.values))
        for out, fn in reversed(self._records):
            if out.grad is None:
                continue
            fn(out.grad)


def backward(loss: Tensor, tape: Tape) -> None:
    tape.backward(loss)


def _finalize(out: Tensor, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    if _DEBUG_CHECKS and not np.all(np.isfinite(out.values)):
        raise FloatingPointError("non-finite values produced by an op")
    tape = Tape._active
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, backward_fn)
    return out


def register_op(out: Tensor, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    """Record a custom op on the active tape; backward_fn receives d(out)."""
    return _finalize(out, inputs, backward_fn)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dims differ {a.shape} @ {b.shape}")
    out = Tensor(a.values @ b.values, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.values.T)
        if b.requires_grad:
            b.accumulate_grad(a.values.T @ g)

    return _finalize(out, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; b may also be a 1xn row vector added to every row of a."""
    row_broadcast = b.shape == (1, a.shape[1]) and a.shape[0] != 1
    if not row_broadcast:
        _check_same_shape(a, b, "add")
    out = Tensor(a.values + b.values, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0, keepdims=True) if row_broadcast else g)

    return _finalize(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    out = Tensor(a.values - b.values, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(-g)

    return _finalize(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    out = Tensor(a.values * b.values, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * b.values)
        if b.requires_grad:
            b.accumulate_grad(g * a.values)

    return _finalize(out, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.values * c, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * c)

    return _finalize(out, (a,), bwd)


def add_scalar(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.values + c, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g)

    return _finalize(out, (a,), bwd)


def transpose(a: Tensor) -> Tensor:
    out = Tensor(a.values.T.copy(), dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g.T)

    return _finalize(out, (a,), bwd)


def reshape(a: Tensor, shape: tuple[int, int]) -> Tensor:
    if int(np.prod(shape)) != a.values.size:
        raise ValueError(f"reshape: cannot view {a.shape} as {shape}")
    out = Tensor(a.values.reshape(shape).copy(), dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.shape))

    return _finalize(out, (a,), bwd)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise ValueError("concat_cols: empty input")
    rows = tensors[0].shape[0]
    for t in tensors:
        if t.shape[0] != rows:
            raise ValueError("concat_cols: row counts differ")
    out = Tensor(np.concatenate([t.values for t in tensors], axis=1), dtype=tensors[0].dtype)
    widths = [t.shape[1] for t in tensors]

    def bwd(g):
        start = 0
        for t, w in zip(tensors, widths):
            if t.requires_grad:
                t.accumulate_grad(g[:, start:start + w])
            start += w

    return _finalize(out, tuple(tensors), bwd)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.shape[0]):
        raise ValueError(f"slice_rows: bad range [{start}, {stop}) for {a.shape[0]} rows")
    out = Tensor(a.values[start:stop].copy(), dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.values)
            full[start:stop] = g
            a.accumulate_grad(full)

    return _finalize(out, (a,), bwd)


def row_sum(a: Tensor) -> Tensor:
    out = Tensor(a.values.sum(axis=1, keepdims=True), dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(np.repeat(g, a.shape[1], axis=1))

    return _finalize(out, (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.array([[a.values.sum()]]), dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(np.full_like(a.values, g[0, 0]))

    return _finalize(out, (a,), bwd)


def mean_rows(a: Tensor) -> Tensor:
    """Column means: nxd -> 1xd."""
    out = Tensor(a.values.mean(axis=0, keepdims=True), dtype=a.dtype)
    n = a.shape[0]

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(np.repeat(g / n, n, axis=0))

    return _finalize(out, (a,), bwd)


def std_rows(a: Tensor) -> Tensor:
    """Per-column population standard deviation: nxd -> 1xd.

    At sigma=0 the subgradient 0 is used.
    """
    mu = a.values.mean(axis=0, keepdims=True)
    centered = a.values - mu
    sigma = np.sqrt(np.mean(centered * centered, axis=0, keepdims=True))
    out = Tensor(sigma.astype(a.dtype, copy=False), dtype=a.dtype)
    n = a.shape[0]

    def bwd(g):
        if a.requires_grad:
            safe = np.where(sigma > 0, sigma, 1.0)
            d = centered / (n * safe)
            d[:, (sigma == 0).ravel()] = 0.0
            a.accumulate_grad(d * g)

    return _finalize(out, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.values, 0), dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * (a.values > 0))

    return _finalize(out, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    # stable in both tails
    v = a.values
    s = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    s = s.astype(a.dtype, copy=False)
    out = Tensor(s, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * s * (1.0 - s))

    return _finalize(out, (a,), bwd)


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.values)
    out = Tensor(e, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * e)

    return _finalize(out, (a,), bwd)


def pow_scalar(a: Tensor, p: float) -> Tensor:
    """Elementwise a**p; caller guarantees the base is positive for non-integer p."""
    v = np.power(a.values, p)
    out = Tensor(v, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * p * np.power(a.values, p - 1.0))

    return _finalize(out, (a,), bwd)


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; the sampled mask is recorded for the backward pass."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    if p == 0.0:
        return a
    keep = (rng.random(a.shape) >= p).astype(a.dtype) / (1.0 - p)
    out = Tensor(a.values * keep, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * keep)

    return _finalize(out, (a,), bwd)


def row_softmax(a: Tensor) -> Tensor:
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = (e / e.sum(axis=1, keepdims=True)).astype(a.dtype, copy=False)
    out = Tensor(s, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            dot = (g * s).sum(axis=1, keepdims=True)
            a.accumulate_grad(s * (g - dot))

    return _finalize(out, (a,), bwd)


def softmax_cross_entropy(logits: Tensor, targets, reduction: str = "mean") -> Tensor:
    """Cross-entropy of row-softmax(logits) against integer class targets.

    Stabilized by row-max subtraction. ``reduction`` is 'mean' or 'sum'.
    """
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    y = np.asarray(targets, dtype=np.int64).ravel()
    n, c = logits.shape
    if y.shape[0] != n:
        raise ValueError(f"targets length {y.shape[0]} != rows {n}")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise ValueError(f"target class id out of range [0, {c})")
    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logprob = shifted - logsumexp
    picked = logprob[np.arange(n), y]
    total = -picked.sum()
    if reduction == "mean":
        total /= n
    out = Tensor(np.array([[total]]), dtype=logits.dtype)

    def bwd(g):
        if logits.requires_grad:
            soft = np.exp(logprob)
            soft[np.arange(n), y] -= 1.0
            if reduction == "mean":
                soft /= n
            logits.accumulate_grad(soft * g[0, 0])

    return _finalize(out, (logits,), bwd)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean over all entries of the squared difference."""
    _check_same_shape(a, b, "mse")
    diff = a.values - b.values
    out = Tensor(np.array([[np.mean(diff * diff)]]), dtype=a.dtype)
    size = a.values.size

    def bwd(g):
        coef = 2.0 * g[0, 0] / size
        if a.requires_grad:
            a.accumulate_grad(coef * diff)
        if b.requires_grad:
            b.accumulate_grad(-coef * diff)

    return _finalize(out, (a, b), bwd)


def mask_mul(a: Tensor, mask: np.ndarray) -> Tensor:
    """Elementwise product with a constant 0/1 mask (gradient gated the same way)."""
    if mask.shape != a.shape:
        raise ValueError(f"mask_mul: mask shape {mask.shape} != {a.shape}")
    m = mask.astype(a.dtype)
    out = Tensor(a.values * m, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * m)

    return _finalize(out, (a,), bwd)


def add_diag(a: Tensor, v: Tensor) -> Tensor:
    """a + diag(v) for square a and nx1 v."""
    n = a.shape[0]
    if a.shape[0] != a.shape[1] or v.shape != (n, 1):
        raise ValueError(f"add_diag: need square a and nx1 v, got {a.shape}, {v.shape}")
    vals = a.values.copy()
    idx = np.arange(n)
    vals[idx, idx] += v.values[:, 0]
    out = Tensor(vals, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if v.requires_grad:
            v.accumulate_grad(g[idx, idx].reshape(n, 1))

    return _finalize(out, (a, v), bwd)


def scale_rows(a: Tensor, v: Tensor) -> Tensor:
    """Multiply row i of a by v[i, 0]; v is nx1."""
    if v.shape != (a.shape[0], 1):
        raise ValueError(f"scale_rows: v must be {a.shape[0]}x1, got {v.shape}")
    out = Tensor(a.values * v.values, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * v.values)
        if v.requires_grad:
            v.accumulate_grad((g * a.values).sum(axis=1, keepdims=True))

    return _finalize(out, (a, v), bwd)


def scale_cols(a: Tensor, v: Tensor) -> Tensor:
    """Multiply column j of a by v[0, j]; v is 1xn."""
    if v.shape != (1, a.shape[1]):
        raise ValueError(f"scale_cols: v must be 1x{a.shape[1]}, got {v.shape}")
    out = Tensor(a.values * v.values, dtype=a.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * v.values)
        if v.requires_grad:
            v.accumulate_grad((g * a.values).sum(axis=0, keepdims=True))

    return _finalize(out, (a, v), bwd)


def pairwise_row_add(u: Tensor, v: Tensor) -> Tensor:
    """All ordered row sums: out[i*m + j] = u[i] + v[j] for u nxk, v mxk."""
    if u.shape[1] != v.shape[1]:
        raise ValueError(f"pairwise_row_add: widths differ {u.shape} vs {v.shape}")
    n, k = u.shape
    m = v.shape[0]
    out_vals = (u.values[:, None, :] + v.values[None, :, :]).reshape(n * m, k)
    out = Tensor(out_vals, dtype=u.dtype)

    def bwd(g):
        g3 = g.reshape(n, m, k)
        if u.requires_grad:
            u.accumulate_grad(g3.sum(axis=1))
        if v.requires_grad:
            v.accumulate_grad(g3.sum(axis=0))

    return _finalize(out, (u, v), bwd)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class AdamState:
    """Adam moment accumulators for a fixed parameter group."""

    def __init__(self, params: Sequence[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]


def adam_step(state: AdamState) -> None:
    """One Adam update with bias correction; params with no grad are skipped."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for i, p in enumerate(state.params):
        if p.grad is None:
            continue
        g = p.grad
        if state.weight_decay:
            g = g + state.weight_decay * p.values
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * (g * g)
        m_hat = state.m[i] / (1 - b1 ** t)
        v_hat = state.v[i] / (1 - b2 ** t)
        p.values -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.values.dtype)


def sgd_step(state: AdamState) -> None:
    """Plain gradient descent fallback sharing the AdamState container."""
    state.step_count += 1
    for p in state.params:
        if p.grad is None:
            continue
        g = p.grad
        if state.weight_decay:
            g = g + state.weight_decay * p.values
        p.values -= (state.lr * g).astype(p.values.dtype)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

class GradCheckReport:
    def __init__(self):
        self.per_param: list[tuple[str, float]] = []

    @property
    def max_rel_error(self) -> float:
        return max((e for _, e in self.per_param), default=0.0)

    def __repr__(self) -> str:
        lines = ", ".join(f"{n}={e:.3e}" for n, e in self.per_param)
        return f"GradCheckReport(max={self.max_rel_error:.3e}; {lines})"


def gradient_check(f: Callable[[], Tensor], params: Sequence[Tensor],
                   names: Sequence[str] | None = None) -> GradCheckReport:
    """Compare analytic gradients of scalar f() with central finite differences.

    f must be deterministic and built from float64 tensors. Step size is
    h = 1e-5 * max(1, |x|) per coordinate. Raises if two forward passes of
    f disagree (non-determinism would invalidate the comparison).
    """
    names = list(names) if names is not None else [f"p{i}" for i in range(len(params))]
    for p in params:
        if p.values.dtype != np.float64:
            raise ValueError("gradient_check requires float64 parameters")
        p.zero_grad()

    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    base1 = loss.item()
    base2 = f().item()
    if base1 != base2:
        raise RuntimeError(
            f"gradient_check aborted: forward passes disagree ({base1!r} vs {base2!r})")

    report = GradCheckReport()
    for p, name in zip(params, names):
        analytic = p.grad if p.grad is not None else np.zeros_like(p.values)
        numeric = np.zeros_like(p.values)
        flat = p.values.ravel()
        num_flat = numeric.ravel()
        for i in range(flat.size):
            orig = flat[i]
            h = 1e-5 * max(1.0, abs(orig))
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            num_flat[i] = (fp - fm) / (2 * h)
        denom = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
        rel = float(np.max(np.abs(analytic - numeric)) / denom)
        report.per_param.append((name, rel))
    return report


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype or _DEFAULT_DTYPE)
