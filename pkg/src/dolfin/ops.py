"""Differentiable operations on :class:`~dolfin.tensor.Tensor`.

Every op validates shapes, computes the forward value with numpy, and
registers a backward callback with the active tape (see
:func:`dolfin.tensor.record`).  Tensors are 1-D vectors, 2-D matrices, or
0-d scalars; there is no broadcasting beyond the row-bias case that the
models need.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import ShapeError, Tensor, accumulate_grad, record

__all__ = [
    "FilterBank",
    "add",
    "clamp_max_one",
    "concat",
    "conv1d_temporal",
    "cross_entropy",
    "dropout",
    "embedding_lookup",
    "lstm_cell",
    "masked_dropout",
    "matmul",
    "maxpool_over_time",
    "mul",
    "relu",
    "scale",
    "softmax_rows",
    "stack_rows",
    "sum_all",
    "sum_rows",
    "take_row",
]


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; a 1-D operand is treated as a single row (left) or column (right)."""
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError(f"matmul needs 1-D or 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(g):
        a2 = a.data if a.ndim == 2 else a.data[None, :]
        b2 = b.data if b.ndim == 2 else b.data[:, None]
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        accumulate_grad(a, (g2 @ b2.T).reshape(a.shape))
        accumulate_grad(b, (a2.T @ g2).reshape(b.shape))

    record((a, b), (out,), bwd)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a 1-D bias may broadcast over the rows of a matrix."""
    if a.shape == b.shape:
        mat, bias = None, None
    elif a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        mat, bias = a, b
    elif b.ndim == 2 and a.ndim == 1 and b.shape[1] == a.shape[0]:
        mat, bias = b, a
    else:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data + b.data)

    def bwd(g):
        if mat is None:
            accumulate_grad(a, g)
            accumulate_grad(b, g)
        else:
            accumulate_grad(mat, g)
            accumulate_grad(bias, g.sum(axis=0))

    record((a, b), (out,), bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data * b.data)

    def bwd(g):
        accumulate_grad(a, g * b.data)
        accumulate_grad(b, g * a.data)

    record((a, b), (out,), bwd)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    c = float(c)
    out = Tensor(x.data * c)

    def bwd(g):
        accumulate_grad(x, g * c)

    record((x,), (out,), bwd)
    return out


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the gate is 0 at exactly 0."""
    out = Tensor(np.maximum(x.data, 0.0))

    def bwd(g):
        accumulate_grad(x, g * (x.data > 0))

    record((x,), (out,), bwd)
    return out


def clamp_max_one(x: Tensor) -> Tensor:
    """Elementwise min(1, x).

    The subgradient at exactly 1 is taken as 1 (pass-through), so gradient
    keeps flowing when the truncation is just saturated.
    """
    out = Tensor(np.minimum(x.data, 1.0))

    def bwd(g):
        accumulate_grad(x, g * (x.data <= 1.0))

    record((x,), (out,), bwd)
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction; a 1-D input is one row."""
    if not np.isfinite(x.data).all():
        raise ValueError("softmax_rows: input contains non-finite values")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(s)

    def bwd(g):
        accumulate_grad(x, s * (g - (g * s).sum(axis=-1, keepdims=True)))

    record((x,), (out,), bwd)
    return out


def sum_rows(x: Tensor) -> Tensor:
    """Column sums of a matrix: [n x d] -> [d]."""
    if x.ndim != 2:
        raise ShapeError(f"sum_rows needs a 2-D input, got shape {x.shape}")
    out = Tensor(x.data.sum(axis=0))

    def bwd(g):
        accumulate_grad(x, np.broadcast_to(g, x.shape))

    record((x,), (out,), bwd)
    return out


def sum_all(x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    out = Tensor(np.asarray(x.data.sum(), dtype=x.dtype))

    def bwd(g):
        accumulate_grad(x, np.broadcast_to(g, x.shape))

    record((x,), (out,), bwd)
    return out


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat needs at least one input")
    if any(p.ndim != 1 for p in parts):
        raise ShapeError(f"concat needs 1-D inputs, got shapes {[p.shape for p in parts]}")
    out = Tensor(np.concatenate([p.data for p in parts]))
    offsets = np.cumsum([0] + [p.size for p in parts])

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            accumulate_grad(p, g[lo:hi])

    record(tuple(parts), (out,), bwd)
    return out


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length into an [n x d] matrix."""
    rows = list(rows)
    if not rows:
        raise ShapeError("stack_rows needs at least one row")
    width = rows[0].size
    if any(r.ndim != 1 or r.size != width for r in rows):
        raise ShapeError(f"stack_rows needs equal-length 1-D rows, got {[r.shape for r in rows]}")
    out = Tensor(np.stack([r.data for r in rows]))

    def bwd(g):
        for i, r in enumerate(rows):
            accumulate_grad(r, g[i])

    record(tuple(rows), (out,), bwd)
    return out


def take_row(x: Tensor, i: int) -> Tensor:
    """Row i of a matrix as a 1-D tensor."""
    if x.ndim != 2:
        raise ShapeError(f"take_row needs a 2-D input, got shape {x.shape}")
    if not 0 <= i < x.shape[0]:
        raise IndexError(f"row {i} out of range for shape {x.shape}")
    out = Tensor(x.data[i].copy())

    def bwd(g):
        full = np.zeros_like(x.data)
        full[i] = g
        accumulate_grad(x, full)

    record((x,), (out,), bwd)
    return out


def maxpool_over_time(x: Tensor) -> Tensor:
    """Columnwise maximum of [n x k] -> [k]; ties route gradient to the first row."""
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"maxpool_over_time needs a non-empty 2-D input, got shape {x.shape}")
    arg = np.argmax(x.data, axis=0)  # first occurrence on ties
    cols = np.arange(x.shape[1])
    out = Tensor(x.data[arg, cols])

    def bwd(g):
        full = np.zeros_like(x.data)
        full[arg, cols] = g
        accumulate_grad(x, full)

    record((x,), (out,), bwd)
    return out


def cross_entropy(logits: Tensor, gold: int) -> Tensor:
    """Negative log softmax probability of the gold category, computed in log space."""
    if logits.ndim != 1:
        raise ShapeError(f"cross_entropy needs 1-D logits, got shape {logits.shape}")
    m = logits.shape[0]
    if not 0 <= gold < m:
        raise IndexError(f"gold index {gold} out of range for {m} categories")
    z = logits.data - logits.data.max()
    lse = np.log(np.exp(z).sum())
    out = Tensor(np.asarray(lse - z[gold], dtype=logits.dtype))

    def bwd(g):
        p = np.exp(z - lse)
        p[gold] -= 1.0
        accumulate_grad(logits, g * p)

    record((logits,), (out,), bwd)
    return out


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of an embedding table; gradients scatter-add into the rows."""
    if table.ndim != 2:
        raise ShapeError(f"embedding_lookup needs a 2-D table, got shape {table.shape}")
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise ShapeError("embedding_lookup needs a non-empty 1-D id sequence")
    if idx.min() < 0 or idx.max() >= table.shape[0]:
        raise IndexError(f"token id out of range for table with {table.shape[0]} rows")
    out = Tensor(table.data[idx])

    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        accumulate_grad(table, full)

    record((table,), (out,), bwd)
    return out


def masked_dropout(x: Tensor, mask: np.ndarray, keep_prob: float) -> Tensor:
    """Apply a fixed keep-mask with inverted scaling (divide by keep_prob)."""
    if mask.shape != x.shape:
        raise ShapeError(f"dropout mask shape {mask.shape} does not match input {x.shape}")
    scaled = mask.astype(x.dtype) / keep_prob
    out = Tensor(x.data * scaled)

    def bwd(g):
        accumulate_grad(x, g * scaled)

    record((x,), (out,), bwd)
    return out


def dropout(x: Tensor, rate: float, *, rng: np.random.Generator | None = None,
            training: bool = False) -> Tensor:
    """Inverted dropout: identity at eval time, rescaled keep-mask at train time."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout at train time needs an explicit rng")
    keep = 1.0 - rate
    mask = rng.random(x.shape) < keep
    return masked_dropout(x, mask, keep)


@dataclass
class FilterBank:
    """Temporal convolution filters grouped by window size.

    ``weights[k]`` is laid out [sizes[k] * input_width, count] so a window
    flattened row-major multiplies straight into it; ``biases[k]`` is
    [count].
    """

    sizes: tuple[int, ...]
    weights: list[Tensor]
    biases: list[Tensor]

    def __post_init__(self):
        if not (len(self.sizes) == len(self.weights) == len(self.biases)):
            raise ShapeError("FilterBank fields must have one entry per window size")
        if any(h < 1 for h in self.sizes):
            raise ShapeError(f"filter sizes must be positive, got {self.sizes}")

    @property
    def total_filters(self) -> int:
        return sum(b.shape[0] for b in self.biases)

    def tensors(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def _pad_amounts(h: int) -> tuple[int, int]:
    # Symmetric zero-padding keeping output length == input length; even
    # sizes pad one less on the left (size 4: 1 left / 2 right).
    left = (h - 1) // 2
    return left, h - 1 - left


def conv1d_temporal(x: Tensor, filters: FilterBank, pad: bool = True) -> Tensor:
    """Slide every filter group over the rows of [n x d], one output row per position.

    With ``pad`` the input is zero-padded so each group yields n rows; the
    groups' channels are concatenated per position.  Without padding only a
    single window size is allowed (group outputs would disagree in length).
    """
    if x.ndim != 2:
        raise ShapeError(f"conv1d_temporal needs a 2-D input, got shape {x.shape}")
    n, d = x.shape
    if n < 1:
        raise ShapeError("conv1d_temporal: empty sequence")
    if not pad and len(filters.sizes) > 1:
        raise ShapeError("unpadded convolution cannot concatenate differing window sizes")

    groups = []  # (w, b, window_matrix, padded_len, left, out_len)
    outs = []
    for h, w, b in zip(filters.sizes, filters.weights, filters.biases):
        if w.shape[0] != h * d:
            raise ShapeError(
                f"filter weights for size {h} must have {h * d} rows, got {w.shape}"
            )
        if pad:
            left, right = _pad_amounts(h)
            xp = np.pad(x.data, ((left, right), (0, 0)))
            out_len = n
        else:
            if n < h:
                raise ShapeError(f"sequence of length {n} is shorter than filter size {h}")
            left = 0
            xp = x.data
            out_len = n - h + 1
        win = np.lib.stride_tricks.sliding_window_view(xp, (h, d))[:, 0]
        mat = win.reshape(out_len, h * d)
        outs.append(mat @ w.data + b.data)
        groups.append((w, b, mat, xp.shape[0], left, out_len))
    out = Tensor(np.concatenate(outs, axis=1))

    def bwd(g):
        gx = np.zeros_like(x.data) if x.requires_grad else None
        col = 0
        for (w, b, mat, padded_len, left, out_len), h in zip(groups, filters.sizes):
            k = w.shape[1]
            gh = g[:, col:col + k]
            col += k
            accumulate_grad(b, gh.sum(axis=0))
            accumulate_grad(w, mat.T @ gh)
            if gx is not None:
                gwin = (gh @ w.data.T).reshape(out_len, h, d)
                gxp = np.zeros((padded_len, d), dtype=x.dtype)
                for j in range(h):
                    gxp[j:j + out_len] += gwin[:, j]
                gx += gxp[left:left + x.shape[0]]
        if gx is not None:
            accumulate_grad(x, gx)

    record((x, *filters.tensors()), (out,), bwd)
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp(-softplus(-z)): stable on both tails.
    return np.exp(-np.logaddexp(0.0, -z))


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor,
              w_x: Tensor, w_h: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One step of a standard LSTM; gate order in the [4H] preactivation is i, f, g, o."""
    hidden = h_prev.shape[0]
    if x.ndim != 1 or h_prev.ndim != 1 or c_prev.ndim != 1:
        raise ShapeError("lstm_cell needs 1-D state and input vectors")
    if w_x.shape != (x.shape[0], 4 * hidden) or w_h.shape != (hidden, 4 * hidden) \
            or b.shape != (4 * hidden,) or c_prev.shape != (hidden,):
        raise ShapeError(
            f"lstm_cell: inconsistent shapes x={x.shape} h={h_prev.shape} c={c_prev.shape} "
            f"w_x={w_x.shape} w_h={w_h.shape} b={b.shape}"
        )
    pre = x.data @ w_x.data + h_prev.data @ w_h.data + b.data
    i = _sigmoid(pre[:hidden])
    f = _sigmoid(pre[hidden:2 * hidden])
    gbar = np.tanh(pre[2 * hidden:3 * hidden])
    o = _sigmoid(pre[3 * hidden:])
    c = f * c_prev.data + i * gbar
    tc = np.tanh(c)
    out_h = Tensor(o * tc)
    out_c = Tensor(c)

    def bwd(gh, gc):
        dc = gc + gh * o * (1.0 - tc * tc)
        dpre = np.concatenate([
            dc * gbar * i * (1.0 - i),
            dc * c_prev.data * f * (1.0 - f),
            dc * i * (1.0 - gbar * gbar),
            gh * tc * o * (1.0 - o),
        ])
        accumulate_grad(b, dpre)
        accumulate_grad(w_x, np.outer(x.data, dpre))
        accumulate_grad(w_h, np.outer(h_prev.data, dpre))
        accumulate_grad(x, w_x.data @ dpre)
        accumulate_grad(h_prev, w_h.data @ dpre)
        accumulate_grad(c_prev, dc * f)

    record((x, h_prev, c_prev, w_x, w_h, b), (out_h, out_c), bwd)
    return out_h, out_c
