"""Dense tensors on numpy with reverse-mode automatic differentiation.

The computation graph is recorded on an explicit :class:`Tape`.  While a
tape is active (``with Tape() as tape:``) every differentiable operation
appends a node holding its output tensors and a backward callback.  Nodes
are appended in execution order, so the record is already topologically
sorted and ``tape.backward(loss)`` simply walks it in reverse, seeding the
loss gradient with 1.

Leaf tensors created with ``requires_grad=True`` keep their ``grad``
buffer across backward calls; repeated backward passes accumulate until
``zero_grad`` resets them.  Intermediate gradients are cleared at the
start of every sweep.

Only float32 and float64 buffers are supported.  Gradient checks must run
at float64; central differences at float32 are too noisy to be meaningful.
Tapes are tracked per thread, so independent model instances may run on
separate threads as long as each keeps its tape to itself.
"""

from __future__ import annotations

import threading

import numpy as np

__all__ = ["Tensor", "Tape", "ShapeError", "backward", "parameter"]

_FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """A dense float array plus an optional gradient buffer of the same shape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape: "Tape | None" = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def copy_(self, values: np.ndarray) -> None:
        """Overwrite the buffer in place, keeping shape and dtype."""
        arr = np.asarray(values, dtype=self.data.dtype)
        if arr.shape != self.data.shape:
            raise ShapeError(
                f"cannot copy values of shape {arr.shape} into tensor of shape {self.data.shape}"
            )
        self.data[...] = arr

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"


def parameter(data, dtype=None) -> Tensor:
    """A leaf tensor that collects gradients."""
    return Tensor(data, requires_grad=True, dtype=dtype)


_TLS = threading.local()


def _stack() -> list:
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = _TLS.stack = []
    return stack


class Tape:
    """Execution-ordered record of differentiable operations.

    Each node is ``(outputs, backward_fn)`` where ``backward_fn`` receives
    one upstream gradient array per output and accumulates into the inputs
    it closed over.  Execution order is a topological order by
    construction, so the backward sweep is a single reverse pass.
    """

    def __init__(self):
        self._nodes: list[tuple[tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        _stack().pop()
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    @staticmethod
    def active() -> "Tape | None":
        stack = _stack()
        return stack[-1] if stack else None

    def backward(self, loss: Tensor) -> None:
        """Propagate d(loss)/d(leaf) to every reachable requires_grad leaf."""
        if loss.shape != ():
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        # Intermediate grads are per-sweep; leaf grads persist and accumulate.
        for outputs, _ in self._nodes:
            for out in outputs:
                out.grad = None
        loss.grad = np.ones((), dtype=loss.data.dtype)
        for outputs, backward_fn in reversed(self._nodes):
            grads = [out.grad for out in outputs]
            if all(g is None for g in grads):
                continue  # not reachable from the loss
            backward_fn(
                *(
                    np.zeros_like(out.data) if g is None else g
                    for out, g in zip(outputs, grads)
                )
            )


def backward(loss: Tensor) -> None:
    """Run the backward sweep of the tape that recorded ``loss``."""
    if loss._tape is None:
        raise ValueError("loss was not recorded on an active tape")
    loss._tape.backward(loss)


def record(inputs, outputs, backward_fn) -> None:
    """Register one executed op with the active tape, if any input needs grads."""
    tape = Tape.active()
    if tape is None:
        return
    if not any(t.requires_grad for t in inputs):
        return
    for out in outputs:
        out.requires_grad = True
        out._tape = tape
    tape._nodes.append((tuple(outputs), backward_fn))


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    """Add an upstream gradient into a tensor's buffer (no-op for non-grad tensors)."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g
