"""Tensors and the reverse-mode tape.

Operations record themselves on the innermost active :class:`Tape` when at
least one input requires a gradient. Outside a tape everything runs as plain
numpy with no bookkeeping, which is how inference is done.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

_state = threading.local()


def _stack() -> list:
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes


def current_tape() -> Tape | None:
    s = _stack()
    return s[-1] if s else None


class Tensor:
    __array_priority__ = 100.0
    __slots__ = ("data", "grad", "requires_grad", "name", "_recorded")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._recorded = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # arithmetic is defined in ops; bound lazily to avoid an import cycle
    def __add__(self, other):
        return _ops().add(self, other)

    def __radd__(self, other):
        return _ops().add(other, self)

    def __sub__(self, other):
        return _ops().sub(self, other)

    def __rsub__(self, other):
        return _ops().sub(other, self)

    def __mul__(self, other):
        return _ops().mul(self, other)

    def __rmul__(self, other):
        return _ops().mul(other, self)

    def __truediv__(self, other):
        return _ops().div(self, other)

    def __rtruediv__(self, other):
        return _ops().div(other, self)

    def __neg__(self):
        return _ops().neg(self)

    def __pow__(self, exponent):
        return _ops().power(self, exponent)

    def __matmul__(self, other):
        return _ops().matmul(self, other)

    def sum(self, axis=None):
        return _ops().sum(self, axis)

    def mean(self):
        return _ops().mean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops().reshape(self, shape)

    def transpose(self, *axes):
        return _ops().transpose(self, axes or None)

    @property
    def T(self):
        return _ops().transpose(self, None)


def _ops():
    from . import ops

    return ops


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitive operations with their backward closures.

    Use as a context manager; ``backward`` may run once per recording and
    raises if called again before :meth:`reset`.
    """

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._consumed = False

    def __enter__(self) -> Tape:
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        s = _stack()
        if s and s[-1] is self:
            s.pop()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, out: Tensor, parents: Sequence[Tensor], backward: Callable) -> None:
        if self._consumed:
            raise RuntimeError("tape already consumed by backward(); call reset() first")
        out._recorded = True
        self.records.append((out, tuple(parents), backward))

    def reset(self) -> None:
        self.records.clear()
        self._consumed = False

    def backward(self, loss: Tensor, grad: np.ndarray | None = None) -> dict:
        """Populate ``.grad`` of every leaf that requires gradients.

        Returns a mapping leaf tensor -> accumulated gradient.
        """
        if self._consumed:
            raise RuntimeError("backward called twice without reset")
        if grad is None:
            if loss.data.size != 1:
                raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
            grad = np.ones_like(loss.data)
        self._consumed = True
        pending = {id(loss): np.asarray(grad, dtype=np.float64)}
        leaves: dict[Tensor, np.ndarray] = {}
        if not loss._recorded and loss.requires_grad:
            _accumulate_leaf(loss, pending[id(loss)], leaves)
        for out, parents, fn in reversed(self.records):
            g = pending.pop(id(out), None)
            if g is None:
                continue
            for p, gp in zip(parents, fn(g)):
                if gp is None or not p.requires_grad:
                    continue
                if p._recorded:
                    key = id(p)
                    pending[key] = pending[key] + gp if key in pending else gp
                else:
                    _accumulate_leaf(p, gp, leaves)
        return leaves


def _accumulate_leaf(p: Tensor, g: np.ndarray, leaves: dict) -> None:
    g = np.broadcast_to(g, p.shape)
    p.grad = np.array(g) if p.grad is None else p.grad + g
    leaves[p] = p.grad


def backward(tape: Tape, loss: Tensor) -> dict:
    return tape.backward(loss)


def make(data, parents: Sequence, backward: Callable) -> Tensor:
    """Create an op output and record it if any parent needs a gradient."""
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(isinstance(p, Tensor) and p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, [as_tensor(p) for p in parents], backward)
    return out
