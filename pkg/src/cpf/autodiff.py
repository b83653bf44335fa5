"""Reverse-mode automatic differentiation over dense matrices.

A `Tape` records `Value` nodes in construction order, so parents always
precede children and a single reversed pass propagates cotangents. All data
is 2-D float64; scalars are 1x1 matrices. Sparse graph operators take a
`CSRMatrix` with fixed values, while per-edge learnable weights flow through
gather/scatter compositions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TapeError(RuntimeError):
    """Raised when a tape is driven outside its contract."""


class ShapeError(ValueError):
    """Raised on operand shape mismatch."""


@dataclass
class CSRMatrix:
    """Sparse matrix in CSR form with constant (non-learnable) values."""

    shape: tuple[int, int]
    offsets: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    _t: "CSRMatrix | None" = field(default=None, repr=False)

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        """Sparse @ dense via per-row segment sums."""
        n_rows = self.shape[0]
        out = np.zeros((n_rows, dense.shape[1]), dtype=np.float64)
        if self.cols.size == 0:
            return out
        contrib = dense[self.cols] * self.vals[:, None]
        nonempty = self.offsets[:-1] < self.offsets[1:]
        out[nonempty] = np.add.reduceat(contrib, self.offsets[:-1][nonempty], axis=0)
        return out

    def transpose(self) -> "CSRMatrix":
        if self._t is None:
            n_rows, n_cols = self.shape
            rows = np.repeat(np.arange(n_rows), np.diff(self.offsets))
            order = np.lexsort((rows, self.cols))
            offsets = np.zeros(n_cols + 1, dtype=np.int64)
            np.add.at(offsets, self.cols + 1, 1)
            np.cumsum(offsets, out=offsets)
            self._t = CSRMatrix(
                shape=(n_cols, n_rows),
                offsets=offsets,
                cols=rows[order],
                vals=self.vals[order],
            )
        return self._t


class Value:
    """One node of the computation graph: data plus accumulated cotangent."""

    __slots__ = ("data", "grad", "op", "parents", "tape", "const", "_backward")

    def __init__(self, data, tape: "Tape", op: str = "leaf", parents=(), const=False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"Value data must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad = np.zeros_like(arr)
        self.op = op
        self.parents = tuple(parents)
        self.tape = tape
        self.const = const
        self._backward = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Value(op={self.op!r}, shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul_elem(self, other)

    def __truediv__(self, other):
        return div_elem(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of Values; supports one backward pass per reset."""

    def __init__(self) -> None:
        self.nodes: list[Value] = []
        self._spent = False

    def leaf(self, data, const: bool = False) -> Value:
        v = Value(data, self, op="leaf", const=const)
        self.nodes.append(v)
        return v

    def const(self, data) -> Value:
        return self.leaf(data, const=True)

    def record(self, data, op: str, parents, backward) -> Value:
        v = Value(data, self, op=op, parents=parents)
        v._backward = backward
        self.nodes.append(v)
        return v

    def backward(self, loss: Value) -> None:
        """Accumulate d(loss)/d(node) into every node's grad field."""
        if loss.tape is not self:
            raise TapeError("loss belongs to a different tape")
        if loss.data.shape != (1, 1):
            raise ShapeError("backward requires a 1x1 loss Value")
        if self._spent:
            raise TapeError("backward called twice without tape reset")
        self._spent = True
        loss.grad = loss.grad + 1.0
        for node in reversed(self.nodes):
            if node._backward is not None:
                node._backward(node.grad)

    def reset(self) -> None:
        """Zero all grads and allow another backward pass."""
        for node in self.nodes:
            node.grad = np.zeros_like(node.data)
        self._spent = False


def _as_value(x, tape: Tape) -> Value:
    if isinstance(x, Value):
        return x
    return tape.const(np.asarray(x, dtype=np.float64).reshape(1, 1) if np.isscalar(x) else x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum `grad` down to `shape` along broadcast axes."""
    out = grad
    if shape[0] == 1 and grad.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _broadcast_check(a: Value, b: Value) -> tuple[int, int]:
    sa, sb = a.shape, b.shape
    for da, db in zip(sa, sb):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"cannot broadcast {sa} with {sb}")
    return (max(sa[0], sb[0]), max(sa[1], sb[1]))


def add(a: Value, b) -> Value:
    b = _as_value(b, a.tape)
    _broadcast_check(a, b)

    def backward(g):
        if not a.const:
            a.grad += _unbroadcast(g, a.shape)
        if not b.const:
            b.grad += _unbroadcast(g, b.shape)

    return a.tape.record(a.data + b.data, "add", (a, b), backward)


def sub(a: Value, b) -> Value:
    b = _as_value(b, a.tape)
    _broadcast_check(a, b)

    def backward(g):
        if not a.const:
            a.grad += _unbroadcast(g, a.shape)
        if not b.const:
            b.grad -= _unbroadcast(g, b.shape)

    return a.tape.record(a.data - b.data, "sub", (a, b), backward)


def mul_elem(a: Value, b) -> Value:
    b = _as_value(b, a.tape)
    _broadcast_check(a, b)

    def backward(g):
        if not a.const:
            a.grad += _unbroadcast(g * b.data, a.shape)
        if not b.const:
            b.grad += _unbroadcast(g * a.data, b.shape)

    return a.tape.record(a.data * b.data, "mul", (a, b), backward)


def div_elem(a: Value, b) -> Value:
    b = _as_value(b, a.tape)
    _broadcast_check(a, b)
    out_data = a.data / b.data

    def backward(g):
        if not a.const:
            a.grad += _unbroadcast(g / b.data, a.shape)
        if not b.const:
            b.grad -= _unbroadcast(g * out_data / b.data, b.shape)

    return a.tape.record(out_data, "div", (a, b), backward)


def matmul(a: Value, b: Value) -> Value:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")

    def backward(g):
        if not a.const:
            a.grad += g @ b.data.T
        if not b.const:
            b.grad += a.data.T @ g

    return a.tape.record(a.data @ b.data, "matmul", (a, b), backward)


def spmm(m: CSRMatrix, x: Value) -> Value:
    """Sparse (constant values) @ dense Value."""
    if m.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm shapes {m.shape} and {x.shape} do not align")

    def backward(g):
        if not x.const:
            x.grad += m.transpose().matmul(g)

    return x.tape.record(m.matmul(x.data), "spmm", (x,), backward)


def exp(x: Value) -> Value:
    out_data = np.exp(x.data)

    def backward(g):
        if not x.const:
            x.grad += g * out_data

    return x.tape.record(out_data, "exp", (x,), backward)


def log(x: Value) -> Value:
    def backward(g):
        if not x.const:
            x.grad += g / x.data

    return x.tape.record(np.log(x.data), "log", (x,), backward)


def relu(x: Value) -> Value:
    mask = x.data > 0

    def backward(g):
        if not x.const:
            x.grad += g * mask

    return x.tape.record(x.data * mask, "relu", (x,), backward)


def sigmoid(x: Value) -> Value:
    out_data = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        if not x.const:
            x.grad += g * out_data * (1.0 - out_data)

    return x.tape.record(out_data, "sigmoid", (x,), backward)


def row_softmax(x: Value) -> Value:
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    out_data = ex / ex.sum(axis=1, keepdims=True)

    def backward(g):
        if not x.const:
            dot = (g * out_data).sum(axis=1, keepdims=True)
            x.grad += (g - dot) * out_data

    return x.tape.record(out_data, "row_softmax", (x,), backward)


def dropout(x: Value, rate: float, training: bool, rng: np.random.Generator | None = None) -> Value:
    """Inverted dropout; identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    scale = 1.0 / (1.0 - rate)
    mask = (rng.random(x.shape) >= rate) * scale

    def backward(g):
        if not x.const:
            x.grad += g * mask

    return x.tape.record(x.data * mask, "dropout", (x,), backward)


def gather_rows(x: Value, index: np.ndarray) -> Value:
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        if not x.const:
            np.add.at(x.grad, index, g)

    return x.tape.record(x.data[index], "gather_rows", (x,), backward)


def scatter_rows(x: Value, index: np.ndarray, num_rows: int) -> Value:
    """Scatter-add rows of x into an output of `num_rows` rows."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape[0] != x.shape[0]:
        raise ShapeError("scatter index length must match row count")
    out_data = np.zeros((num_rows, x.shape[1]), dtype=np.float64)
    np.add.at(out_data, index, x.data)

    def backward(g):
        if not x.const:
            x.grad += g[index]

    return x.tape.record(out_data, "scatter_rows", (x,), backward)


def clamp_rows(x: Value, rows: np.ndarray, values: np.ndarray) -> Value:
    """Overwrite the given rows with constant values; grad passes elsewhere."""
    rows = np.asarray(rows, dtype=np.int64)
    out_data = x.data.copy()
    out_data[rows] = values

    def backward(g):
        if not x.const:
            passed = g.copy()
            passed[rows] = 0.0
            x.grad += passed

    return x.tape.record(out_data, "clamp_rows", (x,), backward)


def l2_row_norm_sum(x: Value, eps: float = 1e-12) -> Value:
    """Sum of per-row Euclidean norms, sqrt guarded by eps."""
    norms = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True) + eps)

    def backward(g):
        if not x.const:
            x.grad += g[0, 0] * x.data / norms

    return x.tape.record(norms.sum().reshape(1, 1), "l2_row_norm_sum", (x,), backward)


def cross_entropy_rows(probs: Value, labels: np.ndarray, rows: np.ndarray) -> Value:
    """Mean negative log-probability of the true class over the given rows."""
    rows = np.asarray(rows, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    picked = np.maximum(probs.data[rows, labels[rows]], 1e-30)
    loss = -np.log(picked).mean() if rows.size else 0.0

    def backward(g):
        if not probs.const and rows.size:
            np.add.at(
                probs.grad,
                (rows, labels[rows]),
                -g[0, 0] / (picked * rows.size),
            )

    return probs.tape.record(
        np.array([[loss]]), "cross_entropy_rows", (probs,), backward
    )


def sum_all(x: Value) -> Value:
    def backward(g):
        if not x.const:
            x.grad += g[0, 0]

    return x.tape.record(x.data.sum().reshape(1, 1), "sum_all", (x,), backward)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Glorot/Xavier uniform init for a (fan_in, fan_out) weight matrix."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))
