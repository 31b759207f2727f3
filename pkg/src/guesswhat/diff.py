"""Minimal reverse-mode differentiation core.

Exactly the operator set the agents need: matmul, add (plus bias), concat,
embedding lookup, sigmoid/tanh/relu, softmax, log, pointwise multiply, slice,
sum, and cross-entropy; a bias-corrected adaptive-moment optimizer; an LSTM
cell built from the primitives; and a central-difference gradient checker.

Training math runs in 64-bit floats so finite-difference checks are reliable;
checkpoints store 32-bit.  No broadcasting beyond bias addition: shapes are
explicit to keep the engine auditable.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np


class DimensionError(ValueError):
    def __init__(self, op: str, message: str):
        super().__init__(f"{op}: {message}")
        self.op = op


class NumericError(ArithmeticError):
    pass


class CheckpointError(ValueError):
    pass


class Tensor:
    """N-dimensional float64 value participating in the differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data) -> Tensor:
    return Tensor(data)


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _node(data: np.ndarray, parents: Tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _topo_order(root: Tensor) -> List[Tensor]:
    # Iterative post-order: graphs from long sequences overflow recursion.
    order: List[Tensor] = []
    seen = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Reverse-mode accumulation from a scalar loss.  Each graph node is
    visited exactly once; repeated calls without ``zero_grad`` accumulate."""
    if loss.data.size != 1:
        raise DimensionError("backward", f"loss must be scalar, got shape {loss.data.shape}")
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    # Drop transient gradients so repeated backward calls start clean on
    # intermediates while leaves keep accumulating.
    for node in order:
        if node._parents:
            node.grad = None


# ---------------------------------------------------------------------------
# forward operators


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise addition; also accepts a 1-d bias for a 2-d left operand."""
    if a.data.shape == b.data.shape:
        def back(g):
            _accumulate(a, g)
            _accumulate(b, g)
        return _node(a.data + b.data, (a, b), back)
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        def back(g):
            _accumulate(a, g)
            _accumulate(b, g.sum(axis=0))
        return _node(a.data + b.data, (a, b), back)
    raise DimensionError("add", f"incompatible shapes {a.data.shape} and {b.data.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError("mul", f"incompatible shapes {a.data.shape} and {b.data.shape}")

    def back(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _node(a.data * b.data, (a, b), back)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a python constant (loss averaging and masking plumbing)."""

    def back(g):
        _accumulate(a, g * factor)

    return _node(a.data * factor, (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    an, bn = a.data.ndim, b.data.ndim
    if an == 2 and bn == 2:
        if a.data.shape[1] != b.data.shape[0]:
            raise DimensionError("matmul", f"{a.data.shape} @ {b.data.shape}")

        def back(g):
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)

        return _node(a.data @ b.data, (a, b), back)
    if an == 1 and bn == 2:
        if a.data.shape[0] != b.data.shape[0]:
            raise DimensionError("matmul", f"{a.data.shape} @ {b.data.shape}")

        def back(g):
            _accumulate(a, b.data @ g)
            _accumulate(b, np.outer(a.data, g))

        return _node(a.data @ b.data, (a, b), back)
    if an == 2 and bn == 1:
        if a.data.shape[1] != b.data.shape[0]:
            raise DimensionError("matmul", f"{a.data.shape} @ {b.data.shape}")

        def back(g):
            _accumulate(a, np.outer(g, b.data))
            _accumulate(b, a.data.T @ g)

        return _node(a.data @ b.data, (a, b), back)
    raise DimensionError("matmul", f"unsupported ranks {an} and {bn}")


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or a.data.shape != b.data.shape:
        raise DimensionError("dot", f"{a.data.shape} . {b.data.shape}")

    def back(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _node(np.array(a.data @ b.data), (a, b), back)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise DimensionError("concat", "no inputs")
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            _accumulate(part, g[tuple(index)])

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), back)


def embedding_lookup(table: Tensor, ids: Union[int, Sequence[int], np.ndarray]) -> Tensor:
    """Rows of ``table`` selected by integer ids; gradients scatter-add back."""
    idx = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise DimensionError("embedding_lookup", f"table must be 2-d, got {table.data.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise DimensionError("embedding_lookup", f"id out of range for table of {table.data.shape[0]} rows")

    def back(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, g)

    return _node(table.data[idx], (table,), back)


def _elementwise(name: str, a: Tensor, value: np.ndarray, dvalue: np.ndarray) -> Tensor:
    def back(g):
        _accumulate(a, g * dvalue)

    return _node(value, (a,), back)


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid_values(a.data)
    return _elementwise("sigmoid", a, y, y * (1.0 - y))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _elementwise("tanh", a, y, 1.0 - y * y)


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)
    return _elementwise("relu", a, y, (a.data > 0).astype(np.float64))


def log(a: Tensor) -> Tensor:
    return _elementwise("log", a, np.log(a.data), 1.0 / a.data)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        _accumulate(a, (g - inner) * y)

    return _node(y, (a,), back)


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    if int(np.prod(shape)) != a.data.size:
        raise DimensionError("reshape", f"{a.data.shape} -> {shape}")

    def back(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), back)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def back(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[index] += g

    return _node(a.data[index].copy(), (a,), back)


def sum_all(a: Tensor) -> Tensor:
    def back(g):
        _accumulate(a, np.full_like(a.data, float(g)))

    return _node(np.array(a.data.sum()), (a,), back)


def sum_axis(a: Tensor, axis: int) -> Tensor:
    def back(g):
        _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return _node(a.data.sum(axis=axis), (a,), back)


def cross_entropy(
    logits: Tensor,
    target: Union[int, Sequence[int], np.ndarray],
    mask: Optional[np.ndarray] = None,
    reduction: str = "mean",
) -> Tensor:
    """Negative log-likelihood of the target class under softmax(logits).

    Vector logits take one integer target.  Matrix logits (batch, classes)
    take one target per row; ``mask`` zeroes padded rows and the reduction
    ("mean" over unmasked rows, or "sum") folds rows to a scalar.
    """
    if logits.data.ndim == 1:
        idx = int(target)
        if not 0 <= idx < logits.data.shape[0]:
            raise DimensionError("cross_entropy", f"target {idx} out of range")
        shifted = logits.data - logits.data.max()
        logz = np.log(np.exp(shifted).sum())
        loss = logz - shifted[idx]

        def back(g):
            probs = np.exp(shifted - logz)
            probs[idx] -= 1.0
            _accumulate(logits, float(g) * probs)

        return _node(np.array(loss), (logits,), back)

    if logits.data.ndim != 2:
        raise DimensionError("cross_entropy", f"logits rank {logits.data.ndim}")
    targets = np.asarray(target, dtype=np.int64)
    n, c = logits.data.shape
    if targets.shape != (n,):
        raise DimensionError("cross_entropy", f"targets shape {targets.shape} for {n} rows")
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise DimensionError("cross_entropy", f"target out of range for {c} classes")
    weights = np.ones(n) if mask is None else np.asarray(mask, dtype=np.float64)
    denom = weights.sum() if reduction == "mean" else 1.0
    if denom == 0:
        raise DimensionError("cross_entropy", "mask selects no rows")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    rows = logz - shifted[np.arange(n), targets]
    loss = (rows * weights).sum() / denom

    def back(g):
        probs = np.exp(shifted - logz[:, None])
        probs[np.arange(n), targets] -= 1.0
        _accumulate(logits, float(g) * probs * (weights / denom)[:, None])

    return _node(np.array(loss), (logits,), back)


# ---------------------------------------------------------------------------
# parameters, initialization, optimizer


class Parameters:
    """Registry of named trainable tensors, in stable insertion order."""

    def __init__(self):
        self._store: Dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._store:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = param(value)
        self._store[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._store[name]

    def __contains__(self, name: str) -> bool:
        return name in self._store

    def __len__(self) -> int:
        return len(self._store)

    def names(self) -> List[str]:
        return list(self._store)

    def items(self) -> Iterable[Tuple[str, Tensor]]:
        return self._store.items()

    def tensors(self) -> List[Tensor]:
        return list(self._store.values())

    def zero_grad(self) -> None:
        for t in self._store.values():
            t.grad = None

    def copy_values(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._store.items()}

    def load_values(self, values: Dict[str, np.ndarray]) -> None:
        for name, t in self._store.items():
            if name not in values:
                raise CheckpointError(f"missing parameter {name!r}")
            if values[name].shape != t.data.shape:
                raise CheckpointError(
                    f"{name!r}: shape {values[name].shape} != expected {t.data.shape}"
                )
            t.data = values[name].astype(np.float64)


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


class Adam:
    """Bias-corrected first/second-moment optimizer."""

    def __init__(self, params: Parameters, config: AdamConfig = AdamConfig()):
        self.params = params
        self.config = config
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self) -> None:
        c = self.config
        self.t += 1
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[name] = c.beta1 * self.m[name] + (1.0 - c.beta1) * g
            self.v[name] = c.beta2 * self.v[name] + (1.0 - c.beta2) * g * g
            m_hat = self.m[name] / (1.0 - c.beta1 ** self.t)
            v_hat = self.v[name] / (1.0 - c.beta2 ** self.t)
            p.data -= c.lr * m_hat / (np.sqrt(v_hat) + c.epsilon)


# ---------------------------------------------------------------------------
# LSTM cell

GATE_ORDER = ("input", "forget", "candidate", "output")


@dataclass
class LstmWeights:
    wx: Tensor    # (input_dim, 4*hidden)
    wh: Tensor    # (hidden, 4*hidden)
    bias: Tensor  # (4*hidden,), forget block initialized to +1

    @property
    def hidden(self) -> int:
        return self.wh.data.shape[0]


def init_lstm(
    params: Parameters, prefix: str, input_dim: int, hidden: int, rng: np.random.Generator
) -> LstmWeights:
    bias = np.zeros(4 * hidden)
    bias[hidden : 2 * hidden] = 1.0
    return LstmWeights(
        wx=params.add(f"{prefix}.wx", glorot_uniform(rng, (input_dim, 4 * hidden), input_dim, 4 * hidden)),
        wh=params.add(f"{prefix}.wh", glorot_uniform(rng, (hidden, 4 * hidden), hidden, 4 * hidden)),
        bias=params.add(f"{prefix}.bias", bias),
    )


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, w: LstmWeights) -> Tuple[Tensor, Tensor]:
    """One step of gate algebra: c = f*c_prev + i*g, h = o*tanh(c).

    ``x`` is (batch, input_dim); ``h_prev``/``c_prev`` are (batch, hidden) and
    zero at sequence start.
    """
    hidden = w.hidden
    if x.data.ndim != 2 or h_prev.data.shape != (x.data.shape[0], hidden):
        raise DimensionError(
            "lstm_cell", f"x {x.data.shape}, h {h_prev.data.shape}, hidden {hidden}"
        )
    z = add(add(matmul(x, w.wx), matmul(h_prev, w.wh)), w.bias)
    i = sigmoid(slice_axis(z, 1, 0, hidden))
    f = sigmoid(slice_axis(z, 1, hidden, 2 * hidden))
    g = tanh(slice_axis(z, 1, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_axis(z, 1, 3 * hidden, 4 * hidden))
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


def lstm_zero_state(batch: int, hidden: int) -> Tuple[Tensor, Tensor]:
    return tensor(np.zeros((batch, hidden))), tensor(np.zeros((batch, hidden)))


# ---------------------------------------------------------------------------
# gradient checking


def gradcheck(
    fn: Callable[[], Tensor],
    parameters: Sequence[Tensor],
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients
    over every coordinate of ``parameters``.  ``fn`` must be deterministic and
    scalar-valued."""
    for p in parameters:
        p.grad = None
    loss = fn()
    if not np.isfinite(loss.data).all():
        raise NumericError("non-finite loss")
    backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in parameters]
    max_err = 0.0
    for p, a in zip(parameters, analytic):
        flat = p.data.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = float(fn().data)
            flat[i] = orig - epsilon
            f_minus = float(fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            if not (np.isfinite(numeric) and np.isfinite(a_flat[i])):
                raise NumericError(f"non-finite gradient at coordinate {i}")
            rel = abs(a_flat[i] - numeric) / max(abs(a_flat[i]), abs(numeric), 1e-8)
            max_err = max(max_err, rel)
    return max_err


# ---------------------------------------------------------------------------
# checkpoint file: magic, version, kind, config json, directory, f32 payload

CHECKPOINT_MAGIC = b"GWCKPT1"
CHECKPOINT_VERSION = 1


def _write_str(fh, text: str) -> None:
    raw = text.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode("utf-8")


def save_checkpoint(
    path: Union[str, Path], kind: str, params: Parameters, meta: Optional[dict] = None
) -> None:
    entries = []
    offset = 0
    payload = []
    for name, t in params.items():
        data = t.data.astype("<f4")
        entries.append((name, t.data.shape, offset))
        payload.append(data.tobytes())
        offset += data.nbytes
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        _write_str(fh, kind)
        _write_str(fh, json.dumps(meta or {}))
        fh.write(struct.pack("<I", len(entries)))
        for name, shape, off in entries:
            _write_str(fh, name)
            fh.write(struct.pack("<I", len(shape)))
            for dim in shape:
                fh.write(struct.pack("<I", dim))
            fh.write(struct.pack("<Q", off))
        for chunk in payload:
            fh.write(chunk)


def load_checkpoint(path: Union[str, Path]) -> Tuple[str, dict, Dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: bad magic")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        kind = _read_str(fh)
        meta = json.loads(_read_str(fh))
        (n_params,) = struct.unpack("<I", fh.read(4))
        directory = []
        for _ in range(n_params):
            name = _read_str(fh)
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            (offset,) = struct.unpack("<Q", fh.read(8))
            directory.append((name, shape, offset))
        payload = fh.read()
    values: Dict[str, np.ndarray] = {}
    for name, shape, offset in directory:
        count = int(np.prod(shape)) if shape else 1
        vec = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        values[name] = vec.reshape(shape).astype(np.float64)
    return kind, meta, values
