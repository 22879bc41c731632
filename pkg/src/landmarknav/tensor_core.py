"""Minimal reverse-mode autodiff over numpy, plus Adam and checkpoints.

Only what the encoder/decoder needs: dense ops, a handful of activations,
masked softmax, embedding lookup, and scalar-loss backward with gradient
accumulation. Training math runs in float32; tests flip the module to
float64 when comparing against finite differences.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

CHECKPOINT_FORMAT_VERSION = 1
MASK_FILL = -1e9

_STATE = {
    "dtype": np.dtype(np.float32),
    "debug": bool(os.environ.get("LANDMARKNAV_DEBUG_NUMERICS")),
    "grad": True,
}


class ShapeError(ValueError):
    pass


def set_default_dtype(dtype) -> None:
    _STATE["dtype"] = np.dtype(dtype)


def default_dtype():
    return _STATE["dtype"]


def set_debug_checks(enabled: bool) -> None:
    """Verify every op output is finite. Slow; for tests and debugging."""
    _STATE["debug"] = bool(enabled)


class no_grad:
    """Context manager: ops executed inside build no backward graph."""

    def __enter__(self):
        self._saved = _STATE["grad"]
        _STATE["grad"] = False
        return self

    def __exit__(self, *exc):
        _STATE["grad"] = self._saved
        return False


def make_rng(seed: int) -> np.random.Generator:
    # counter-based so streams are reproducible across platforms
    return np.random.Generator(np.random.Philox(key=seed))


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn", "_backward_done")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=_STATE["dtype"])
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._grad_fn = None
        self._backward_done = False

    @classmethod
    def _wrap(cls, data, parents, grad_fn):
        if _STATE["debug"] and not np.all(np.isfinite(data)):
            raise FloatingPointError("non-finite values in op output")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._backward_done = False
        if _STATE["grad"] and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._grad_fn = grad_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._grad_fn = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar, got shape {self.data.shape}")
        if self._backward_done:
            raise RuntimeError("backward already ran on this graph; rebuild the forward pass")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._grad_fn is not None:
                for p, pg in zip(node._parents, node._grad_fn(g)):
                    if pg is None or not p.requires_grad:
                        continue
                    key = id(p)
                    grads[key] = pg if key not in grads else grads[key] + pg
            else:
                # leaf parameter: accumulate so per-sample losses can add up
                node.grad = g.copy() if node.grad is None else node.grad + g
        self._backward_done = True

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_(self, axis=axis, keepdims=keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    data = a.data + b.data
    return Tensor._wrap(
        data, (a, b), lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))
    )


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    data = a.data * b.data
    return Tensor._wrap(
        data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return Tensor._wrap(data, (a, b), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_t(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of zero tensors")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._wrap(data, tuple(tensors), backward)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    a = _t(a)
    if not (0 <= start and start + length <= a.data.shape[axis]):
        raise ShapeError(
            f"narrow [{start}:{start + length}] outside axis {axis} of {a.data.shape}"
        )
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    data = a.data[index]

    def backward(g):
        out = np.zeros_like(a.data)
        out[index] = g
        return (out,)

    return Tensor._wrap(data, (a,), backward)


def reshape(a, *shape) -> Tensor:
    a = _t(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    data = a.data.reshape(shape)
    return Tensor._wrap(data, (a,), lambda g: (g.reshape(a.data.shape),))


def transpose(a, axes=None) -> Tensor:
    a = _t(a)
    axes = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    data = a.data.transpose(axes)
    return Tensor._wrap(data, (a,), lambda g: (g.transpose(inverse),))


def relu(a) -> Tensor:
    a = _t(a)
    data = np.maximum(a.data, 0)
    return Tensor._wrap(data, (a,), lambda g: (g * (a.data > 0),))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _t(a)
    data = np.where(a.data > 0, a.data, slope * a.data)
    return Tensor._wrap(data, (a,), lambda g: (np.where(a.data > 0, g, slope * g),))


def sigmoid(a) -> Tensor:
    a = _t(a)
    data = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor._wrap(data, (a,), lambda g: (g * data * (1.0 - data),))


def exp(a) -> Tensor:
    a = _t(a)
    data = np.exp(a.data)
    return Tensor._wrap(data, (a,), lambda g: (g * data,))


def log(a) -> Tensor:
    a = _t(a)
    data = np.log(a.data)
    return Tensor._wrap(data, (a,), lambda g: (g / a.data,))


def power(a, exponent: float) -> Tensor:
    """a ** exponent for a constant exponent."""
    a = _t(a)
    data = a.data ** exponent
    return Tensor._wrap(data, (a,), lambda g: (g * exponent * a.data ** (exponent - 1.0),))


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _t(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.data.shape).copy(),)

    return Tensor._wrap(data, (a,), backward)


def mean_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _t(a)
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def softmax(a, axis: int = -1, mask=None) -> Tensor:
    """Softmax along `axis`; positions where mask == 0 get exactly zero weight.

    Every slice along `axis` must keep at least one allowed position.
    """
    a = _t(a)
    logits = a.data
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != logits.shape:
            mask = np.broadcast_to(mask, logits.shape)
        logits = np.where(mask != 0, logits, logits + MASK_FILL)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - inner),)

    return Tensor._wrap(data, (a,), backward)


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    a = _t(a)
    mu = mean_(a, axis=-1, keepdims=True)
    centered = a - mu
    var = mean_(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, eps), -0.5)
    return add(mul(mul(centered, inv), gain), bias)


def embedding(table, ids) -> Tensor:
    """Row lookup; ids is an integer array, gradients scatter-add."""
    table = _t(table)
    ids = np.asarray(ids, dtype=np.int64)
    if np.any(ids < 0) or np.any(ids >= table.data.shape[0]):
        raise ShapeError(f"embedding ids outside table of {table.data.shape[0]} rows")
    data = table.data[ids]

    def backward(g):
        out = np.zeros_like(table.data)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        return (out,)

    return Tensor._wrap(data, (table,), backward)


def dropout(a, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when p == 0."""
    a = _t(a)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate {p} outside [0, 1)")
    if p == 0.0:
        return a
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return mul(a, keep)


def take_per_row(a, cols) -> Tensor:
    """out[i] = a[i, cols[i]] for a 2-d tensor."""
    a = _t(a)
    if a.ndim != 2:
        raise ShapeError(f"take_per_row needs a 2-d tensor, got {a.data.shape}")
    cols = np.asarray(cols, dtype=np.int64)
    rows = np.arange(a.data.shape[0])
    data = a.data[rows, cols]

    def backward(g):
        out = np.zeros_like(a.data)
        out[rows, cols] = g
        return (out,)

    return Tensor._wrap(data, (a,), backward)


def cross_entropy(logits, target_dist, axis: int = -1) -> Tensor:
    """Mean over rows of -sum(target * log softmax(logits))."""
    probs = softmax(logits, axis=axis)
    losses = mul(sum_(mul(_t(target_dist), log(add(probs, 1e-12))), axis=axis), -1.0)
    return mean_(losses)


@dataclass
class Parameter:
    name: str
    tensor: Tensor
    trainable: bool = True


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(_STATE["dtype"])


def noam_rate(step: int, d_model: int, warmup: int = 4000) -> float:
    """Inverse-square-root schedule with linear warmup; peaks near step=warmup."""
    if step < 1:
        raise ValueError("schedule step starts at 1")
    return d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


class Adam:
    """Adam with bias correction; the paper-style lr acts as a scale on the
    warmup schedule unless schedule='constant'."""

    def __init__(
        self,
        params,
        lr: float = 0.5,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-9,
        d_model: int = 256,
        warmup: int = 4000,
        schedule: str = "noam",
    ):
        if schedule not in ("noam", "constant"):
            raise ValueError(f"unknown schedule {schedule!r}")
        self.params = [p for p in params if p.trainable]
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.d_model, self.warmup, self.schedule = d_model, warmup, schedule
        self.t = 0
        self._m = {p.name: np.zeros_like(p.tensor.data) for p in self.params}
        self._v = {p.name: np.zeros_like(p.tensor.data) for p in self.params}

    def rate(self, step: int) -> float:
        if self.schedule == "constant":
            return self.lr
        return self.lr * noam_rate(step, self.d_model, self.warmup)

    def zero_grad(self) -> None:
        for p in self.params:
            p.tensor.grad = None

    def step(self) -> float:
        self.t += 1
        rate = self.rate(self.t)
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            g = p.tensor.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {p.name!r}")
            m = self._m[p.name]
            v = self._v[p.name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p.tensor.data -= (rate * m_hat / (np.sqrt(v_hat) + self.eps)).astype(
                p.tensor.data.dtype
            )
        return rate


def save_checkpoint(params, manifest_path, meta=None) -> None:
    """Write a JSON manifest plus a raw little-endian float32 blob beside it."""
    manifest_path = os.fspath(manifest_path)
    blob_path = manifest_path + ".bin"
    entries = []
    offset = 0
    with open(blob_path, "wb") as blob:
        for p in params:
            arr = np.ascontiguousarray(p.tensor.data, dtype="<f4")
            entries.append(
                {
                    "name": p.name,
                    "shape": list(arr.shape),
                    "dtype": "float32",
                    "offset": offset,
                }
            )
            blob.write(arr.tobytes())
            offset += arr.nbytes
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "blob": os.path.basename(blob_path),
        "params": entries,
        "meta": meta or {},
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_checkpoint(manifest_path):
    """Returns ({name: float32 array}, meta)."""
    manifest_path = os.fspath(manifest_path)
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {version!r}")
    blob_path = os.path.join(os.path.dirname(manifest_path) or ".", manifest["blob"])
    with open(blob_path, "rb") as fh:
        blob = fh.read()
    arrays = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"])
        arrays[entry["name"]] = arr.reshape(shape).copy()
    return arrays, manifest.get("meta", {})
