"""Dense float64 tensors with a reverse-mode gradient tape.

Everything learnable in this package (the LSTM tracker, the factorization
machine and the policy network) runs on this module: a Tensor is an
immutable float64 ndarray, ops record their backward closures on the
active GradientTape, and ``optimizer_step`` applies sgd / adam / rmsprop
updates to named parameter dicts.
"""

from __future__ import annotations

import base64
import json
import math
import threading
from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Operands disagree on shape for the op that raised."""


class NumericsError(FloatingPointError):
    """An op produced NaN or Inf."""


# --------------------------------------------------------------------------- #
# Tensor
# --------------------------------------------------------------------------- #

class Tensor:
    """Immutable float64 array. Create via ``Tensor(data)`` or the ops below."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericsError("tensor holds NaN/Inf values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def _wrap(cls, arr, op_name):
        # internal fast path for freshly computed op outputs (no copy)
        arr = np.asarray(arr, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericsError(f"op '{op_name}' produced NaN/Inf")
        arr.flags.writeable = False
        out = object.__new__(cls)
        object.__setattr__(out, "data", arr)
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_err(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # operator sugar; all routes through the taped ops
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _scalar_err(t):
    raise ShapeError(f"expected scalar tensor, got shape {t.data.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# --------------------------------------------------------------------------- #
# Gradient tape
# --------------------------------------------------------------------------- #

_LOCAL = threading.local()


def _tape_stack():
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class GradientTape:
    """Records ops while active; ``gradient`` replays them in reverse order.

    Usage::

        with GradientTape() as tape:
            loss = ...ops over params...
        grads = tape.gradient(loss, params)   # dict name -> ndarray
    """

    def __init__(self):
        self._nodes = []  # (out Tensor, inputs tuple[Tensor], vjp) in recording order

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self

    def _record(self, out, inputs, vjp):
        self._nodes.append((out, inputs, vjp))

    def gradient(self, loss, params):
        """Backward pass from scalar ``loss`` to every tensor in ``params``.

        ``params`` is a dict name -> Tensor (or an iterable of Tensors);
        the return value mirrors it with float64 ndarrays. Parameters the
        loss does not depend on get zero gradients.
        """
        if not isinstance(loss, Tensor) or loss.data.size != 1:
            raise ShapeError("loss must be a scalar tensor produced on this tape")
        if not any(out is loss for out, _, _ in self._nodes):
            raise ValueError("loss was not produced on this tape")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, vjp in reversed(self._nodes):
            g_out = grads.get(id(out))
            if g_out is None:
                continue
            for inp, g in zip(inputs, vjp(g_out)):
                if g is None:
                    continue
                acc = grads.get(id(inp))
                grads[id(inp)] = g if acc is None else acc + g

        if isinstance(params, dict):
            return {
                name: grads.get(id(p), np.zeros_like(p.data)) for name, p in params.items()
            }
        return [grads.get(id(p), np.zeros_like(p.data)) for p in params]


# --------------------------------------------------------------------------- #
# Ops
# --------------------------------------------------------------------------- #

def _emit(op_name, out_data, inputs, vjp):
    out = Tensor._wrap(out_data, op_name)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, inputs, vjp)
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` back down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return _emit("add", out, (a, b),
                 lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    return _emit("sub", out, (a, b),
                 lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    return _emit("mul", out, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.data.shape),
                            _unbroadcast(g * a.data, b.data.shape)))


def neg(a):
    a = as_tensor(a)
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


def square(a):
    a = as_tensor(a)
    return _emit("square", a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data
    return _emit("matmul", out, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def concat(parts, axis=-1):
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _emit("concat", out, tuple(parts), vjp)


def relu(a):
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)
    return _emit("relu", out, (a,), lambda g: (g * (a.data > 0.0),))


def sigmoid(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-a.data))
    return _emit("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _emit("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _emit("log", out, (a,), lambda g: (g / a.data,))


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _emit("softmax", out, (a,), vjp)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _emit("log_softmax", out, (a,), vjp)


def tensor_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _emit("sum", np.asarray(out), (a,), vjp)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def gather_rows(a, indices):
    """Pick one column per row: ``out[i, 0] = a[i, indices[i]]``."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    if a.ndim != 2 or idx.shape != (a.shape[0],):
        raise ShapeError(f"gather_rows expects (B, C) and (B,) indices, got {a.shape}, {idx.shape}")
    out = a.data[np.arange(a.shape[0]), idx][:, None]

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[np.arange(a.data.shape[0]), idx] = g[:, 0]
        return (ga,)

    return _emit("gather_rows", out, (a,), vjp)


def slice_cols(a, start, stop):
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"slice_cols expects a 2-D tensor, got {a.shape}")
    out = a.data[:, start:stop].copy()

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[:, start:stop] = g
        return (ga,)

    return _emit("slice_cols", out, (a,), vjp)


def lstm_cell(x, h, c, wx, wh, b):
    """One standard LSTM step; gate order [input, forget, candidate, output].

    x: (B, D) input, h/c: (B, H) previous state, wx: (D, 4H), wh: (H, 4H),
    b: (4H,). Returns (h_next, c_next). Built from the primitive ops so it
    differentiates for free.
    """
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    hidden = h.data.shape[-1]
    z = add(add(matmul(x, wx), matmul(h, wh)), b)
    i = sigmoid(slice_cols(z, 0, hidden))
    f = sigmoid(slice_cols(z, hidden, 2 * hidden))
    g = tanh(slice_cols(z, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_cols(z, 3 * hidden, 4 * hidden))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


# --------------------------------------------------------------------------- #
# Parameter init
# --------------------------------------------------------------------------- #

def glorot_uniform(rng, shape, fan_in=None, fan_out=None) -> Tensor:
    """uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out))."""
    if fan_in is None:
        fan_in = shape[0]
    if fan_out is None:
        fan_out = shape[-1]
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-s, s, size=shape))


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


def linear_params(rng, n_in, n_out, prefix) -> dict:
    return {f"{prefix}.w": glorot_uniform(rng, (n_in, n_out)), f"{prefix}.b": zeros((n_out,))}


def lstm_params(rng, input_dim, hidden, prefix="lstm") -> dict:
    """Glorot weights, zero biases, forget-gate bias at 1.0."""
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    return {
        f"{prefix}.wx": glorot_uniform(rng, (input_dim, 4 * hidden), input_dim, hidden),
        f"{prefix}.wh": glorot_uniform(rng, (hidden, 4 * hidden), hidden, hidden),
        f"{prefix}.b": Tensor(b),
    }


# --------------------------------------------------------------------------- #
# Optimizers
# --------------------------------------------------------------------------- #

@dataclass
class OptimizerConfig:
    kind: str = "sgd"  # sgd | adam | rmsprop
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    decay: float = 0.9  # rmsprop smoothing
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam", "rmsprop"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


def init_optimizer_state(config: OptimizerConfig) -> dict:
    return {"t": 0, "m": {}, "v": {}}


def optimizer_step(params: dict, grads: dict, config: OptimizerConfig, state: dict | None = None):
    """One update over a named parameter dict. Returns (new_params, state).

    ``state`` carries the running moments between calls; pass the returned
    one back in. Parameter tensors are replaced, never mutated.
    """
    if state is None:
        state = init_optimizer_state(config)
    if set(params) != set(grads):
        missing = set(params) ^ set(grads)
        raise KeyError(f"params/grads registries misaligned on {sorted(missing)}")

    lr = config.learning_rate
    state["t"] += 1
    t = state["t"]
    new_params = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {p.data.shape} for {name!r}")
        if config.kind == "sgd":
            upd = p.data - lr * g
        elif config.kind == "adam":
            m = state["m"].get(name, np.zeros_like(g))
            v = state["v"].get(name, np.zeros_like(g))
            m = config.beta1 * m + (1.0 - config.beta1) * g
            v = config.beta2 * v + (1.0 - config.beta2) * g * g
            state["m"][name] = m
            state["v"][name] = v
            m_hat = m / (1.0 - config.beta1 ** t)
            v_hat = v / (1.0 - config.beta2 ** t)
            upd = p.data - lr * m_hat / (np.sqrt(v_hat) + config.epsilon)
        else:  # rmsprop
            v = state["v"].get(name, np.zeros_like(g))
            v = config.decay * v + (1.0 - config.decay) * g * g
            state["v"][name] = v
            upd = p.data - lr * g / (np.sqrt(v) + config.epsilon)
        new_params[name] = Tensor(upd)
    return new_params, state


# --------------------------------------------------------------------------- #
# Checkpoints
# --------------------------------------------------------------------------- #

CHECKPOINT_VERSION = 1


def save_checkpoint(path, model_kind: str, params: dict, meta: dict | None = None):
    """Single JSON document; float64 payloads as base64 little-endian bytes."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "model_kind": model_kind,
        "meta": meta or {},
        "params": {
            name: {
                "shape": list(p.data.shape),
                "data": base64.b64encode(np.ascontiguousarray(p.data, dtype="<f8").tobytes()).decode("ascii"),
            }
            for name, p in params.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Returns (model_kind, params dict of Tensor, meta). Bit-exact round trip."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {doc.get('format_version')!r}")
    params = {}
    for name, entry in doc["params"].items():
        shape = tuple(entry["shape"])
        flat = np.frombuffer(base64.b64decode(entry["data"]), dtype="<f8")
        if flat.size != int(np.prod(shape, dtype=np.int64)):
            raise ValueError(f"checkpoint entry {name!r} length does not match shape")
        params[name] = Tensor(flat.reshape(shape).astype(np.float64))
    return doc["model_kind"], params, doc.get("meta", {})
