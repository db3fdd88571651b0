"""Small feedforward networks on numpy with tape-based reverse-mode gradients.

``Tensor`` records the operations applied to it; ``Tensor.backward`` walks the
tape in reverse topological order.  Only the few operations needed by the
actor-critic losses are provided.  Everything is float64.

Networks are described by a :class:`NetSpec` and their weights live in a
single flat vector (:class:`ParamSet`), which keeps optimizer steps, target
tracking and checkpointing simple.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

CHECKPOINT_VERSION = 1


# -- autodiff -----------------------------------------------------------------

def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (),
                 _backward: Optional[Callable[[np.ndarray], None]] = None):
        self.data = np.asarray(data, dtype=float)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    # bookkeeping
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def _accum(self, g: np.ndarray) -> None:
        if self.requires_grad:
            self.grad = g if self.grad is None else self.grad + g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic
    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data, _parents=(self, other))

        def bw(g):
            self._accum(_unbroadcast(g, self.shape))
            other._accum(_unbroadcast(g, other.shape))
        out._backward = bw if out.requires_grad else None
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, _parents=(self,))
        out._backward = (lambda g: self._accum(-g)) if out.requires_grad else None
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data, _parents=(self, other))

        def bw(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g * self.data, other.shape))
        out._backward = bw if out.requires_grad else None
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return self * other ** -1.0
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return as_tensor(other) * self ** -1.0

    def __pow__(self, p: float):
        out = Tensor(self.data ** p, _parents=(self,))
        out._backward = (lambda g: self._accum(g * p * self.data ** (p - 1))) if out.requires_grad else None
        return out

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data @ other.data, _parents=(self, other))

        def bw(g):
            if self.requires_grad:
                self._accum(g @ other.data.T)
            if other.requires_grad:
                other._accum(self.data.T @ g)
        out._backward = bw if out.requires_grad else None
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], _parents=(self,))

        def bw(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accum(full)
        out._backward = bw if out.requires_grad else None
        return out

    # reductions and reshapes
    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,))

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.shape).copy())
        out._backward = bw if out.requires_grad else None
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape), _parents=(self,))
        out._backward = (lambda g: self._accum(g.reshape(self.shape))) if out.requires_grad else None
        return out

    # elementwise functions
    def _unary(self, value: np.ndarray, dfdx: Callable[[], np.ndarray]):
        out = Tensor(value, _parents=(self,))
        out._backward = (lambda g: self._accum(g * dfdx())) if out.requires_grad else None
        return out

    def tanh(self):
        y = np.tanh(self.data)
        return self._unary(y, lambda: 1.0 - y * y)

    def sigmoid(self):
        y = _sigmoid(self.data)
        return self._unary(y, lambda: y * (1.0 - y))

    def silu(self):
        s = _sigmoid(self.data)
        return self._unary(self.data * s, lambda: s * (1.0 + self.data * (1.0 - s)))

    def exp(self):
        y = np.exp(self.data)
        return self._unary(y, lambda: y)

    def log(self):
        return self._unary(np.log(self.data), lambda: 1.0 / self.data)

    def softplus(self):
        return self._unary(np.logaddexp(0.0, self.data), lambda: _sigmoid(self.data))

    def sqrt(self):
        y = np.sqrt(self.data)
        return self._unary(y, lambda: 0.5 / y)

    def square(self):
        return self._unary(self.data * self.data, lambda: 2.0 * self.data)

    def clip(self, lo: float, hi: float):
        """Clamp with a pass-through gradient inside the interval and zero outside."""
        return self._unary(np.clip(self.data, lo, hi),
                           lambda: ((self.data >= lo) & (self.data <= hi)).astype(float))

    def detach(self) -> "Tensor":
        return Tensor(self.data)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis), _parents=tuple(ts))
    if out.requires_grad:
        sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

        def bw(g):
            for t, piece in zip(ts, np.split(g, sizes, axis=axis)):
                t._accum(piece)
        out._backward = bw
    return out


def minimum(a, b) -> Tensor:
    """Elementwise minimum; ties send the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    out = Tensor(np.where(pick_a, a.data, b.data), _parents=(a, b))

    def bw(g):
        a._accum(_unbroadcast(np.where(pick_a, g, 0.0), a.shape))
        b._accum(_unbroadcast(np.where(pick_a, 0.0, g), b.shape))
    out._backward = bw if out.requires_grad else None
    return out


# -- networks ----------------------------------------------------------------

ACTIVATIONS = ("silu", "tanh", "sigmoid", "softplus")
_NP_ACT = {
    "silu": lambda x: x * _sigmoid(x),
    "tanh": np.tanh,
    "sigmoid": _sigmoid,
    "softplus": lambda x: np.logaddexp(0.0, x),
}


@dataclass(frozen=True)
class NetSpec:
    """Layer widths input -> hidden... -> output; activations by name.

    ``final_activation`` of ``None`` leaves the output affine.
    """

    layer_sizes: tuple[int, ...]
    activation: str = "silu"
    final_activation: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError("need >= 2 layers with widths >= 1")
        for act in (self.activation, self.final_activation):
            if act is not None and act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    @property
    def shapes(self) -> list[tuple[tuple[int, int], tuple[int]]]:
        return [((i, o), (o,)) for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:])]

    @property
    def n_params(self) -> int:
        return sum(i * o + o for (i, o), _ in self.shapes)

    def to_dict(self) -> dict:
        return {"layer_sizes": list(self.layer_sizes), "activation": self.activation,
                "final_activation": self.final_activation}


class ParamSet:
    """Weights and biases of one network, stored contiguously in ``flat``."""

    def __init__(self, spec: NetSpec, flat: Optional[np.ndarray] = None):
        self.spec = spec
        if flat is None:
            flat = np.zeros(spec.n_params)
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, got {flat.shape}")
        if not np.all(np.isfinite(flat)):
            raise ValueError("parameters must be finite")
        self.flat = flat

    def layers(self, flat: Optional[np.ndarray] = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views into the flat vector."""
        flat = self.flat if flat is None else flat
        out, pos = [], 0
        for (i, o), _ in self.spec.shapes:
            w = flat[pos: pos + i * o].reshape(i, o)
            pos += i * o
            b = flat[pos: pos + o]
            pos += o
            out.append((w, b))
        return out

    def copy(self) -> "ParamSet":
        return ParamSet(self.spec, self.flat.copy())

    def __repr__(self):
        return f"ParamSet({self.spec.layer_sizes}, n={self.flat.size})"


def init_params(spec: NetSpec, rng: np.random.Generator, final_scale: float = 1.0) -> ParamSet:
    """Uniform fan-in init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)); last layer times ``final_scale``."""
    p = ParamSet(spec)
    layers = p.layers()
    for li, (w, b) in enumerate(layers):
        bound = 1.0 / math.sqrt(w.shape[0])
        if li == len(layers) - 1:
            bound *= final_scale
        w[...] = rng.uniform(-bound, bound, size=w.shape)
        b[...] = rng.uniform(-bound, bound, size=b.shape)
    return p


def forward(params: ParamSet, x: np.ndarray) -> np.ndarray:
    """Plain numpy evaluation (no tape).  ``x`` is (batch, in) or (in,)."""
    spec = params.spec
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.layer_sizes[0]:
        raise ValueError(f"input width {x.shape[-1]} != {spec.layer_sizes[0]}")
    layers = params.layers()
    act = _NP_ACT[spec.activation]
    for li, (w, b) in enumerate(layers):
        x = x @ w + b
        if li < len(layers) - 1:
            x = act(x)
        elif spec.final_activation is not None:
            x = _NP_ACT[spec.final_activation](x)
    return x


class BoundNet:
    """A ParamSet with its layers exposed as leaf tensors for one gradient pass."""

    def __init__(self, params: ParamSet, trainable: bool = True):
        self.params = params
        self.leaves = [(Tensor(w, requires_grad=trainable), Tensor(b, requires_grad=trainable))
                       for w, b in params.layers()]

    def __call__(self, x) -> Tensor:
        spec = self.params.spec
        x = as_tensor(x)
        if x.shape[-1] != spec.layer_sizes[0]:
            raise ValueError(f"input width {x.shape[-1]} != {spec.layer_sizes[0]}")
        n = len(self.leaves)
        for li, (w, b) in enumerate(self.leaves):
            x = x @ w + b
            if li < n - 1:
                x = getattr(x, spec.activation)()
            elif spec.final_activation is not None:
                x = getattr(x, spec.final_activation)()
        return x

    def grad_flat(self) -> np.ndarray:
        parts = []
        for w, b in self.leaves:
            parts.append((w.grad if w.grad is not None else np.zeros_like(w.data)).ravel())
            parts.append(b.grad if b.grad is not None else np.zeros_like(b.data))
        return np.concatenate(parts)


def gradient(loss_fn: Callable[..., Tensor], *params: ParamSet) -> tuple[float, list[np.ndarray]]:
    """Loss value and exact gradients w.r.t. every given ParamSet.

    ``loss_fn`` receives one :class:`BoundNet` per ParamSet and returns a
    scalar Tensor.
    """
    bound = [BoundNet(p) for p in params]
    loss = loss_fn(*bound)
    value = float(np.asarray(loss.data).reshape(()))
    if not math.isfinite(value):
        raise FloatingPointError(f"non-finite loss {value!r} for nets {[p.spec.layer_sizes for p in params]}")
    loss.backward()
    return value, [b.grad_flat() for b in bound]


def numerical_gradient(loss_fn: Callable[[ParamSet], float], params: ParamSet,
                       step: float = 1e-5) -> np.ndarray:
    """Central finite differences over every parameter (test oracle)."""
    grad = np.empty_like(params.flat)
    probe = params.copy()
    for i in range(params.flat.size):
        orig = probe.flat[i]
        probe.flat[i] = orig + step
        up = loss_fn(probe)
        probe.flat[i] = orig - step
        down = loss_fn(probe)
        probe.flat[i] = orig
        grad[i] = (up - down) / (2 * step)
    return grad


# -- optimization -------------------------------------------------------------

@dataclass
class OptState:
    """Adam moments and hyperparameters for one ParamSet."""

    lr: float
    size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_grad_norm: Optional[float] = None
    step: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)

    @classmethod
    def for_params(cls, params: ParamSet, lr: float, **kw) -> "OptState":
        return cls(lr=lr, size=params.flat.size, **kw)

    def to_dict(self) -> dict:
        return {"lr": self.lr, "size": self.size, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "max_grad_norm": self.max_grad_norm, "step": self.step,
                "m": self.m.tolist(), "v": self.v.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "OptState":
        d = dict(d)
        d["m"] = np.array(d["m"], dtype=float)
        d["v"] = np.array(d["v"], dtype=float)
        return cls(**d)


def optimizer_step(params: ParamSet, grads: np.ndarray, opt: OptState) -> ParamSet:
    """One bias-corrected Adam update, in place; returns ``params``."""
    g = np.asarray(grads, dtype=float)
    if g.shape != params.flat.shape or opt.m.shape != params.flat.shape:
        raise ValueError("gradient / moment shapes do not match parameters")
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient passed to optimizer_step")
    if opt.max_grad_norm is not None:
        norm = float(np.linalg.norm(g))
        if norm > opt.max_grad_norm:
            g = g * (opt.max_grad_norm / norm)
    opt.step += 1
    opt.m = opt.beta1 * opt.m + (1 - opt.beta1) * g
    opt.v = opt.beta2 * opt.v + (1 - opt.beta2) * g * g
    m_hat = opt.m / (1 - opt.beta1 ** opt.step)
    v_hat = opt.v / (1 - opt.beta2 ** opt.step)
    params.flat -= opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return params


def soft_update(target: ParamSet, online: ParamSet, tau: float) -> ParamSet:
    """target <- tau * online + (1 - tau) * target, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if target.flat.shape != online.flat.shape:
        raise ValueError("target and online shapes differ")
    target.flat *= (1.0 - tau)
    target.flat += tau * online.flat
    return target


def time_embed(t: Union[int, np.ndarray], T: int, dim: int) -> np.ndarray:
    """Sinusoidal features of t/T: sin/cos of pi * 2^i * t/T for i = 0..dim/2-1.

    Vectorized over an integer array ``t`` (returns (n, dim)).
    """
    t_arr = np.asarray(t)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if np.any(t_arr < 1) or np.any(t_arr > T):
        raise ValueError(f"diffusion step must lie in [1, {T}]")
    x = t_arr.astype(float)[..., None] / T
    n_freq = (dim + 1) // 2
    ang = np.pi * x * (2.0 ** np.arange(n_freq))
    emb = np.empty(x.shape[:-1] + (2 * n_freq,))
    emb[..., 0::2] = np.sin(ang)
    emb[..., 1::2] = np.cos(ang)
    return emb[..., :dim]


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(path: Union[str, Path], nets: dict[str, ParamSet],
                    opts: Optional[dict[str, OptState]] = None, meta: Optional[dict] = None) -> None:
    """JSON checkpoint; floats are written with round-trip precision."""
    doc = {
        "format": "covsem-checkpoint",
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "nets": {name: {"spec": p.spec.to_dict(), "flat": p.flat.tolist()} for name, p in nets.items()},
        "opts": {name: o.to_dict() for name, o in (opts or {}).items()},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: Union[str, Path]) -> tuple[dict[str, ParamSet], dict[str, OptState], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "covsem-checkpoint" or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint (format={doc.get('format')!r}, "
                         f"version={doc.get('version')!r}, expected {CHECKPOINT_VERSION})")
    nets = {}
    for name, rec in doc["nets"].items():
        spec = rec["spec"]
        nets[name] = ParamSet(NetSpec(tuple(spec["layer_sizes"]), spec["activation"], spec["final_activation"]),
                              np.array(rec["flat"], dtype=float))
    opts = {name: OptState.from_dict(rec) for name, rec in doc.get("opts", {}).items()}
    return nets, opts, doc.get("meta", {})
