"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op builds an implicit graph of Tensor nodes; ``backward`` walks the
graph in reverse topological order and accumulates gradients on leaves that
were created with ``requires_grad=True``. All arithmetic is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested op."""


class DomainError(ValueError):
    """Input outside the mathematical domain of the op (e.g. log of <= 0)."""


class ContractError(RuntimeError):
    """An op precondition was violated by the caller."""


class NumericError(RuntimeError):
    """A computation produced non-finite values."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad=False, _parents=(), _bwd=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None  # ndarray shaped like data, or None
        self._parents = _parents
        self._bwd = _bwd

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def detach(self):
        """Copy of the value with no graph history (treat-as-constant)."""
        return Tensor(self.data.copy())

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class Tape:
    """Topologically ordered record of the nodes visited by a backward pass."""

    nodes: list = field(default_factory=list)


def _node(data, parents, bwd):
    return Tensor(data, _parents=tuple(parents), _bwd=bwd)


def _topo(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> Tape:
    """Reverse-mode sweep from a scalar loss; accumulates into leaf .grad."""
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    order = _topo(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
        if node._bwd is not None:
            for parent, pg in node._bwd(g):
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
    return Tape(nodes=order)


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    out_data = a.data @ b.data

    def bwd(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return _node(out_data, (a, b), bwd)


def _binary_shapes(a, b, name):
    if a.shape == b.shape:
        return
    if a.data.size == 1 or b.data.size == 1:
        return
    raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} "
                     "(only exact match or scalar broadcast)")


def _reduce_to(g, shape):
    if g.shape == shape:
        return g
    return np.full(shape, g.sum()) if np.prod(shape) == 1 else g.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "add")
    out = a.data + b.data

    def bwd(g):
        return ((a, _reduce_to(g, a.data.shape)), (b, _reduce_to(g, b.data.shape)))

    return _node(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "sub")
    out = a.data - b.data

    def bwd(g):
        return ((a, _reduce_to(g, a.data.shape)), (b, _reduce_to(-g, b.data.shape)))

    return _node(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "mul")
    out = a.data * b.data

    def bwd(g):
        return ((a, _reduce_to(g * b.data, a.data.shape)),
                (b, _reduce_to(g * a.data, b.data.shape)))

    return _node(out, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bwd(g):
        return ((a, g * c),)

    return _node(a.data * c, (a,), bwd)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """[batch x n] + [n] row broadcast, as used by linear layers."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_bias: {x.shape} + {b.shape}")
    out = x.data + b.data[None, :]

    def bwd(g):
        return ((x, g), (b, g.sum(axis=0)))

    return _node(out, (x, b), bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # relu'(0) := 0
    out = np.where(mask, a.data, 0.0)

    def bwd(g):
        return ((a, g * mask),)

    return _node(out, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bwd(g):
        return ((a, g * (1.0 - out * out)),)

    return _node(out, (a,), bwd)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def bwd(g):
        return ((a, g * out),)

    return _node(out, (a,), bwd)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive input")
    out = np.log(a.data)

    def bwd(g):
        return ((a, g / a.data),)

    return _node(out, (a,), bwd)


def square(a: Tensor) -> Tensor:
    out = a.data * a.data

    def bwd(g):
        return ((a, 2.0 * g * a.data),)

    return _node(out, (a,), bwd)


def concat(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    out = np.concatenate([a.data, b.data], axis=axis)
    na = a.data.shape[axis]

    def bwd(g):
        ga, gb = np.split(g, [na], axis=axis)
        return ((a, ga), (b, gb))

    return _node(out, (a, b), bwd)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; ties route the gradient to ``a``."""
    _binary_shapes(a, b, "minimum")
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)

    def bwd(g):
        return ((a, _reduce_to(g * take_a, a.data.shape)),
                (b, _reduce_to(g * ~take_a, b.data.shape)))

    return _node(out, (a, b), bwd)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp; gradient is zero outside (lo, hi)."""
    inside = (a.data > lo) & (a.data < hi)
    out = np.clip(a.data, lo, hi)

    def bwd(g):
        return ((a, g * inside),)

    return _node(out, (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        return ((a, np.full_like(a.data, g.reshape(-1)[0])),)

    return _node(np.asarray(a.data.sum()), (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def bwd(g):
        return ((a, np.full_like(a.data, g.reshape(-1)[0] / n)),)

    return _node(np.asarray(a.data.mean()), (a,), bwd)


def grouped_softmax(z: Tensor, L: int, V: int, tau: float) -> Tensor:
    """Softmax over each contiguous length-V block of the feature axis.

    L=1 with V equal to the full width recovers a plain row softmax.
    """
    if tau <= 0:
        raise ContractError(f"grouped_softmax: tau must be > 0, got {tau}")
    if z.data.ndim != 2 or z.shape[1] != L * V:
        raise ShapeError(f"grouped_softmax: width {z.shape} != {L}*{V}")
    batch = z.shape[0]
    x = z.data.reshape(batch, L, V) / tau
    x = x - x.max(axis=2, keepdims=True)
    e = np.exp(x)
    s = e / e.sum(axis=2, keepdims=True)
    out = s.reshape(batch, L * V)

    def bwd(g):
        gb = g.reshape(batch, L, V)
        dot = (gb * s).sum(axis=2, keepdims=True)
        gz = (s * (gb - dot)) / tau
        return ((z, gz.reshape(batch, L * V)),)

    return _node(out, (z,), bwd)


def log_softmax(z: Tensor) -> Tensor:
    """Row-wise log softmax via log-sum-exp."""
    if z.data.ndim != 2:
        raise ShapeError(f"log_softmax expects 2-D input, got {z.shape}")
    m = z.data.max(axis=1, keepdims=True)
    shifted = z.data - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bwd(g):
        return ((z, g - soft * g.sum(axis=1, keepdims=True)),)

    return _node(out, (z,), bwd)


def gather_rows(a: Tensor, idx) -> Tensor:
    """out[i] = a[i, idx[i]] for a 2-D tensor; returns a 1-D tensor."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(a.shape[0])
    out = a.data[rows, idx]

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[rows, idx] = g
        return ((a, ga),)

    return _node(out, (a,), bwd)


def take_rows(table: Tensor, idx) -> Tensor:
    """Row lookup table[idx]; gradient scatters back into the table."""
    idx = np.asarray(idx, dtype=np.int64)
    out = table.data[idx]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return ((table, gt),)

    return _node(out, (table,), bwd)


_ELEMENTWISE = {
    "relu": lambda z: relu(z),
    "tanh": lambda z: tanh(z),
    "exp": lambda z: exp(z),
    "log": lambda z: log(z),
    "crelu_pre": lambda z: concat(z, neg(z), axis=-1),
    "add": lambda a, b: add(a, b),
    "mul": lambda a, b: mul(a, b),
    "scale": lambda a, c: scale(a, c),
}


def elementwise(name: str, *inputs):
    """Dispatch table over the supported pointwise primitives."""
    if name not in _ELEMENTWISE:
        raise ContractError(f"unknown elementwise op {name!r}")
    return _ELEMENTWISE[name](*inputs)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-5
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, learning_rate, **kw):
        st = cls(learning_rate=learning_rate, **kw)
        st.m = [np.zeros_like(p.data) for p in params]
        st.v = [np.zeros_like(p.data) for p in params]
        return st


def adam_step(params, state: AdamState):
    """Bias-corrected Adam update in place; zeroes grads afterwards."""
    if state.epsilon <= 0:
        raise ContractError("Adam epsilon must be positive")
    for p in params:
        if p.grad is None:
            raise ContractError("adam_step: parameter has no gradient")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    lr = state.learning_rate
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        p.grad = None


# ---------------------------------------------------------------------------
# rng
# ---------------------------------------------------------------------------

class Rng:
    """Counter-based (Philox) generator with deterministic splitting.

    ``split(k)`` derives an independent child stream; the same (seed, path)
    always reproduces the same stream, so parallel rollouts stay reproducible.
    """

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(int(k) for k in path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def split(self, *keys) -> "Rng":
        return Rng(self.seed, self.path + keys)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def gumbel(self, size=None):
        return self._gen.gumbel(0.0, 1.0, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice_from_probs(self, probs_rows):
        """Sample one index per row of a [batch x k] probability matrix."""
        u = self._gen.random(probs_rows.shape[0])
        cdf = np.cumsum(probs_rows, axis=1)
        cdf[:, -1] = 1.0
        return (u[:, None] > cdf).sum(axis=1)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_diff_check(f, params, h: float = 1e-5) -> float:
    """Max relative error between tape gradients of f() and central differences.

    ``f`` must be a deterministic closure over the current parameter values
    returning a scalar Tensor. Relative error per coordinate is
    |g_tape - g_fd| / max(1, |g_fd|).
    """
    if h <= 0:
        raise ContractError("finite_diff_check: h must be positive")
    for p in params:
        p.grad = None
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("finite_diff_check: non-finite loss")
    backward(loss)
    tape_grads = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                  for p in params]
    max_err = 0.0
    for p, gt in zip(params, tape_grads):
        flat = p.data.reshape(-1)
        gflat = gt.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise NumericError("finite_diff_check: non-finite probe value")
            gfd = (fp - fm) / (2.0 * h)
            err = abs(gflat[i] - gfd) / max(1.0, abs(gfd))
            max_err = max(max_err, err)
    for p in params:
        p.grad = None
    return max_err
