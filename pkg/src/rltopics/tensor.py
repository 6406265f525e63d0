"""Dense-tensor engine with tape-based reverse-mode automatic differentiation.

Small by design: float64 numpy arrays, strictly the primitives the topic
model needs. Ops executed while a :class:`Tape` is active are recorded in
program order (already topologically sorted); :func:`backward` replays the
tape once in reverse, accumulating gradients into every ``requires_grad``
leaf it saw. Non-finite results raise immediately (numpy FP traps are set to
``raise`` inside every kernel).
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

DTYPE = np.float64

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))
_RAISE = {"over": "raise", "invalid": "raise", "divide": "raise"}


class Tensor:
    """A dense array plus its accumulated gradient."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Constant view of this tensor; gradient flow stops here."""
        return Tensor(self.data, requires_grad=False)

    # arithmetic sugar; all routed through the recorded primitives
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def sum(self, axis: int | None = None) -> "Tensor":
        return tensor_sum(self, axis)

    def mean(self) -> "Tensor":
        return tensor_mean(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("out", "backward")

    def __init__(self, out: Tensor, backward_fn):
        self.out = out
        self.backward = backward_fn


_ACTIVE: "Tape | None" = None


class Tape:
    """Ordered record of the primitive ops of one forward pass."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._produced: set[int] = set()
        self._leaves: dict[int, Tensor] = {}
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        global _ACTIVE
        self._prev = _ACTIVE
        _ACTIVE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE
        _ACTIVE = self._prev
        return False

    def __len__(self) -> int:
        return len(self._nodes)


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    tape = _ACTIVE
    if tape is None or not any(t.requires_grad for t in inputs):
        return out
    out.requires_grad = True
    tape._nodes.append(_Node(out, backward_fn))
    tape._produced.add(id(out))
    for t in inputs:
        if t.requires_grad and id(t) not in tape._produced:
            tape._leaves.setdefault(id(t), t)
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the shape of its source."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor, tape: Tape) -> dict[Tensor, np.ndarray]:
    """Gradient of a scalar loss w.r.t. every requires_grad leaf on the tape.

    Leaves the tape never touched on the path to ``loss`` get zero gradient.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    for node in tape._nodes:
        node.out.grad = None
    for leaf in tape._leaves.values():
        leaf.grad = None
    loss.grad = np.ones_like(loss.data)
    with np.errstate(**_RAISE):
        for node in reversed(tape._nodes):
            if node.out.grad is not None:
                node.backward(node.out.grad)
    return {
        leaf: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data))
        for leaf in tape._leaves.values()
    }


# ---------------------------------------------------------------------------
# primitives

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    with np.errstate(**_RAISE):
        out = Tensor(a.data @ b.data)

    def back(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _record(out, (a, b), back)


def add(a: Tensor, b: Tensor) -> Tensor:
    with np.errstate(**_RAISE):
        out = Tensor(a.data + b.data)

    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    return _record(out, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    with np.errstate(**_RAISE):
        out = Tensor(a.data - b.data)

    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.data.shape))

    return _record(out, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    with np.errstate(**_RAISE):
        out = Tensor(a.data * b.data)

    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(out, (a, b), back)


def neg(x: Tensor) -> Tensor:
    out = Tensor(-x.data)

    def back(g):
        _accum(x, -g)

    return _record(out, (x,), back)


def exp(x: Tensor) -> Tensor:
    with np.errstate(**_RAISE):
        out = Tensor(np.exp(x.data))

    def back(g):
        _accum(x, g * out.data)

    return _record(out, (x,), back)


def log(x: Tensor) -> Tensor:
    with np.errstate(**_RAISE):
        out = Tensor(np.log(x.data))

    def back(g):
        with np.errstate(**_RAISE):
            _accum(x, g / x.data)

    return _record(out, (x,), back)


def square(x: Tensor) -> Tensor:
    with np.errstate(**_RAISE):
        out = Tensor(x.data * x.data)

    def back(g):
        _accum(x, 2.0 * x.data * g)

    return _record(out, (x,), back)


def gelu(x: Tensor) -> Tensor:
    """x * Phi(x) with the exact normal CDF (erf form, not the tanh fit)."""
    if not np.all(np.isfinite(x.data)):
        raise FloatingPointError("gelu: non-finite input")
    with np.errstate(**_RAISE):
        cdf = ndtr(x.data)
        out = Tensor(x.data * cdf)

    def back(g):
        with np.errstate(**_RAISE):
            pdf = np.exp(-0.5 * x.data * x.data) / _SQRT_2PI
            _accum(x, g * (cdf + x.data * pdf))

    return _record(out, (x,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance normalization over the last axis, then affine."""
    width = x.data.shape[-1]
    if gain.data.shape != (width,) or bias.data.shape != (width,):
        raise ValueError(
            f"layer_norm affine shape mismatch: x last dim {width}, "
            f"gain {gain.data.shape}, bias {bias.data.shape}"
        )
    with np.errstate(**_RAISE):
        mu = x.data.mean(axis=-1, keepdims=True)
        xc = x.data - mu
        var = np.mean(xc * xc, axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        out = Tensor(xhat * gain.data + bias.data)

    def back(g):
        with np.errstate(**_RAISE):
            if gain.requires_grad:
                _accum(gain, _unbroadcast(g * xhat, gain.data.shape))
            if bias.requires_grad:
                _accum(bias, _unbroadcast(g, bias.data.shape))
            if x.requires_grad:
                dxhat = g * gain.data
                m1 = dxhat.mean(axis=-1, keepdims=True)
                m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
                _accum(x, inv * (dxhat - m1 - xhat * m2))

    return _record(out, (x, gain, bias), back)


def dropout(x: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: train-time mask scaled by 1/keep, eval is identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    keep = 1.0 - p
    mask = (rng.random(x.data.shape) < keep) / keep
    with np.errstate(**_RAISE):
        out = Tensor(x.data * mask)

    def back(g):
        _accum(x, g * mask)

    return _record(out, (x,), back)


def softmax(x: Tensor) -> Tensor:
    with np.errstate(**_RAISE):
        z = x.data - x.data.max(axis=-1, keepdims=True)
        e = np.exp(z)
        out = Tensor(e / e.sum(axis=-1, keepdims=True))

    def back(g):
        with np.errstate(**_RAISE):
            s = (g * out.data).sum(axis=-1, keepdims=True)
            _accum(x, out.data * (g - s))

    return _record(out, (x,), back)


def log_softmax(x: Tensor) -> Tensor:
    with np.errstate(**_RAISE):
        z = x.data - x.data.max(axis=-1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
        out = Tensor(z - lse)

    def back(g):
        with np.errstate(**_RAISE):
            _accum(x, g - np.exp(out.data) * g.sum(axis=-1, keepdims=True))

    return _record(out, (x,), back)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    out = Tensor(np.clip(x.data, lo, hi))
    passthrough = (x.data > lo) & (x.data < hi)

    def back(g):
        _accum(x, g * passthrough)

    return _record(out, (x,), back)


def tensor_sum(x: Tensor, axis: int | None = None) -> Tensor:
    with np.errstate(**_RAISE):
        out = Tensor(x.data.sum(axis=axis))

    def back(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape))
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape))

    return _record(out, (x,), back)


def tensor_mean(x: Tensor) -> Tensor:
    with np.errstate(**_RAISE):
        out = Tensor(x.data.mean())
    size = x.data.size

    def back(g):
        _accum(x, np.broadcast_to(g / size, x.data.shape))

    return _record(out, (x,), back)
