"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is built define-by-run: every op returns a new Tensor holding
references to its parents and a closure that routes the output gradient
back to them.  A backward pass topologically sorts the graph reachable
from the loss and visits each node exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateInputError, DimensionError

EPS_DENOM = 1e-12


class Tensor:
    """A node in the computation graph wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), _as_tensor(-1.0)))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, _as_tensor(-1.0)))

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Reverse-mode pass from this scalar node.

        Gradients accumulate into ``grad`` of every reachable tensor
        with ``requires_grad`` set (and of interior nodes, which is
        harmless and keeps the chain rule uniform).
        """
        if self.data.shape != ():
            raise DimensionError(
                f"backward requires a scalar loss, got shape {self.data.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.ones((), dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


class Parameter(Tensor):
    """A trainable leaf tensor with a zero-initialized gradient buffer."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)
        self.grad = np.zeros_like(self.data)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic -------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data + b.data
    except ValueError:
        raise DimensionError(f"add: incompatible shapes {a.shape} vs {b.shape}")

    def back(g):
        a._accum(_unbroadcast(g, a.data.shape))
        b._accum(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Broadcasting elementwise multiply (also serves as mask application)."""
    try:
        out_data = a.data * b.data
    except ValueError:
        raise DimensionError(f"mul: incompatible shapes {a.shape} vs {b.shape}")

    def back(g):
        a._accum(_unbroadcast(g * b.data, a.data.shape))
        b._accum(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=back)


def scalar_div(a: Tensor, denom: Tensor) -> Tensor:
    """Divide a tensor by a scalar tensor."""
    if denom.data.shape != ():
        raise DimensionError(
            f"scalar_div: denominator must be scalar, got shape {denom.shape}")
    d = float(denom.data)
    if abs(d) < EPS_DENOM:
        raise DegenerateInputError(f"scalar_div: |denominator| = {abs(d)} < {EPS_DENOM}")
    out_data = a.data / d

    def back(g):
        a._accum(g / d)
        denom._accum(np.asarray(-(g * a.data).sum() / (d * d)))

    return Tensor(out_data, _parents=(a, denom), _backward=back)


def relu(a: Tensor) -> Tensor:
    """max(0, x); subgradient at 0 is taken as 0."""
    mask = a.data > 0.0
    out_data = np.where(mask, a.data, 0.0)

    def back(g):
        a._accum(g * mask)

    return Tensor(out_data, _parents=(a,), _backward=back)


def _unary(a: Tensor, f, df) -> Tensor:
    out_data = f(a.data)

    def back(g):
        a._accum(g * df(a.data, out_data))

    return Tensor(out_data, _parents=(a,), _backward=back)


def sin(a: Tensor) -> Tensor:
    return _unary(a, np.sin, lambda x, y: np.cos(x))


def cos(a: Tensor) -> Tensor:
    return _unary(a, np.cos, lambda x, y: -np.sin(x))


def exp(a: Tensor) -> Tensor:
    return _unary(a, np.exp, lambda x, y: y)


def log(a: Tensor) -> Tensor:
    return _unary(a, np.log, lambda x, y: 1.0 / x)


def sigmoid(a: Tensor) -> Tensor:
    return _unary(a, lambda x: 1.0 / (1.0 + np.exp(-x)), lambda x, y: y * (1.0 - y))


def sqrt(a: Tensor) -> Tensor:
    return _unary(a, np.sqrt, lambda x, y: 0.5 / y)


# -- reductions --------------------------------------------------------

def tsum(a: Tensor) -> Tensor:
    out_data = np.asarray(a.data.sum())

    def back(g):
        a._accum(np.broadcast_to(g, a.data.shape).copy())

    return Tensor(out_data, _parents=(a,), _backward=back)


def channel_sum(a: Tensor) -> Tensor:
    """Sum a [C, H, W] tensor over its spatial axes, giving a length-C vector."""
    if a.data.ndim != 3:
        raise DimensionError(f"channel_sum expects a 3-d tensor, got shape {a.shape}")
    out_data = a.data.sum(axis=(1, 2))

    def back(g):
        a._accum(np.broadcast_to(g[:, None, None], a.data.shape).copy())

    return Tensor(out_data, _parents=(a,), _backward=back)


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1 or a.shape != b.shape:
        raise DimensionError(f"dot expects equal-length vectors, got {a.shape} vs {b.shape}")
    out_data = np.asarray(a.data @ b.data)

    def back(g):
        a._accum(g * b.data)
        b._accum(g * a.data)

    return Tensor(out_data, _parents=(a, b), _backward=back)


def concat(parts: Sequence[Tensor]) -> Tensor:
    for p in parts:
        if p.data.ndim != 1:
            raise DimensionError(f"concat expects 1-d tensors, got shape {p.shape}")
    out_data = np.concatenate([p.data for p in parts])
    offsets = np.cumsum([0] + [p.data.size for p in parts])

    def back(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            p._accum(g[lo:hi])

    return Tensor(out_data, _parents=tuple(parts), _backward=back)


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """a.b / (|a||b|), in [-1, 1]; raises on near-zero norms."""
    na = float(np.linalg.norm(a.data))
    nb = float(np.linalg.norm(b.data))
    if na < EPS_DENOM or nb < EPS_DENOM:
        raise DegenerateInputError(
            f"cosine_similarity: vector norm too small ({na:.3e}, {nb:.3e})")
    num = dot(a, b)
    den = sqrt(mul(dot(a, a), dot(b, b)))
    return scalar_div(num, den)


# -- spatial ops -------------------------------------------------------

def conv2d_valid(inp: Tensor, kernels: Tensor) -> Tensor:
    """Valid cross-correlation of [C_in, H, W] with [C_out, C_in, kh, kw].

    Stride 1, no padding, no kernel flip.
    """
    if inp.data.ndim != 3:
        raise DimensionError(f"conv2d_valid: input must be 3-d, got shape {inp.shape}")
    if kernels.data.ndim != 4:
        raise DimensionError(f"conv2d_valid: kernels must be 4-d, got shape {kernels.shape}")
    c_in, h, w = inp.data.shape
    c_out, kc, kh, kw = kernels.data.shape
    if kc != c_in:
        raise DimensionError(
            f"conv2d_valid: kernel in-channels {kc} != input channels {c_in}")
    if kh > h or kw > w:
        raise DimensionError(
            f"conv2d_valid: kernel {kh}x{kw} larger than input {h}x{w}")
    windows = sliding_window_view(inp.data, (kh, kw), axis=(1, 2))
    out_data = np.tensordot(kernels.data, windows, axes=([1, 2, 3], [0, 3, 4]))

    def back(g):
        # d/dkernels: correlate input windows with the output gradient
        gk = np.tensordot(g, windows, axes=([1, 2], [1, 2]))
        kernels._accum(gk)
        # d/dinput: full correlation of the padded gradient with flipped kernels
        gpad = np.pad(g, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        gwin = sliding_window_view(gpad, (kh, kw), axis=(1, 2))
        kflip = kernels.data[:, :, ::-1, ::-1]
        gi = np.einsum("oikl,ohwkl->ihw", kflip, gwin, optimize=True)
        inp._accum(gi)

    return Tensor(out_data, _parents=(inp, kernels), _backward=back)


def _pool_windows(data: np.ndarray) -> np.ndarray:
    """View [C, H, W] as [C, H//2, W//2, 4] non-overlapping 2x2 windows."""
    c, h, w = data.shape
    ho, wo = h // 2, w // 2
    trimmed = data[:, : ho * 2, : wo * 2]
    return (trimmed.reshape(c, ho, 2, wo, 2)
            .transpose(0, 1, 3, 2, 4)
            .reshape(c, ho, wo, 4))


def maxpool2(a: Tensor) -> Tensor:
    """2x2 non-overlapping max pooling of [C, H, W]; odd trailing row/col dropped.

    Gradient routes to the argmax position; ties break to the first index
    in row-major window order.
    """
    if a.data.ndim != 3:
        raise DimensionError(f"maxpool2 expects a 3-d tensor, got shape {a.shape}")
    c, h, w = a.data.shape
    if h < 2 or w < 2:
        raise DimensionError(f"maxpool2 needs H, W >= 2, got {h}x{w}")
    win = _pool_windows(a.data)
    idx = win.argmax(axis=-1)
    out_data = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    ho, wo = out_data.shape[1], out_data.shape[2]

    def back(g):
        gwin = np.zeros((c, ho, wo, 4), dtype=np.float64)
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        gfull = np.zeros_like(a.data)
        gfull[:, : ho * 2, : wo * 2] = (gwin.reshape(c, ho, wo, 2, 2)
                                        .transpose(0, 1, 3, 2, 4)
                                        .reshape(c, ho * 2, wo * 2))
        a._accum(gfull)

    return Tensor(out_data, _parents=(a,), _backward=back)


def avgpool2(a: Tensor) -> Tensor:
    """2x2 non-overlapping average pooling of [C, H, W] or [H, W]."""
    squeeze = a.data.ndim == 2
    if a.data.ndim not in (2, 3):
        raise DimensionError(f"avgpool2 expects a 2-d or 3-d tensor, got shape {a.shape}")
    data = a.data[None] if squeeze else a.data
    c, h, w = data.shape
    if h < 2 or w < 2:
        raise DimensionError(f"avgpool2 needs H, W >= 2, got {h}x{w}")
    win = _pool_windows(data)
    out_data = win.mean(axis=-1)
    ho, wo = out_data.shape[1], out_data.shape[2]
    if squeeze:
        out_data = out_data[0]

    def back(g):
        g3 = g[None] if squeeze else g
        gwin = np.repeat(g3[..., None] / 4.0, 4, axis=-1)
        gfull = np.zeros_like(data)
        gfull[:, : ho * 2, : wo * 2] = (gwin.reshape(c, ho, wo, 2, 2)
                                        .transpose(0, 1, 3, 2, 4)
                                        .reshape(c, ho * 2, wo * 2))
        a._accum(gfull[0] if squeeze else gfull)

    return Tensor(out_data, _parents=(a,), _backward=back)


# -- gradient checking -------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool


def grad_check(fn: Callable[[], Tensor], params: Sequence[Parameter],
               h: float = 1e-4, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of fn() against central finite differences.

    fn must be a deterministic builder returning a scalar loss Tensor;
    it is re-evaluated with perturbed parameter entries, so the graph is
    rebuilt on every call.  rel_err = |a - n| / max(1e-8, |a| + |n|).
    """
    if not (0.0 < h <= 1e-2):
        raise ValueError(f"grad_check: step h must be in (0, 1e-2], got {h}")
    for p in params:
        p.zero_grad()
    loss = fn()
    if not np.isfinite(loss.data):
        raise FloatingPointError("grad_check: non-finite loss")
    loss.backward()
    analytic = [p.grad.copy() for p in params]

    max_rel = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = fn().item()
            flat[i] = orig - h
            lm = fn().item()
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise FloatingPointError("grad_check: non-finite perturbed loss")
            n = (lp - lm) / (2.0 * h)
            ai = a.reshape(-1)[i]
            rel = abs(ai - n) / max(1e-8, abs(ai) + abs(n))
            max_rel = max(max_rel, rel)
    return GradCheckReport(max_rel_err=max_rel, passed=max_rel < tol)
