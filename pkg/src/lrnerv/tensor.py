"""Dense tensors with reverse-mode automatic differentiation.

Everything is backed by float64 numpy arrays (the widest native real type),
and every operation reduces in a fixed order, so repeated runs on the same
machine are bitwise reproducible. Ops are pure: they never mutate their
inputs, and gradient tracking only happens while a ``GradTape`` is active.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

Array = np.ndarray

_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))


class Tensor:
    """A dense N-d array plus a ``requires_grad`` flag.

    ``data`` is always a float64 ndarray; ``shape * strides`` bookkeeping is
    delegated to numpy. Tensors are hashable by identity so they can key
    gradient dictionaries.
    """

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), self.requires_grad)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # arithmetic sugar; all routed through the taped ops below
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# gradient tape


class TapeConsumedError(RuntimeError):
    pass


class GradTape:
    """Ordered record of primitive ops, replayable backward exactly once.

    Ops append entries in execution order, which is already a topological
    order of the computation graph; ``backward`` walks it in reverse and
    accumulates adjoints additively across fan-out.
    """

    def __init__(self):
        # entry: (output, inputs, backward_fn); backward_fn(grad_out) returns
        # one grad array (or None) per input, aligned positionally
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._watched: dict[Tensor, None] = {}
        self._consumed = False

    def __enter__(self) -> "GradTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def watch(self, *tensors: Tensor) -> None:
        """Guarantee a gradient entry (possibly zero) for each tensor."""
        for t in tensors:
            if t.requires_grad:
                self._watched[t] = None

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable) -> None:
        self._entries.append((out, inputs, backward_fn))
        self.watch(*inputs)

    def __len__(self) -> int:
        return len(self._entries)


_TAPE_STACK: list[GradTape] = []


def _active_tape() -> GradTape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def backward(tape: GradTape, loss: Tensor) -> dict[Tensor, Array]:
    """Exact adjoints of the recorded computation, per watched tensor.

    Returns a dict mapping every watched ``requires_grad`` tensor to its
    gradient; tensors that do not influence ``loss`` get zeros of matching
    shape. The tape is single-use.
    """
    if loss.ndim != 0:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    if tape._consumed:
        raise TapeConsumedError("gradient tape already consumed")
    tape._consumed = True

    grads: dict[Tensor, Array] = {loss: np.ones((), dtype=np.float64)}
    for out, inputs, backward_fn in reversed(tape._entries):
        g_out = grads.get(out)
        if g_out is None:
            continue
        for inp, g in zip(inputs, backward_fn(g_out)):
            if g is None or not inp.requires_grad:
                continue
            acc = grads.get(inp)
            grads[inp] = g if acc is None else acc + g
    return {t: grads.get(t, np.zeros(t.shape)) for t in tape._watched}


def _record(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, tuple(inputs), backward_fn)
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data, a.requires_grad or b.requires_grad)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, a.requires_grad or b.requires_grad)

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(out, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data / b.data, a.requires_grad or b.requires_grad)

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _record(out, (a, b), bwd)


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(-a.data, a.requires_grad)
    return _record(out, (a,), lambda g: (-g,))


def abs_(a) -> Tensor:
    """|a| with the usual subgradient 0 at the kink."""
    a = as_tensor(a)
    out = Tensor(np.abs(a.data), a.requires_grad)
    return _record(out, (a,), lambda g: (g * np.sign(a.data),))


def square(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * a.data, a.requires_grad)
    return _record(out, (a,), lambda g: (2.0 * g * a.data,))


def sum_(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(), a.requires_grad)
    return _record(out, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.mean(), a.requires_grad)
    n = a.size

    def bwd(g):
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return _record(out, (a,), bwd)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), a.requires_grad)
    return _record(out, (a,), lambda g: (g.reshape(a.shape),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # numerically stable on both tails
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(s, a.requires_grad)
    return _record(out, (a,), lambda g: (g * s * (1.0 - s),))


def gelu(a) -> Tensor:
    """Exact GELU, x * Phi(x), with Phi the standard normal CDF."""
    a = as_tensor(a)
    x = a.data
    phi = 0.5 * (1.0 + erf(x / _SQRT2))
    out = Tensor(x * phi, a.requires_grad)

    def bwd(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        return (g * (phi + x * pdf),)

    return _record(out, (a,), bwd)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0), a.requires_grad)
    return _record(out, (a,), lambda g: (g * (a.data > 0),))


def linear(x, w, bias=None) -> Tensor:
    """y = w @ x (+ bias) for 1-D x, 2-D w of shape (out, in)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 1 or w.ndim != 2 or w.shape[1] != x.shape[0]:
        raise ValueError(f"linear shape mismatch: x {x.shape}, w {w.shape}")
    y = w.data @ x.data
    inputs = [x, w]
    req = x.requires_grad or w.requires_grad
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (w.shape[0],):
            raise ValueError(f"bias shape {bias.shape} != ({w.shape[0]},)")
        y = y + bias.data
        inputs.append(bias)
        req = req or bias.requires_grad
    out = Tensor(y, req)

    def bwd(g):
        gx = w.data.T @ g
        gw = np.outer(g, x.data)
        if bias is None:
            return gx, gw
        return gx, gw, g.copy()

    return _record(out, tuple(inputs), bwd)


# ---------------------------------------------------------------------------
# convolution


def _im2col(x: Array, kh: int, kw: int, ph: int, pw: int) -> Array:
    """Patch matrix of shape (C*kh*kw, Ho*Wo) from a zero-padded (C,H,W) map.

    Row order is (channel, kernel row, kernel col), matching a C-order
    reshape of (C_out, C_in, kh, kw) weights to (C_out, C_in*kh*kw).
    """
    c = x.shape[0]
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    ho, wo = win.shape[1], win.shape[2]
    return np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(c * kh * kw, ho * wo)


def _conv2d_raw(x: Array, w: Array, bias: Array | None, pad: tuple[int, int]) -> Array:
    ph, pw = pad
    co, ci, kh, kw = w.shape
    cols = _im2col(x, kh, kw, ph, pw)
    ho = x.shape[1] + 2 * ph - kh + 1
    wo = x.shape[2] + 2 * pw - kw + 1
    y = (w.reshape(co, ci * kh * kw) @ cols).reshape(co, ho, wo)
    if bias is not None:
        y = y + bias[:, None, None]
    return y


def conv2d(x, w, bias=None, pad: tuple[int, int] = (0, 0)) -> Tensor:
    """2-D cross-correlation of x (C_in,H,W) with w (C_out,C_in,kh,kw).

    Zero padding (ph, pw); stride 1; odd kernel extents only. Output spatial
    size is H + 2*ph - kh + 1 by W + 2*pw - kw + 1.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 4:
        raise ValueError(f"conv2d expects (C,H,W) and (Co,Ci,kh,kw), got {x.shape} and {w.shape}")
    co, ci, kh, kw = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel extents must be odd, got {kh}x{kw}")
    if x.shape[0] != ci:
        raise ValueError(f"input has {x.shape[0]} channels, kernel expects {ci}")
    ph, pw = pad
    ho = x.shape[1] + 2 * ph - kh + 1
    wo = x.shape[2] + 2 * pw - kw + 1
    if ho <= 0 or wo <= 0:
        raise ValueError(f"non-positive output extent {ho}x{wo}")

    inputs = [x, w]
    req = x.requires_grad or w.requires_grad
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (co,):
            raise ValueError(f"bias shape {bias.shape} != ({co},)")
        inputs.append(bias)
        req = req or bias.requires_grad

    cols = _im2col(x.data, kh, kw, ph, pw)
    y = (w.data.reshape(co, ci * kh * kw) @ cols).reshape(co, ho, wo)
    if bias is not None:
        y = y + bias.data[:, None, None]
    out = Tensor(y, req)

    def bwd(g):
        g_mat = g.reshape(co, ho * wo)
        gw = (g_mat @ cols.T).reshape(w.shape)
        # grad wrt input: full correlation of g with the flipped, transposed
        # kernel, then crop the padding border
        wf = np.ascontiguousarray(w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        gx_full = _conv2d_raw(g, wf, None, (kh - 1, kw - 1))
        gx = gx_full[:, ph:ph + x.shape[1], pw:pw + x.shape[2]]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(1, 2))

    return _record(out, tuple(inputs), bwd)


# ---------------------------------------------------------------------------
# pixel shuffle


def _shuffle_raw(x: Array, s: int) -> Array:
    c2, h, w = x.shape
    c = c2 // (s * s)
    return np.ascontiguousarray(
        x.reshape(c, s, s, h, w).transpose(0, 3, 1, 4, 2)
    ).reshape(c, h * s, w * s)


def _unshuffle_raw(x: Array, s: int) -> Array:
    c, hs, ws = x.shape
    h, w = hs // s, ws // s
    return np.ascontiguousarray(
        x.reshape(c, h, s, w, s).transpose(0, 2, 4, 1, 3)
    ).reshape(c * s * s, h, w)


def pixel_shuffle(x, s: int) -> Tensor:
    """Rearrange (C*s^2, H, W) to (C, H*s, W*s), sub-pixel convolution layout.

    Channel group g (size s^2) fills the s-by-s block of output channel g,
    row-major within the block: out[g, h*s+i, w*s+j] = in[g*s*s + i*s + j, h, w].
    """
    x = as_tensor(x)
    if s < 1:
        raise ValueError(f"upscale factor must be >= 1, got {s}")
    if x.ndim != 3 or x.shape[0] % (s * s) != 0:
        raise ValueError(f"channel count {x.shape[0]} not divisible by {s}^2")
    if s == 1:
        out = Tensor(x.data, x.requires_grad)
        return _record(out, (x,), lambda g: (g,))
    out = Tensor(_shuffle_raw(x.data, s), x.requires_grad)
    return _record(out, (x,), lambda g: (_unshuffle_raw(g, s),))


def pixel_unshuffle(x, s: int) -> Tensor:
    """Exact inverse of pixel_shuffle."""
    x = as_tensor(x)
    if x.ndim != 3 or x.shape[1] % s != 0 or x.shape[2] % s != 0:
        raise ValueError(f"spatial extents {x.shape[1:]} not divisible by {s}")
    if s == 1:
        out = Tensor(x.data, x.requires_grad)
        return _record(out, (x,), lambda g: (g,))
    out = Tensor(_unshuffle_raw(x.data, s), x.requires_grad)
    return _record(out, (x,), lambda g: (_shuffle_raw(g, s),))
