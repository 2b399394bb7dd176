"""Minimal 4-D tensor engine with reverse-mode differentiation.

Values are numpy arrays laid out as (batch, channels, height, width).
Every op records its parents and a closure that pushes the output
gradient back to them; ``Tensor.backward`` walks that graph in reverse
topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from numba import njit


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible with an op."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


_KINK_LOG: list | None = None


@contextlib.contextmanager
def record_kinks():
    """Collect the sign pattern of every non-smooth op input evaluated in the block.

    Finite-difference checks compare these patterns to spot probes that
    straddle a kink.
    """
    global _KINK_LOG
    prev, _KINK_LOG = _KINK_LOG, []
    try:
        yield _KINK_LOG
    finally:
        _KINK_LOG = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = "", dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        Intermediate nodes do not keep their gradients. Calling twice without
        zeroing leaves accumulates.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        # tape is single-use
        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
    return order


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _check4(x: Tensor, what: str) -> None:
    if x.data.ndim != 4:
        raise DimensionError(f"{what}: expected a 4-D (n, c, h, w) tensor, got shape {x.shape}")


# ---------------------------------------------------------------------------
# convolution


def conv_output_size(size: int, f: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - f) // stride + 1


def deconv_output_size(size: int, f: int, stride: int, pad: int) -> int:
    return (size - 1) * stride - 2 * pad + f


@njit(cache=True)
def _gather_into(xpad, cols, stride):  # pragma: no cover - compiled
    c, f, _, n, oh, ow = cols.shape
    for ch in range(c):
        for i in range(f):
            for j in range(f):
                for b in range(n):
                    for y in range(oh):
                        r = i + y * stride
                        for x in range(ow):
                            cols[ch, i, j, b, y, x] = xpad[b, ch, r, j + x * stride]


@njit(cache=True)
def _scatter_into(cols, out, stride):  # pragma: no cover - compiled
    c, f, _, n, oh, ow = cols.shape
    for ch in range(c):
        for i in range(f):
            for j in range(f):
                for b in range(n):
                    for y in range(oh):
                        r = i + y * stride
                        for x in range(ow):
                            out[b, ch, r, j + x * stride] += cols[ch, i, j, b, y, x]


def _gather(xpad: np.ndarray, f: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Patches of an (n, c, H, W) array as a (c*f*f, n*oh*ow) matrix."""
    n, c = xpad.shape[:2]
    cols = np.empty((c, f, f, n, oh, ow), dtype=xpad.dtype)
    _gather_into(np.ascontiguousarray(xpad), cols, stride)
    return cols.reshape(c * f * f, n * oh * ow)


def _scatter(cols: np.ndarray, shape: tuple, f: int, stride: int, out_hw: tuple[int, int]) -> np.ndarray:
    """Adjoint of ``_gather``: sum a (c*f*f, n*oh*ow) patch matrix into an (n, c, H, W) canvas.

    ``shape`` is (n, c, oh, ow).
    """
    n, c, oh, ow = shape
    out = np.zeros((n, c) + tuple(out_hw), dtype=cols.dtype)
    _scatter_into(np.ascontiguousarray(cols).reshape(c, f, f, n, oh, ow), out, stride)
    return out


def _channels_first(x: np.ndarray) -> np.ndarray:
    """(n, c, h, w) -> (c, n*h*w)."""
    n, c, h, w = x.shape
    return np.ascontiguousarray(x.transpose(1, 0, 2, 3)).reshape(c, n * h * w)


def _batch_first(m: np.ndarray, n: int, h: int, w: int) -> np.ndarray:
    """(c, n*h*w) -> (n, c, h, w)."""
    return np.ascontiguousarray(m.reshape(-1, n, h, w).transpose(1, 0, 2, 3))


def _check_kernel(weight: Tensor, bias: Tensor | None, cin: int, transposed: bool, what: str) -> None:
    if weight.data.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise DimensionError(f"{what}: kernel must be square 4-D, got {weight.shape}")
    kin = weight.shape[0] if transposed else weight.shape[1]
    if kin != cin:
        raise DimensionError(f"{what}: input has {cin} channels but kernel expects {kin}")
    cout = weight.shape[1] if transposed else weight.shape[0]
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"{what}: bias shape {bias.shape} does not match {cout} output channels")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation with zero padding. ``weight`` is (out, in, f, f)."""
    _check4(x, "conv2d")
    _check_kernel(weight, bias, x.shape[1], False, "conv2d")
    if stride < 1 or padding < 0:
        raise DimensionError(f"conv2d: invalid stride={stride} padding={padding}")
    n, c, h, w = x.shape
    f = weight.shape[2]
    if h + 2 * padding < f or w + 2 * padding < f:
        raise DimensionError(f"conv2d: padded input {h + 2 * padding}x{w + 2 * padding} smaller than kernel {f}")
    oh, ow = conv_output_size(h, f, stride, padding), conv_output_size(w, f, stride, padding)
    cout = weight.shape[0]
    xpad = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _gather(xpad, f, stride, oh, ow)
    wmat = weight.data.reshape(cout, c * f * f)
    out = _batch_first(wmat @ cols, n, oh, ow)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward(g):
        gx = gw = gb = None
        gmat = _channels_first(g)
        if x.requires_grad:
            dpad = _scatter(wmat.T @ gmat, (n, c, oh, ow), f, stride, xpad.shape[2:])
            gx = dpad[:, :, padding : padding + h, padding : padding + w]
        if weight.requires_grad:
            gw = (gmat @ cols.T).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, backward)


def conv_transpose2d(
    x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0
) -> Tensor:
    """Transposed convolution, the adjoint of ``conv2d`` with the same kernel.

    ``weight`` is laid out (in, out, f, f) so that the kernel of a conv2d
    mapping a->b, passed here, maps b->a.
    """
    _check4(x, "conv_transpose2d")
    _check_kernel(weight, bias, x.shape[1], True, "conv_transpose2d")
    n, c, h, w = x.shape
    f = weight.shape[2]
    oh, ow = deconv_output_size(h, f, stride, padding), deconv_output_size(w, f, stride, padding)
    if oh <= 0 or ow <= 0:
        raise DimensionError(f"conv_transpose2d: geometry f={f} st={stride} pd={padding} gives output {oh}x{ow}")
    full = ((h - 1) * stride + f, (w - 1) * stride + f)
    cout = weight.shape[1]
    wmat = weight.data.reshape(c, cout * f * f)
    xmat = _channels_first(x.data)
    out = _scatter(wmat.T @ xmat, (n, cout, h, w), f, stride, full)[:, :, padding : padding + oh, padding : padding + ow]
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def backward(g):
        gx = gw = gb = None
        gpad = np.pad(g, ((0, 0), (0, 0), (padding, full[0] - oh - padding), (padding, full[1] - ow - padding)))
        gcols = _gather(gpad, f, stride, h, w)
        if x.requires_grad:
            gx = _batch_first(wmat @ gcols, n, h, w)
        if weight.requires_grad:
            gw = (xmat @ gcols.T).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, backward)


# ---------------------------------------------------------------------------
# elementwise and structural ops


def prelu(x: Tensor, slopes: Tensor) -> Tensor:
    """max(0, x) + a * min(0, x); ``slopes`` holds one value or one per channel."""
    _check4(x, "prelu")
    k = slopes.data.size
    if k not in (1, x.shape[1]):
        raise DimensionError(f"prelu: {k} slopes for {x.shape[1]} channels")
    a = slopes.data.reshape(1, -1, 1, 1)
    pos = x.data > 0
    if _KINK_LOG is not None:
        _KINK_LOG.append(pos)
    out = np.where(pos, x.data, a * x.data)

    def backward(g):
        gx = np.where(pos, g, a * g) if x.requires_grad else None
        ga = None
        if slopes.requires_grad:
            neg = np.where(pos, 0.0, x.data * g)
            ga = neg.sum() if k == 1 else neg.sum(axis=(0, 2, 3))
            ga = np.asarray(ga, dtype=slopes.dtype).reshape(slopes.shape)
        return gx, ga

    return _result(out, (x, slopes), backward)


def concat_channels(inputs: Sequence[Tensor]) -> Tensor:
    if not inputs:
        raise DimensionError("concat_channels: empty input list")
    if len(inputs) == 1:
        return inputs[0]
    for t in inputs:
        _check4(t, "concat_channels")
    ref = inputs[0].shape
    for t in inputs[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (ref[0], ref[2], ref[3]):
            raise DimensionError(f"concat_channels: {t.shape} does not match {ref} outside the channel axis")
    bounds = np.cumsum([0] + [t.shape[1] for t in inputs])
    out = np.concatenate([t.data for t in inputs], axis=1)

    def backward(g):
        return [g[:, bounds[i] : bounds[i + 1]] for i in range(len(inputs))]

    return _result(out, tuple(inputs), backward)


def _same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def add_constant(a: Tensor, c: np.ndarray) -> Tensor:
    """a + c where c is a fixed array outside the tape."""
    if a.shape != np.shape(c):
        raise DimensionError(f"add_constant: shape mismatch {a.shape} vs {np.shape(c)}")
    return _result(a.data + c, (a,), lambda g: (g,))


def resize_separable(x: Tensor, mh: np.ndarray, mw: np.ndarray) -> Tensor:
    """mh @ x @ mw.T over the two trailing axes (a fixed linear resize)."""
    _check4(x, "resize_separable")
    if mh.shape[1] != x.shape[2] or mw.shape[1] != x.shape[3]:
        raise DimensionError(f"resize_separable: matrices {mh.shape}, {mw.shape} do not fit input {x.shape}")
    mh = mh.astype(x.dtype, copy=False)
    mw = mw.astype(x.dtype, copy=False)
    out = np.matmul(np.matmul(mh, x.data), mw.T)
    return _result(out, (x,), lambda g: (np.matmul(np.matmul(mh.T, g), mw),))


def tensor_sum(x: Tensor) -> Tensor:
    return _result(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape),))


def weighted_sum(x: Tensor, w: np.ndarray) -> Tensor:
    """sum(x * w) with fixed weights; a convenient generic scalar probe."""
    _same_shape(x, Tensor(w), "weighted_sum")
    return _result(np.asarray((x.data * w).sum()), (x,), lambda g: (g * w,))


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error; subgradient 0 at exact ties."""
    _same_shape(pred, target, "l1_loss")
    diff = pred.data - target.data
    n = diff.size
    s = np.sign(diff)
    if _KINK_LOG is not None:
        _KINK_LOG.append(s)

    def backward(g):
        return g * s / n, -g * s / n

    return _result(np.asarray(np.abs(diff).mean()), (pred, target), backward)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    _same_shape(pred, target, "mse_loss")
    diff = pred.data - target.data
    n = diff.size

    def backward(g):
        return g * 2.0 * diff / n, -g * 2.0 * diff / n

    return _result(np.asarray((diff * diff).mean()), (pred, target), backward)


def parameters_zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
