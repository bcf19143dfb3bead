"""Dense 4-D tensors and the numerical kernels the rest of the library runs on.

Feature maps are laid out (batch, channels, height, width), row-major with
width fastest, in float32 or float64. Every kernel validates its inputs and
refuses to let NaN/Inf escape: a non-finite value raises ``NonFiniteError``
instead of propagating.

Each kernel also records a reverse-mode closure on its output, so calling
``backward()`` on a scalar result fills ``.grad`` on every tensor that was
created with ``requires_grad=True``. Kernels are pure functions of their
inputs; tensors may be shared read-only across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)


class NonFiniteError(ValueError):
    """A kernel produced or received NaN/Inf."""


def _require_finite(arr: np.ndarray, what: str) -> None:
    # min+max is NaN/Inf-propagating and avoids allocating a bool mask
    if arr.size and not math.isfinite(float(arr.min()) + float(arr.max())):
        raise NonFiniteError(f"{what} contains NaN or Inf")


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in FLOAT_DTYPES:
        if dtype is None and arr.dtype.kind in "iub":
            arr = arr.astype(np.float64)
        else:
            raise TypeError(f"tensor dtype must be float32/float64, got {arr.dtype}")
    return arr


class Tensor:
    """A numpy array plus the bookkeeping for reverse-mode differentiation.

    Leaf tensors are created directly; kernel outputs carry references to
    their parents and a backward closure. ``requires_grad`` propagates from
    parents to outputs, and ``backward()`` on a scalar accumulates cotangents
    into ``.grad`` of every reachable leaf that asked for them.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = _as_float_array(data)
        if self.data.ndim and min(self.data.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got shape {self.data.shape}")
        _require_finite(self.data, name or "tensor data")
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple, backward, what: str) -> "Tensor":
        _require_finite(data, what)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = ""
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        grad = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}{grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar node.

        Topologically orders the graph below ``self`` (iteratively, so deep
        graphs cannot hit the recursion limit) and runs each node's closure
        in reverse. Accumulation order is fixed, so repeated runs on the same
        graph are bit-identical.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Small operator sugar; the library itself calls the kernel functions.
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


def _check_same_dtype(*tensors: Tensor) -> np.dtype:
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise TypeError(f"mixed dtypes in one kernel: {dt} vs {t.data.dtype}")
    return dt


def _check_4d(t: Tensor, what: str) -> None:
    if t.data.ndim != 4:
        raise ValueError(f"{what} must be 4-D (n, c, h, w), got shape {t.data.shape}")


# ---------------------------------------------------------------------------
# elementwise / reduction primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"add: shape mismatch {a.data.shape} vs {b.data.shape}")
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return Tensor._from_op(out_data, (a, b), backward, "add output")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul: shape mismatch {a.data.shape} vs {b.data.shape}")
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return Tensor._from_op(out_data, (a, b), backward, "mul output")


def scale(a: Tensor, k: float) -> Tensor:
    k = float(k)
    if not math.isfinite(k):
        raise NonFiniteError("scale factor is not finite")
    out_data = a.data * a.data.dtype.type(k)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * a.data.dtype.type(k))

    return Tensor._from_op(out_data, (a,), backward, "scale output")


def sum_all(a: Tensor) -> Tensor:
    out_data = a.data.sum(dtype=a.data.dtype).reshape(1, 1, 1, 1)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g.reshape(()), a.data.shape).astype(a.data.dtype))

    return Tensor._from_op(out_data, (a,), backward, "sum output")


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0))

    return Tensor._from_op(out_data, (a,), backward, "relu output")


def reshape(a: Tensor, shape: tuple) -> Tensor:
    out_data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return Tensor._from_op(out_data, (a,), backward, "reshape output")


def transpose_last2(a: Tensor) -> Tensor:
    out_data = np.swapaxes(a.data, -1, -2)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.swapaxes(g, -1, -2))

    return Tensor._from_op(out_data, (a,), backward, "transpose output")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes; batch dims must agree."""
    _check_same_dtype(a, b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.shape[:-2] != b.data.shape[:-2]:
        raise ValueError(f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul: inner dims differ {a.data.shape} @ {b.data.shape}")
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            b._accumulate(np.matmul(np.swapaxes(a.data, -1, -2), g))

    return Tensor._from_op(out_data, (a, b), backward, "matmul output")


# ---------------------------------------------------------------------------
# atrous convolution
# ---------------------------------------------------------------------------

@dataclass
class ConvSpec:
    """One convolution's weights and geometry.

    kernel is (out_c, in_c, kh, kw); bias, when present, is (out_c,).
    rate >= 1 spaces the taps ``rate`` pixels apart (rate 1 is a standard
    convolution); padding is symmetric zero padding per side.
    """

    kernel: Tensor
    bias: Optional[Tensor] = None
    rate: int = 1
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kernel.data.ndim != 4:
            raise ValueError(f"kernel must be (out_c, in_c, kh, kw), got {self.kernel.data.shape}")
        if self.rate < 1:
            raise ValueError(f"rate must be >= 1, got {self.rate}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        if self.bias is not None and self.bias.data.shape != (self.kernel.data.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.data.shape} does not match out_c {self.kernel.data.shape[0]}"
            )

    def effective_extent(self) -> tuple[int, int]:
        _, _, kh, kw = self.kernel.data.shape
        return (kh - 1) * self.rate + 1, (kw - 1) * self.rate + 1


def conv2d_atrous(x: Tensor, spec: ConvSpec) -> Tensor:
    """Atrous (dilated) 2-D convolution with zero padding.

    out[n, o, i, j] = sum_c sum_k x[n, c, i*stride + rate*kh - pad, ...] * kernel[o, c, kh, kw] + bias[o]
    with zeros outside the padded support. Output spatial size follows
    (in + 2*pad - effective_extent) // stride + 1.
    """
    _check_4d(x, "conv input")
    _check_same_dtype(x, spec.kernel, *( (spec.bias,) if spec.bias is not None else () ))
    _require_finite(x.data, "conv input")
    n, c, h, w = x.data.shape
    o, kc, kh, kw = spec.kernel.data.shape
    if kc != c:
        raise ValueError(f"conv input has {c} channels but kernel expects {kc}")
    r, s, p = spec.rate, spec.stride, spec.padding
    eff_h, eff_w = spec.effective_extent()
    if eff_h > h + 2 * p or eff_w > w + 2 * p:
        raise ValueError(
            f"effective kernel extent ({eff_h}x{eff_w}) exceeds padded input "
            f"({h + 2 * p}x{w + 2 * p}) at rate {r}"
        )
    oh = (h + 2 * p - eff_h) // s + 1
    ow = (w + 2 * p - eff_w) // s + 1

    if p > 0:
        xp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=x.data.dtype)
        xp[:, :, p : p + h, p : p + w] = x.data
    else:
        xp = x.data

    if kh == 1 and kw == 1 and s == 1 and p == 0:
        cols = xp.reshape(n, c, oh * ow)
    else:
        gather = np.empty((n, c, kh, kw, oh, ow), dtype=x.data.dtype)
        for i in range(kh):
            hi = i * r
            for j in range(kw):
                wj = j * r
                gather[:, :, i, j] = xp[:, :, hi : hi + (oh - 1) * s + 1 : s, wj : wj + (ow - 1) * s + 1 : s]
        cols = gather.reshape(n, c * kh * kw, oh * ow)

    w2 = spec.kernel.data.reshape(o, c * kh * kw)
    out_data = np.matmul(w2, cols)
    if spec.bias is not None:
        out_data += spec.bias.data.reshape(1, o, 1)
    out_data = out_data.reshape(n, o, oh, ow)

    kernel, bias = spec.kernel, spec.bias

    def backward(g):
        g3 = g.reshape(n, o, oh * ow)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g3.sum(axis=(0, 2)))
        if kernel.requires_grad:
            dw2 = np.matmul(g3, cols.transpose(0, 2, 1)).sum(axis=0)
            kernel._accumulate(dw2.reshape(o, c, kh, kw))
        if x.requires_grad:
            dcols = np.matmul(w2.T, g3)
            if kh == 1 and kw == 1 and s == 1 and p == 0:
                x._accumulate(dcols.reshape(n, c, h, w))
            else:
                dxp = np.zeros_like(xp)
                dg = dcols.reshape(n, c, kh, kw, oh, ow)
                for i in range(kh):
                    hi = i * r
                    for j in range(kw):
                        wj = j * r
                        dxp[:, :, hi : hi + (oh - 1) * s + 1 : s, wj : wj + (ow - 1) * s + 1 : s] += dg[:, :, i, j]
                x._accumulate(dxp[:, :, p : p + h, p : p + w] if p > 0 else dxp)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor._from_op(out_data, parents, backward, "conv output")


# ---------------------------------------------------------------------------
# bilinear resize
# ---------------------------------------------------------------------------

_resize_matrix_cache: dict[tuple, np.ndarray] = {}


def _resize_matrix(n_in: int, n_out: int, align_corners: bool) -> np.ndarray:
    """(n_out, n_in) interpolation matrix for one axis, float64.

    Out-of-range source coordinates are clamped to the edge, so every row
    sums to 1 and constants are preserved exactly.
    """
    key = (n_in, n_out, align_corners)
    mat = _resize_matrix_cache.get(key)
    if mat is not None:
        return mat
    if align_corners and n_out > 1:
        src = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    elif align_corners:
        src = np.zeros(1)
    else:
        src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
        src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i0 = np.clip(i0, 0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(mat, (rows, i0), 1.0 - frac)
    np.add.at(mat, (rows, i1), frac)
    if len(_resize_matrix_cache) > 256:
        _resize_matrix_cache.clear()
    _resize_matrix_cache[key] = mat
    return mat


def bilinear_resize(x: Tensor, out_h: int, out_w: int, align_corners: bool = False) -> Tensor:
    """Separable bilinear interpolation to (out_h, out_w).

    With align_corners=True and the output size equal to the input size the
    interpolation matrices are exact identities, so the output is the input.
    """
    _check_4d(x, "resize input")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize target must be >= 1x1, got {out_h}x{out_w}")
    _require_finite(x.data, "resize input")
    n, c, h, w = x.data.shape
    wh = _resize_matrix(h, out_h, align_corners).astype(x.data.dtype)
    ww = _resize_matrix(w, out_w, align_corners).astype(x.data.dtype)
    out_data = np.matmul(wh, np.matmul(x.data, ww.T))

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.matmul(wh.T, np.matmul(g, ww)))

    return Tensor._from_op(out_data, (x,), backward, "resize output")


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str = "train",
    momentum: float = 0.1,
    epsilon: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over (n, h, w).

    Train mode normalizes by batch statistics (population variance) and
    updates the running arrays in place with ``(1 - momentum) * old +
    momentum * new`` (unbiased variance for the running estimate). Eval mode
    normalizes by the running statistics and never mutates them.
    """
    _check_4d(x, "batchnorm input")
    _check_same_dtype(x, gamma, beta)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    n, c, h, w = x.data.shape
    for name, arr in (("gamma", gamma.data), ("beta", beta.data),
                      ("running_mean", running_mean), ("running_var", running_var)):
        if arr.shape != (c,):
            raise ValueError(f"{name} must have shape ({c},), got {arr.shape}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    _require_finite(x.data, "batchnorm input")

    m = n * h * w
    if mode == "train":
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        unbiased = var * (m / (m - 1)) if m > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mu = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)

    inv_std = 1.0 / np.sqrt(var + epsilon)
    inv_std = inv_std.astype(x.data.dtype)
    mu = mu.astype(x.data.dtype)
    xhat = (x.data - mu.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out_data = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2, 3)))
        if not x.requires_grad:
            return
        gam = gamma.data.reshape(1, c, 1, 1)
        istd = inv_std.reshape(1, c, 1, 1)
        if mode == "eval":
            x._accumulate(g * gam * istd)
            return
        dxhat = g * gam
        centered = x.data - mu.reshape(1, c, 1, 1)
        dvar = (dxhat * centered).sum(axis=(0, 2, 3)) * (-0.5) * inv_std ** 3
        dmu = -(dxhat * istd).sum(axis=(0, 2, 3)) + dvar * (-2.0 / m) * centered.sum(axis=(0, 2, 3))
        dx = (
            dxhat * istd
            + dvar.reshape(1, c, 1, 1) * (2.0 / m) * centered
            + dmu.reshape(1, c, 1, 1) / m
        )
        x._accumulate(dx.astype(x.data.dtype))

    return Tensor._from_op(out_data, (x, gamma, beta), backward, "batchnorm output")


# ---------------------------------------------------------------------------
# pooling / concat / softmax
# ---------------------------------------------------------------------------

def global_avg_pool(x: Tensor) -> Tensor:
    """Spatial mean per channel, returned as (n, c, 1, 1)."""
    _check_4d(x, "pool input")
    n, c, h, w = x.data.shape
    out_data = x.data.mean(axis=(2, 3), keepdims=True)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g / (h * w), x.data.shape).astype(x.data.dtype))

    return Tensor._from_op(out_data, (x,), backward, "pool output")


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise ValueError("concat_channels needs at least one tensor")
    _check_same_dtype(*tensors)
    first = tensors[0].data.shape
    for t in tensors:
        _check_4d(t, "concat input")
        n, _, h, w = t.data.shape
        if (n, h, w) != (first[0], first[2], first[3]):
            raise ValueError(
                f"concat_channels: batch/spatial mismatch {t.data.shape} vs {first}"
            )
    out_data = np.concatenate([t.data for t in tensors], axis=1)
    splits = np.cumsum([t.data.shape[1] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=1)):
            if t.requires_grad:
                t._accumulate(piece)

    return Tensor._from_op(out_data, tuple(tensors), backward, "concat output")


def softmax_channels(x: Tensor) -> Tensor:
    """Softmax over the channel axis at every pixel; rows sum to 1."""
    _check_4d(x, "softmax input")
    _require_finite(x.data, "softmax input")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * out_data).sum(axis=1, keepdims=True)
            x._accumulate(out_data * (g - dot))

    return Tensor._from_op(out_data, (x,), backward, "softmax output")
