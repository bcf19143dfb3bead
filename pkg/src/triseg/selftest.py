"""Built-in sanity suite: re-derives a handful of kernel results with naive
reference code and checks them against the fast implementations. Run via the
``selftest`` CLI subcommand on a fresh install; the pytest suite carries the
exhaustive versions.
"""

from __future__ import annotations

import itertools
import tempfile
from pathlib import Path

import numpy as np

from .model import nonlocal_attention
from .mvol import read_mvol, write_mvol
from .optim import grad_check
from .tensor import ConvSpec, Tensor, bilinear_resize, conv2d_atrous
from .volume import majority_vote


def _naive_conv(x, k, bias, rate, stride, pad):
    n, c, h, w = x.shape
    oc, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - ((kh - 1) * rate + 1)) // stride + 1
    ow = (w + 2 * pad - ((kw - 1) * rate + 1)) // stride + 1
    out = np.zeros((n, oc, oh, ow))
    for b, o, i, j in itertools.product(range(n), range(oc), range(oh), range(ow)):
        acc = 0.0
        for ci, ki, kj in itertools.product(range(c), range(kh), range(kw)):
            acc += xp[b, ci, i * stride + rate * ki, j * stride + rate * kj] * k[o, ci, ki, kj]
        out[b, o, i, j] = acc + (bias[o] if bias is not None else 0.0)
    return out


def _naive_attention(x, w):
    n, c, h, w_ = x.shape
    pos = h * w_
    flat = x.reshape(n, c, pos)
    y = np.zeros_like(flat)
    for b in range(n):
        for i in range(pos):
            for j in range(pos):
                y[b, :, i] += (flat[b, :, i] @ flat[b, :, j]) * flat[b, :, j]
    y /= pos
    proj = np.einsum("oc,bcp->bop", w[:, :, 0, 0], y)
    return (proj + flat).reshape(x.shape)


def _check_conv(rng):
    worst = 0.0
    for _ in range(5):
        rate = int(rng.integers(1, 4))
        x = rng.standard_normal((2, 2, 11, 11))
        k = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        spec = ConvSpec(Tensor(k), bias=Tensor(b), rate=rate, stride=1, padding=rate)
        got = conv2d_atrous(Tensor(x), spec).data
        worst = max(worst, float(np.abs(got - _naive_conv(x, k, b, rate, 1, rate)).max()))
    return worst <= 1e-12, f"max abs diff {worst:.2e}"


def _check_attention(rng):
    x = rng.standard_normal((1, 3, 4, 4))
    w = rng.standard_normal((3, 3, 1, 1))
    got = nonlocal_attention(Tensor(x), ConvSpec(Tensor(w))).data
    diff = float(np.abs(got - _naive_attention(x, w)).max())
    return diff <= 1e-12, f"max abs diff {diff:.2e}"


def _check_gradients(rng):
    x = Tensor(rng.standard_normal((1, 2, 6, 6)), requires_grad=True)
    k = Tensor(rng.standard_normal((2, 2, 3, 3)) * 0.5, requires_grad=True)
    w = Tensor(rng.standard_normal((2, 2, 1, 1)) * 0.5, requires_grad=True)

    def loss_fn():
        y = conv2d_atrous(x, ConvSpec(k, rate=2, padding=2))
        z = nonlocal_attention(y, ConvSpec(w))
        from .tensor import mul, sum_all
        return sum_all(mul(z, z))

    err = grad_check(loss_fn, [x, k, w], rng=rng)
    return err < 1e-5, f"max rel err {err:.2e}"


def _check_voting():
    for bits in itertools.product((0, 1), repeat=3):
        expected = 1 if sum(bits) >= 2 else 0
        got = majority_vote(*[np.full((2, 2, 2), b, dtype=np.uint8) for b in bits])
        if not (got == expected).all():
            return False, f"combo {bits} voted {int(got.flat[0])}, expected {expected}"
    return True, "all 8 combinations correct"


def _check_resize():
    x = Tensor(np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4))
    same = bilinear_resize(x, 4, 4, align_corners=True).data
    diff = float(np.abs(same - x.data).max())
    return diff == 0.0, f"identity resize diff {diff:.2e}"


def _check_mvol(rng):
    vol = rng.standard_normal((5, 4, 3)).astype(np.float32)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "roundtrip.mvol"
        write_mvol(path, vol)
        back = read_mvol(path)
    ok = np.array_equal(vol, back)
    return ok, "bit-exact round-trip" if ok else "payload mismatch"


def run_selftest() -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(2024)
    results = [
        ("atrous convolution vs naive loop oracle", *_check_conv(rng)),
        ("non-local attention vs O(N^2) oracle", *_check_attention(rng)),
        ("gradients vs central finite differences", *_check_gradients(rng)),
        ("majority vote truth table", *_check_voting()),
        ("bilinear resize identity", *_check_resize()),
        ("mvol round-trip", *_check_mvol(rng)),
    ]
    return [(name, ok, detail) for name, ok, detail in results]
