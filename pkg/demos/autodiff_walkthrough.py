"""Reverse-mode differentiation on a small expression, checked two ways.

Builds  loss = sum(relu(A @ x + b) * w),  runs one backward pass, then
re-derives a few gradient entries by central finite differences.  The same
machinery (grad_check) is what the test suite sweeps over every operation.
"""

import numpy as np

from triseg.optim import collect_gradient, grad_check
from triseg.tensor import Tensor, add, matmul, mul, relu, sum_all


def build_loss(A, x, b, w):
    h = relu(add(matmul(A, x), b))
    return sum_all(mul(h, w))


if __name__ == "__main__":
    rng = np.random.default_rng(42)
    A = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    x = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    w = Tensor(rng.standard_normal((4, 2)))

    loss = build_loss(A, x, b, w)
    loss.backward()
    print(f"loss = {float(loss.data.reshape(-1)[0]):+.6f}\n")

    print("entry        analytic        finite-diff     |error|")
    h = 1e-6
    for (name, t), (i, j) in [(("A", A), (0, 0)), (("A", A), (2, 1)),
                              (("x", x), (1, 0)), (("b", b), (3, 1))]:
        grad = collect_gradient(t)[i, j]
        keep = t.data[i, j]
        t.data[i, j] = keep + h
        up = float(build_loss(A, x, b, w).data.reshape(-1)[0])
        t.data[i, j] = keep - h
        dn = float(build_loss(A, x, b, w).data.reshape(-1)[0])
        t.data[i, j] = keep
        fd = (up - dn) / (2 * h)
        print(f"{name}[{i},{j}]    {grad:+.10f}   {fd:+.10f}   {abs(grad - fd):.2e}")

    worst = grad_check(lambda: build_loss(A, x, b, w), [A, x, b],
                       rng=np.random.default_rng(0))
    print(f"\ngrad_check over every coordinate: worst relative error {worst:.2e}")
