"""How dilation grows a kernel's reach without adding weights.

Feeds a single-pixel impulse through a 3x3 convolution at increasing rates
and prints where the taps land.  The footprint spreads with the rate while
the parameter count and the output resolution stay fixed -- the property the
pyramid head relies on.
"""

import numpy as np

from triseg.tensor import ConvSpec, Tensor, conv2d_atrous

SIZE = 15
CENTER = SIZE // 2


def impulse_response(rate: int) -> np.ndarray:
    x = np.zeros((1, 1, SIZE, SIZE))
    x[0, 0, CENTER, CENTER] = 1.0
    kernel = Tensor(np.ones((1, 1, 3, 3)))
    # padding rate*(3-1)//2 == rate keeps the output at SIZE x SIZE
    spec = ConvSpec(kernel, rate=rate, padding=rate)
    return conv2d_atrous(Tensor(x), spec).data[0, 0]


def render(grid: np.ndarray) -> list[str]:
    return ["".join("#" if v != 0 else "." for v in row) for row in grid]


if __name__ == "__main__":
    rates = (1, 2, 3, 5)
    panels = []
    for rate in rates:
        resp = impulse_response(rate)
        eff = ConvSpec(Tensor(np.ones((1, 1, 3, 3))), rate=rate).effective_extent()
        header = f"rate {rate} (extent {eff[0]}x{eff[1]})".ljust(SIZE + 3)
        panels.append([header] + [r + "   " for r in render(resp)])

    print("3x3 kernel impulse response; '#' marks a tap location\n")
    for row in zip(*panels):
        print("".join(row))

    print()
    for rate in rates:
        resp = impulse_response(rate)
        print(f"rate {rate}: taps {int(np.count_nonzero(resp))}, "
              f"output {resp.shape[0]}x{resp.shape[1]} (unchanged), "
              f"span {(3 - 1) * rate + 1} pixels")
