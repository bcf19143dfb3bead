"""Render a synthetic head phantom as ASCII, one axial slice per panel.

Each case packs soft tissue, a bone ring, vessel-like tubes, and a handful of
bright lesion foci into a seeded volume; the paired mask marks the foci only.
Intensities are in Hounsfield-like units, so the soft-tissue window has to be
applied before anything is visible.
"""

import argparse

import numpy as np

from triseg.phantom import PhantomConfig, generate_phantom
from triseg.preprocess import WindowSpec, hu_window_normalize, nearest_resize
from triseg.volume import Axis, extract_slices

RAMP = " .:-=+*#%@"


def ascii_panel(image: np.ndarray, width: int) -> list[str]:
    h = max(1, round(width * image.shape[0] / image.shape[1] / 2))  # chars are tall
    small = nearest_resize(image, h, width)
    idx = np.clip((small / 255.0 * (len(RAMP) - 1)).round().astype(int),
                  0, len(RAMP) - 1)
    return ["".join(RAMP[v] for v in row) for row in idx]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--size", type=int, default=64, help="cubic volume edge")
    ap.add_argument("--panels", type=int, default=3, help="slices to render")
    ap.add_argument("--width", type=int, default=56, help="panel width in chars")
    args = ap.parse_args()

    cfg = PhantomConfig(dims=(args.size,) * 3)
    volume, mask = generate_phantom(cfg, seed=args.seed)
    windowed = hu_window_normalize(volume, WindowSpec())

    print(f"seed {args.seed}: HU range [{volume.min():.0f}, {volume.max():.0f}], "
          f"foreground fraction {mask.mean():.4f} "
          f"({int(mask.sum())} of {mask.size} voxels)\n")

    slices = extract_slices(windowed, Axis.AXIAL)
    mask_slices = extract_slices(mask, Axis.AXIAL)
    picks = np.linspace(0, len(slices) - 1, args.panels + 2)[1:-1].round().astype(int)
    for z in picks:
        fg = int(mask_slices[z].sum())
        print(f"axial slice {z}  ({fg} foreground pixels)")
        for line in ascii_panel(slices[z].astype(np.float64), args.width):
            print("  " + line)
        if fg:
            print("  mask:")
            m = (mask_slices[z] * 255).astype(np.float64)
            for line in ascii_panel(m, args.width):
                print("  " + line)
        print()


if __name__ == "__main__":
    main()
