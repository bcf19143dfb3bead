# The self-attention block is wired as a residual: y = W(attend(x)) + x.
# With W initialised to zero the block is an exact identity, so a freshly
# built model behaves as if the block were absent and training decides how
# much global context to mix in.  This script demonstrates both regimes and
# the block's permutation equivariance over spatial positions.

import numpy as np

from triseg.model import attention_weighted_average, nonlocal_attention
from triseg.tensor import ConvSpec, Tensor

rng = np.random.default_rng(7)
x = rng.standard_normal((1, 4, 6, 6))

zero_w = ConvSpec(Tensor(np.zeros((4, 4, 1, 1))))
out = nonlocal_attention(Tensor(x), zero_w).data
print("zero-initialised projection:")
print(f"  max |out - x| = {np.abs(out - x).max():.1e}  (exact identity)")

rand_w = ConvSpec(Tensor(0.1 * rng.standard_normal((4, 4, 1, 1))))
out = nonlocal_attention(Tensor(x), rand_w).data
print("random projection:")
print(f"  max |out - x| = {np.abs(out - x).max():.3f}  (context now mixed in)")

# every output position is a similarity-weighted average over *all* positions,
# so shuffling the positions shuffles the outputs the same way
flat = x.reshape(1, 4, 36)
perm = rng.permutation(36)
shuffled = flat[:, :, perm].reshape(1, 4, 6, 6)
y = attention_weighted_average(Tensor(x)).data.reshape(1, 4, 36)
y_shuffled = attention_weighted_average(Tensor(shuffled)).data.reshape(1, 4, 36)
print("permutation equivariance:")
print(f"  max |attend(shuffle(x)) - shuffle(attend(x))| = "
      f"{np.abs(y_shuffled - y[:, :, perm]).max():.1e}")

# the weighted average itself: a constant field is its own average scaled by
# the shared similarity, so structure only matters when positions differ
const = np.full((1, 2, 3, 3), 2.0)
avg = attention_weighted_average(Tensor(const)).data
print("constant field sanity check:")
print(f"  attend(c)[every position] = {avg.reshape(-1)[0]:.1f} "
      f"(= |c|^2 * c = {2.0**2 * 2 * 2:.1f} with 2 channels)")
